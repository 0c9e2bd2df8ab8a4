//
// Copyright 2026 The dpbf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPBF_TRAIN_H_
#define DPBF_TRAIN_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dpbf/nn.h"
#include "dpbf/optimizer.h"
#include "dpbf/privacy.h"
#include "dpbf/task.h"

namespace dpbf {

enum class FineTuneMode { kFull, kBitFit, kLinearProbe, kTwoPhase };

std::string FineTuneModeName(FineTuneMode mode);

struct PrivacySettings {
  double sigma = 1.0;
  double delta = 1e-5;
  ClippingFn clipping;
  bool allow_nonprivate = false;
};

// Learning rates are for the summed (not averaged) loss.
struct TrainConfig {
  FineTuneMode mode = FineTuneMode::kBitFit;
  // Epochs of full fine-tuning before switching to bias-only (two-phase).
  int two_phase_epochs = 0;
  int epochs = 1;
  double q = 0.1;
  std::optional<PrivacySettings> privacy;
  FullStrategy strategy = FullStrategy::kMixed;
  // optimizer.lr drives full / linear-probe phases.
  OptimizerConfig optimizer;
  // Bias-only phases; defaults to 10x optimizer.lr.
  std::optional<double> lr_bitfit;
  std::uint64_t seed = 0;
  // Per-sample input shape; empty means [dims].
  Shape sample_shape;

  void Validate() const;
};

// ceil(1 / q) iterations give one expected pass over the data.
std::int64_t StepsPerEpoch(double q);
std::int64_t TotalSteps(const TrainConfig& config);

struct EpochMetrics {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;      // mean over the training set
  double accuracy = 0.0;  // on the training set
  double eps_so_far = 0.0;
  double grad_norm_median = 0.0;
  double clip_fraction = 0.0;
};

struct PrivacyReport {
  bool enabled = false;
  double eps = 0.0;
  double delta = 0.0;
  double sigma = 0.0;
  double q = 0.0;
  std::int64_t steps = 0;
  int alpha = 0;
};

struct TrainResult {
  Network net;
  // Entry 0 is the untrained network (epoch 0, step 0).
  std::vector<EpochMetrics> history;
  PrivacyReport privacy;
};

struct Evaluation {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

Evaluation Evaluate(const Network& net, const Dataset& data,
                    const Shape& sample_shape);

// Algorithm loop: Poisson batches, private (or plain) gradients, optimizer
// updates. Deterministic given config.seed. Two-phase runs full fine-tuning
// for two_phase_epochs epochs, then freezes every weight.
TrainResult Train(Network net, const Dataset& data, const TrainConfig& config);

// Train with mode forced to two-phase and X = two_phase_epochs.
TrainResult TwoPhaseTrain(Network net, const Dataset& data,
                          TrainConfig config, int full_epochs);

void WriteMetricsCsv(std::ostream& out,
                     const std::vector<EpochMetrics>& history);
inline constexpr const char* kMetricsHeader =
    "epoch,step,loss,accuracy,eps_so_far,grad_norm_median,clip_fraction";

}  // namespace dpbf

#endif  // DPBF_TRAIN_H_
