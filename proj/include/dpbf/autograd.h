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

#ifndef DPBF_AUTOGRAD_H_
#define DPBF_AUTOGRAD_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpbf/nn.h"
#include "dpbf/tensor.h"

namespace dpbf {

struct Batch {
  Tensor inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
};

// Parameter gradients in registry order.
class Gradients {
 public:
  void Add(std::string name, Tensor value);

  std::size_t size() const { return items_.size(); }
  const std::string& name(std::size_t i) const { return items_[i].name; }
  const Tensor& value(std::size_t i) const { return items_[i].value; }
  Tensor& value(std::size_t i) { return items_[i].value; }

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;

 private:
  std::vector<NamedTensor> items_;
};

// What backward exposes for one layer with a trainable parameter.
struct LayerGrad {
  std::size_t index;
  const Layer& layer;
  // dL/ds_l in lowered [B x T x p] form.
  const Tensor& output_grad;
  // Cached a_l ([B x T x d]), or the normalized input for LayerNorm.
  // Null when the layer ran activation-free.
  const Tensor* activation;
};

using GradConsumer = std::function<void(const LayerGrad&)>;

// Reverse sweep from the loss down to the lowest trainable layer. Each
// layer's output gradient is handed to `consume` and then dropped, and each
// layer's forward record is released once used.
void Backward(const Network& net, ForwardTrace&& trace, const Tensor& dlogits,
              const GradConsumer& consume);

// Output gradient of every layer that has a trainable parameter (others
// are nullopt).
std::vector<std::optional<Tensor>> OutputGradients(const Network& net,
                                                   ForwardTrace trace,
                                                   const Tensor& dlogits);

// dL_i/db = (dL/ds_i)^T 1: [B x T x p] -> [B x p]. Never reads activations.
Tensor PerSampleBiasGrads(const Tensor& output_grad);

// a_i^T g_i per sample: [B x d x p]. Throws PolicyError when `activation`
// is null.
Tensor PerSampleWeightGrads(const Tensor* activation,
                            const Tensor& output_grad);

// LayerNorm gain: sum_t xhat_i[t] * g_i[t], [B x p].
Tensor PerSampleGainGrads(const Tensor* normalized, const Tensor& output_grad);

// ||a_i^T g_i||_F^2 from the Gram matrices a_i a_i^T and g_i g_i^T.
std::vector<double> GhostWeightNorms(const Tensor& activation,
                                     const Tensor& output_grad);

// Squared norms by instantiating the per-sample gradients.
std::vector<double> InstantiatedWeightNorms(const Tensor& activation,
                                            const Tensor& output_grad);

// Ghost path when 2T^2 <= 2pd, instantiation otherwise.
bool PrefersGhost(std::size_t tokens, std::size_t p, std::size_t d);
std::vector<double> MixedWeightNorms(const Tensor& activation,
                                     const Tensor& output_grad);

// Squared Frobenius norm of each leading-axis slice.
std::vector<double> SliceNormsSq(const Tensor& per_sample);

// sum_i weights[i] * x[i] over the leading axis, accumulated in order of i.
// With null weights every factor is 1.
Tensor WeightedSliceSum(const Tensor& per_sample,
                        std::span<const double> weights);

// Batch gradients built as the ordered sum of per-sample terms.
Tensor BatchWeightGrad(const Tensor& activation, const Tensor& output_grad);
Tensor BatchBiasGrad(const Tensor& output_grad);

struct BatchGradResult {
  Gradients grads;
  double loss = 0.0;
  std::vector<double> per_sample_loss;
};

// Gradients of the summed loss for every trainable parameter.
BatchGradResult BatchGradients(const Network& net, const Batch& batch);

// Gradients of sum_i C_i L_i; C must be finite, non-negative, one per sample.
Gradients ReweightedBackward(const Network& net, const Batch& batch,
                             std::span<const double> factors);

enum class WeightNormPath { kInstantiate, kGhost, kMixed };

struct ReportOptions {
  WeightNormPath weight_path = WeightNormPath::kInstantiate;
  // Keep per-sample weight gradients (instantiation path only).
  bool keep_weight_grads = true;
  bool keep_bias_grads = true;
  bool batch_grads = false;
};

struct LayerGradReport {
  std::optional<Tensor> bias_grad_per_sample;
  std::optional<Tensor> weight_grad_per_sample;
  std::optional<std::vector<double>> weight_norm_sq_per_sample;
  std::optional<std::vector<double>> bias_norm_sq_per_sample;
  // Which path produced the weight norm (mixed reports its choice).
  std::optional<WeightNormPath> weight_path;
};

struct StepProfile {
  double forward_seconds = 0.0;
  double backward_seconds = 0.0;
  // Per-sample norm work inside the backward sweep.
  double norm_seconds = 0.0;
  // Cross-layer aggregation and clipping factors.
  double aggregate_seconds = 0.0;
  double clip_seconds = 0.0;
  double noise_seconds = 0.0;
  double second_pass_seconds = 0.0;
};

struct GradReport {
  std::vector<LayerGradReport> layers;
  Gradients batch_grads;
  double loss = 0.0;
  std::vector<double> per_sample_loss;
  StepProfile profile;
};

// One forward and one backward, collecting per-sample information for every
// trainable parameter.
GradReport PerSampleReport(const Network& net, const Batch& batch,
                           const ReportOptions& options);

}  // namespace dpbf

#endif  // DPBF_AUTOGRAD_H_
