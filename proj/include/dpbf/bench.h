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

#ifndef DPBF_BENCH_H_
#define DPBF_BENCH_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dpbf/analysis.h"
#include "dpbf/autograd.h"
#include "dpbf/nn.h"

namespace dpbf {

// One measured configuration. Byte columns are ledger peaks during a step.
struct BenchRow {
  std::string method;
  std::size_t B = 0;
  std::size_t T = 0;
  std::string model_tag;
  double step_wall_seconds = 0.0;  // median over completed reps
  std::size_t peak_bytes = 0;
  std::size_t activation_cache_bytes = 0;
  std::size_t per_sample_grad_bytes = 0;
  // Privacy-only phases (norms, aggregation, clipping, noise, and any
  // second backward); 0 for non-private methods.
  double dp_overhead_seconds = 0.0;
  // Per-sample norm computation inside the backward pass.
  double norm_phase_seconds = 0.0;
  std::optional<std::size_t> max_batch;
  std::optional<double> throughput;  // samples per second at max_batch
  int completed_reps = 0;
  bool flagged = false;  // some rep produced a non-finite loss
};

inline constexpr const char* kBenchHeader =
    "method,B,T,model_tag,step_wall_seconds,peak_bytes,"
    "activation_cache_bytes,per_sample_grad_bytes,dp_overhead_seconds,"
    "norm_phase_seconds,max_batch,throughput,completed_reps,flag";

void WriteBenchCsv(std::ostream& out, const std::vector<BenchRow>& rows);

// Methods that can be measured (every Method except the LoRA/Adapter
// cost-model entries).
bool IsBenchable(Method method);

// Synthetic bench model: its network, per-sample input shape and number of
// classes per token.
struct BenchModel {
  std::string tag;
  std::vector<Layer> layers;
  Shape sample_shape;  // [T, d]
};

// Linear(d, p) applied token-wise to [B, T, d] with per-token labels.
BenchModel LinearBenchModel(std::size_t T, std::size_t d, std::size_t p);
// Linear(w, w), ReLU, Linear(w, w) applied token-wise.
BenchModel MlpBenchModel(std::size_t T, std::size_t width);

struct TimingOptions {
  int warmups = 2;
  int reps = 5;
};

// Runs one gradient computation (no optimizer update) of `method` on a
// fresh batch of `batch_size` samples. Exposed for tests.
struct StepMeasurement {
  double wall_seconds = 0.0;
  double dp_overhead_seconds = 0.0;
  double norm_phase_seconds = 0.0;
  std::size_t peak_bytes = 0;
  std::size_t activation_cache_bytes = 0;
  std::size_t per_sample_grad_bytes = 0;
  bool finite = true;
};
StepMeasurement MeasureStep(const BenchModel& model, Method method,
                            std::size_t batch_size, std::uint64_t seed);

// Timed and ledger-peaked row for one (method, model, B).
BenchRow MeasureRow(const BenchModel& model, Method method,
                    std::size_t batch_size, const TimingOptions& timing,
                    std::uint64_t seed);

struct ScalingOptions {
  std::vector<Method> methods;
  std::vector<std::size_t> t_values;
  std::size_t batch_size = 32;
  std::size_t d = 64;
  std::size_t p = 64;
  TimingOptions timing;
  std::uint64_t seed = 0;
};

// One row per (method, T), sorted by (method name, T). Runs with the ledger
// in strict mode.
std::vector<BenchRow> BenchScaling(const ScalingOptions& options);

struct ModelsOptions {
  std::vector<Method> methods;
  std::vector<std::size_t> widths;
  std::size_t T = 16;
  std::size_t memory_budget_bytes = 64u << 20;
  std::size_t batch_cap = 1u << 16;
  TimingOptions timing;
  std::uint64_t seed = 0;
};

// Ledger peak of one step at the given batch size.
std::size_t PeakBytesAt(const BenchModel& model, Method method,
                        std::size_t batch_size, std::uint64_t seed);

// Largest B in [1, cap] whose peak fits the budget, by doubling then
// bisection (assumes the peak grows with B); 0 when B = 1 does not fit.
std::size_t MaxBatch(const BenchModel& model, Method method,
                     std::size_t budget_bytes, std::size_t cap,
                     std::uint64_t seed);

// Rows for every (method, width) with max_batch and throughput at that
// batch size. Throws ConfigError when no method fits B = 1 on some model.
std::vector<BenchRow> BenchModels(const ModelsOptions& options);

}  // namespace dpbf

#endif  // DPBF_BENCH_H_
