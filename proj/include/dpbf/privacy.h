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

#ifndef DPBF_PRIVACY_H_
#define DPBF_PRIVACY_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dpbf/autograd.h"
#include "dpbf/nn.h"
#include "dpbf/rng.h"
#include "dpbf/tensor.h"

namespace dpbf {

enum class ClipKind { kAbadi, kAutoS, kNoClip };

std::string ClipKindName(ClipKind kind);

// Per-sample clipping function C(x; R). Abadi and AUTO-S satisfy
// C(x) * x <= R for every x >= 0.
struct ClippingFn {
  ClipKind kind = ClipKind::kAutoS;
  double threshold = 1.0;
  double gamma = 0.01;

  static ClippingFn Abadi(double threshold);
  static ClippingFn AutoS(double threshold, double gamma = 0.01);
  static ClippingFn NoClip();
};

struct PrivacySpec {
  double q = 1.0;
  double sigma = 0.0;
  ClippingFn clipping;
  std::int64_t steps = 1;
  // NoClip with sigma > 0 gives no guarantee; it needs this acknowledgment.
  bool allow_nonprivate = false;

  void Validate() const;
};

// Each index of [0, n) independently with probability q, ascending.
std::vector<std::size_t> PoissonSample(std::size_t n, double q,
                                       SeededRng& rng);

// Abadi: min(R / x, 1) (1 at x = 0); AUTO-S: R / (x + gamma); NoClip: 1.
double ClipFactor(double norm, const ClippingFn& fn);

// sqrt of the per-sample sum over layers of squared norms.
std::vector<double> AggregateNorm(
    const std::vector<std::vector<double>>& per_layer_norm_sq);

// clipped_sum + sigma * R * N(0, I), elements in row-major order. Returns
// the input unchanged when sigma * R == 0.
Tensor NoisySum(const Tensor& clipped_sum, double sigma, double threshold,
                SeededRng& rng);

enum class FullStrategy { kOpacus, kGhost, kMixed };

std::string FullStrategyName(FullStrategy strategy);

struct PrivateGradient {
  // sum_i C_i g_i per trainable parameter, registry order.
  Gradients clipped_sum;
  // clipped_sum plus noise drawn parameter by parameter in registry order.
  Gradients noisy;
  std::vector<double> per_sample_norms;
  std::vector<double> factors;
  double loss = 0.0;
  StepProfile profile;
};

// One DP-BiTFiT iteration: activation-free forward, a single backward that
// instantiates B x p per-sample bias gradients, clipping, noise.
PrivateGradient DpBitFitStep(const Network& net, const Batch& batch,
                             const PrivacySpec& spec, SeededRng& noise_rng);

// DP full fine-tuning. Opacus instantiates per-sample gradients in one
// backward; GhostClip and MixGhostClip compute norms in a first pass and
// take the clipped sum from a reweighted second pass.
PrivateGradient DpFullStep(const Network& net, const Batch& batch,
                           const PrivacySpec& spec, FullStrategy strategy,
                           SeededRng& noise_rng);

}  // namespace dpbf

#endif  // DPBF_PRIVACY_H_
