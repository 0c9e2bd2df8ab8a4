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

#include "dpbf/privacy.h"

#include <chrono>
#include <cmath>
#include <utility>

#include "dpbf/errors.h"
#include "dpbf/ledger.h"

namespace dpbf {
namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Gradients ZeroGradients(const Network& net) {
  LedgerScope scope(kTagGradient);
  Gradients out;
  for (const ConstParamRef& p : net.TrainableParameters()) {
    out.Add(p.name, Tensor(p.tensor->shape()));
  }
  return out;
}

void AddNoise(PrivateGradient& r, const PrivacySpec& spec, SeededRng& rng) {
  const auto start = Clock::now();
  LedgerScope scope(kTagGradient);
  for (std::size_t i = 0; i < r.clipped_sum.size(); ++i) {
    r.noisy.Add(r.clipped_sum.name(i),
                NoisySum(r.clipped_sum.value(i), spec.sigma,
                         spec.clipping.threshold, rng));
  }
  r.profile.noise_seconds = SecondsSince(start);
}

// Norms, factors and the empty-batch case shared by every strategy. Returns
// false when the batch is empty and the result is already complete.
bool HandleEmpty(const Network& net, const Batch& batch,
                 const PrivacySpec& spec, SeededRng& rng, PrivateGradient& r) {
  if (batch.size() > 0) return true;
  r.clipped_sum = ZeroGradients(net);
  AddNoise(r, spec, rng);
  return false;
}

void ComputeFactors(const std::vector<std::vector<double>>& norm_sq,
                    const PrivacySpec& spec, PrivateGradient& r) {
  const auto start = Clock::now();
  r.per_sample_norms = AggregateNorm(norm_sq);
  r.factors.resize(r.per_sample_norms.size());
  for (std::size_t i = 0; i < r.factors.size(); ++i) {
    r.factors[i] = ClipFactor(r.per_sample_norms[i], spec.clipping);
  }
  r.profile.aggregate_seconds = SecondsSince(start);
}

}  // namespace

std::string ClipKindName(ClipKind kind) {
  switch (kind) {
    case ClipKind::kAbadi:
      return "abadi";
    case ClipKind::kAutoS:
      return "autos";
    case ClipKind::kNoClip:
      return "noclip";
  }
  return "unknown";
}

std::string FullStrategyName(FullStrategy strategy) {
  switch (strategy) {
    case FullStrategy::kOpacus:
      return "opacus";
    case FullStrategy::kGhost:
      return "ghost";
    case FullStrategy::kMixed:
      return "mixed";
  }
  return "unknown";
}

ClippingFn ClippingFn::Abadi(double threshold) {
  return {ClipKind::kAbadi, threshold, 0.01};
}

ClippingFn ClippingFn::AutoS(double threshold, double gamma) {
  return {ClipKind::kAutoS, threshold, gamma};
}

ClippingFn ClippingFn::NoClip() { return {ClipKind::kNoClip, 1.0, 0.01}; }

void PrivacySpec::Validate() const {
  if (!(q > 0.0 && q <= 1.0)) {
    throw ParameterError("sampling rate q must lie in (0, 1], got " +
                         std::to_string(q));
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ParameterError("noise multiplier must be non-negative, got " +
                         std::to_string(sigma));
  }
  if (clipping.kind != ClipKind::kNoClip &&
      !(clipping.threshold > 0.0 && std::isfinite(clipping.threshold))) {
    throw ParameterError("clipping threshold R must be positive");
  }
  if (clipping.kind == ClipKind::kAutoS && !(clipping.gamma > 0.0)) {
    throw ParameterError("AUTO-S stability constant must be positive");
  }
  if (clipping.kind == ClipKind::kNoClip && sigma > 0.0 && !allow_nonprivate) {
    throw PolicyError(
        "NoClip with sigma > 0 has no privacy guarantee; set the non-private "
        "acknowledgment to run it anyway");
  }
  if (steps < 1) throw ParameterError("steps must be positive");
}

std::vector<std::size_t> PoissonSample(std::size_t n, double q,
                                       SeededRng& rng) {
  if (n < 1 || !(q > 0.0 && q <= 1.0)) {
    throw ParameterError("poisson sampling needs n >= 1 and q in (0, 1]");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (q >= 1.0 || rng.Uniform() < q) out.push_back(i);
  }
  return out;
}

double ClipFactor(double norm, const ClippingFn& fn) {
  if (!(norm >= 0.0)) {
    throw InternalError("per-sample norm must be non-negative, got " +
                        std::to_string(norm));
  }
  switch (fn.kind) {
    case ClipKind::kAbadi:
      return norm == 0.0 ? 1.0 : std::min(fn.threshold / norm, 1.0);
    case ClipKind::kAutoS:
      return fn.threshold / (norm + fn.gamma);
    case ClipKind::kNoClip:
      return 1.0;
  }
  return 1.0;
}

std::vector<double> AggregateNorm(
    const std::vector<std::vector<double>>& per_layer_norm_sq) {
  if (per_layer_norm_sq.empty()) return {};
  const std::size_t batch = per_layer_norm_sq.front().size();
  std::vector<double> out(batch, 0.0);
  for (const std::vector<double>& layer : per_layer_norm_sq) {
    if (layer.size() != batch) {
      throw DimensionError("per-layer norm lists disagree on batch size");
    }
    for (std::size_t i = 0; i < batch; ++i) {
      if (!(layer[i] >= 0.0)) {
        throw InternalError("squared norm must be non-negative");
      }
      out[i] += layer[i];
    }
  }
  for (double& v : out) v = std::sqrt(v);
  return out;
}

Tensor NoisySum(const Tensor& clipped_sum, double sigma, double threshold,
                SeededRng& rng) {
  if (!(sigma >= 0.0) || !(threshold >= 0.0)) {
    throw ParameterError("sigma and R must be non-negative");
  }
  Tensor out = clipped_sum;
  const double std = sigma * threshold;
  if (std == 0.0) return out;
  for (double& v : out.data()) v += std * rng.Normal();
  return out;
}

PrivateGradient DpBitFitStep(const Network& net, const Batch& batch,
                             const PrivacySpec& spec, SeededRng& noise_rng) {
  spec.Validate();
  if (net.HasTrainableWeight() || !net.FirstTrainableLayer()) {
    throw PolicyError("DP-BiTFiT needs a network with trainable biases and "
                      "frozen weights");
  }
  PrivateGradient r;
  if (!HandleEmpty(net, batch, spec, noise_rng, r)) return r;

  ReportOptions opts;
  opts.keep_bias_grads = true;
  GradReport report = PerSampleReport(net, batch, opts);
  r.loss = report.loss;
  r.profile = report.profile;

  std::vector<std::vector<double>> norm_sq;
  for (const LayerGradReport& l : report.layers) {
    if (l.bias_norm_sq_per_sample) norm_sq.push_back(*l.bias_norm_sq_per_sample);
  }
  ComputeFactors(norm_sq, spec, r);

  const auto start = Clock::now();
  for (const ConstParamRef& p : net.TrainableParameters()) {
    LayerGradReport& l = report.layers[p.layer];
    r.clipped_sum.Add(p.name, WeightedSliceSum(*l.bias_grad_per_sample,
                                               r.factors));
    l.bias_grad_per_sample.reset();
  }
  r.profile.clip_seconds = SecondsSince(start);
  AddNoise(r, spec, noise_rng);
  return r;
}

PrivateGradient DpFullStep(const Network& net, const Batch& batch,
                           const PrivacySpec& spec, FullStrategy strategy,
                           SeededRng& noise_rng) {
  spec.Validate();
  if (!net.HasTrainableWeight()) {
    throw PolicyError("DP full fine-tuning needs at least one trainable "
                      "weight");
  }
  PrivateGradient r;
  if (!HandleEmpty(net, batch, spec, noise_rng, r)) return r;

  ReportOptions opts;
  switch (strategy) {
    case FullStrategy::kOpacus:
      opts.weight_path = WeightNormPath::kInstantiate;
      opts.keep_weight_grads = true;
      opts.keep_bias_grads = true;
      break;
    case FullStrategy::kGhost:
      opts.weight_path = WeightNormPath::kGhost;
      opts.keep_weight_grads = false;
      opts.keep_bias_grads = false;
      break;
    case FullStrategy::kMixed:
      opts.weight_path = WeightNormPath::kMixed;
      opts.keep_weight_grads = false;
      opts.keep_bias_grads = false;
      break;
  }
  GradReport report = PerSampleReport(net, batch, opts);
  r.loss = report.loss;
  r.profile = report.profile;

  std::vector<std::vector<double>> norm_sq;
  for (const LayerGradReport& l : report.layers) {
    if (l.weight_norm_sq_per_sample) {
      norm_sq.push_back(*l.weight_norm_sq_per_sample);
    }
    if (l.bias_norm_sq_per_sample) norm_sq.push_back(*l.bias_norm_sq_per_sample);
  }
  ComputeFactors(norm_sq, spec, r);

  const auto start = Clock::now();
  if (strategy == FullStrategy::kOpacus) {
    for (const ConstParamRef& p : net.TrainableParameters()) {
      LayerGradReport& l = report.layers[p.layer];
      std::optional<Tensor>& per_sample = p.kind == ParamKind::kWeight
                                              ? l.weight_grad_per_sample
                                              : l.bias_grad_per_sample;
      if (!per_sample) {
        throw InternalError("missing per-sample gradient for " + p.name);
      }
      r.clipped_sum.Add(p.name, WeightedSliceSum(*per_sample, r.factors));
      per_sample.reset();
    }
    r.profile.clip_seconds = SecondsSince(start);
  } else {
    report.layers.clear();
    r.clipped_sum = ReweightedBackward(net, batch, r.factors);
    r.profile.second_pass_seconds = SecondsSince(start);
  }
  AddNoise(r, spec, noise_rng);
  return r;
}

}  // namespace dpbf
