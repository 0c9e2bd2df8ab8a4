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

#include "dpbf/autograd.h"

#include <chrono>
#include <cmath>
#include <map>
#include <utility>

#include "dpbf/errors.h"
#include "dpbf/ledger.h"
#include "dpbf/ops.h"
#include "dpbf/parallel.h"

namespace dpbf {
namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void CheckPair(const Tensor& a, const Tensor& g) {
  if (a.rank() != 3 || g.rank() != 3 || a.dim(0) != g.dim(0) ||
      a.dim(1) != g.dim(1)) {
    throw DimensionError("activation " + a.ShapeString() +
                         " and output gradient " + g.ShapeString() +
                         " must share B and T");
  }
}

// out[k, j] += sum_t a[t, k] * g[t, j] for one sample, t ascending.
void AccumulateOuter(const double* a, const double* g, std::size_t tokens,
                     std::size_t d, std::size_t p, double* out) {
  for (std::size_t t = 0; t < tokens; ++t) {
    const double* at = a + t * d;
    const double* gt = g + t * p;
    for (std::size_t k = 0; k < d; ++k) {
      const double av = at[k];
      double* orow = out + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * gt[j];
    }
  }
}

double Dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

// Upper triangle (with diagonal) of x x^T for x [T x n].
void Gram(const double* x, std::size_t tokens, std::size_t n, double* out) {
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t s = t; s < tokens; ++s) {
      out[t * tokens + s] = Dot(x + t * n, x + s * n, n);
    }
  }
}

std::vector<double> NormsOf(const Tensor& per_sample) {
  return SliceNormsSq(per_sample);
}

}  // namespace

void Gradients::Add(std::string name, Tensor value) {
  items_.push_back({std::move(name), std::move(value)});
}

bool Gradients::contains(std::string_view name) const {
  for (const NamedTensor& it : items_) {
    if (it.name == name) return true;
  }
  return false;
}

const Tensor& Gradients::at(std::string_view name) const {
  for (const NamedTensor& it : items_) {
    if (it.name == name) return it.value;
  }
  throw InternalError("no gradient for " + std::string(name));
}

void Backward(const Network& net, ForwardTrace&& trace, const Tensor& dlogits,
              const GradConsumer& consume) {
  if (!trace.has_trainable) return;
  if (dlogits.shape() != trace.output.shape()) {
    throw DimensionError("loss gradient " + dlogits.ShapeString() +
                         " does not match network output " +
                         trace.output.ShapeString());
  }
  LedgerScope scope(kTagOutputGrad);
  Tensor grad = dlogits;
  for (std::size_t i = net.size(); i-- > trace.stop_layer;) {
    const Layer& l = net.layer(i);
    LayerRecord& rec = trace.records[i];
    const bool need_input = i > trace.stop_layer;
    auto missing = [&](const char* what) {
      return InternalError("layer " + std::to_string(i) + " (" + l.Describe() +
                           "): forward record lacks " + what);
    };
    if (l.weight_trainable && !rec.activation_cache) {
      throw missing("the activation cache");
    }
    switch (l.kind) {
      case LayerKind::kLinear: {
        const Shape shape = grad.shape();
        Tensor g3 = std::move(grad).Reshaped(AsBatchTokens(shape));
        if (l.any_trainable()) {
          consume({i, l, g3,
                   rec.activation_cache ? &*rec.activation_cache : nullptr});
        }
        if (need_input) {
          grad = MatMulTransposed(g3, *l.weight).Reshaped(rec.input_shape);
        }
        break;
      }
      case LayerKind::kConv2d: {
        Tensor g3 = ChannelsToTokens(grad);
        if (l.any_trainable()) {
          consume({i, l, g3,
                   rec.activation_cache ? &*rec.activation_cache : nullptr});
        }
        if (need_input) {
          grad = Fold2d(MatMulTransposed(g3, *l.weight), rec.input_shape,
                        l.window);
        }
        break;
      }
      case LayerKind::kLayerNorm: {
        const Shape shape = grad.shape();
        Tensor g3 = std::move(grad).Reshaped(AsBatchTokens(shape));
        if (l.any_trainable()) {
          consume({i, l, g3,
                   rec.activation_cache ? &*rec.activation_cache : nullptr});
        }
        if (need_input) {
          const Tensor* hat =
              rec.activation_cache ? &*rec.activation_cache
                                   : (rec.norm_hat ? &*rec.norm_hat : nullptr);
          if (hat == nullptr || !rec.norm_inv_std) {
            throw missing("normalization state");
          }
          const std::size_t p = l.out_features;
          const std::size_t rows = g3.numel() / p;
          Tensor dx(rec.input_shape);
          const double* gd = g3.data().data();
          const double* hd = hat->data().data();
          const double* wd = l.weight->data().data();
          double* od = dx.data().data();
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
              const double dh = gd[r * p + j] * wd[j];
              m1 += dh;
              m2 += dh * hd[r * p + j];
            }
            m1 /= static_cast<double>(p);
            m2 /= static_cast<double>(p);
            const double inv_std = (*rec.norm_inv_std)[r];
            for (std::size_t j = 0; j < p; ++j) {
              const double dh = gd[r * p + j] * wd[j];
              od[r * p + j] = inv_std * (dh - m1 - hd[r * p + j] * m2);
            }
          }
          grad = std::move(dx);
        }
        break;
      }
      case LayerKind::kReLU: {
        if (!rec.relu_mask) throw missing("the nonlinearity mask");
        for (std::size_t k = 0; k < grad.numel(); ++k) {
          if ((*rec.relu_mask)[k] == 0) grad[k] = 0.0;
        }
        break;
      }
      case LayerKind::kFlatten:
        grad = std::move(grad).Reshaped(rec.input_shape);
        break;
    }
    rec = LayerRecord{};
  }
}

std::vector<std::optional<Tensor>> OutputGradients(const Network& net,
                                                   ForwardTrace trace,
                                                   const Tensor& dlogits) {
  std::vector<std::optional<Tensor>> out(net.size());
  Backward(net, std::move(trace), dlogits, [&](const LayerGrad& lg) {
    LedgerScope scope(kTagOutputGrad);
    out[lg.index] = lg.output_grad;
  });
  return out;
}

Tensor PerSampleBiasGrads(const Tensor& output_grad) {
  LedgerScope scope(kTagPerSampleGrad);
  return SumOverT(output_grad);
}

Tensor PerSampleWeightGrads(const Tensor* activation,
                            const Tensor& output_grad) {
  if (activation == nullptr) {
    throw PolicyError("weight gradient requested in activation-free mode");
  }
  CheckPair(*activation, output_grad);
  const std::size_t batch = output_grad.dim(0), tokens = output_grad.dim(1);
  const std::size_t d = activation->dim(2), p = output_grad.dim(2);
  LedgerScope scope(kTagPerSampleGrad);
  Tensor out({batch, d, p});
  const double* ad = activation->data().data();
  const double* gd = output_grad.data().data();
  double* od = out.data().data();
  ParallelFor(batch, [&](std::size_t i) {
    AccumulateOuter(ad + i * tokens * d, gd + i * tokens * p, tokens, d, p,
                    od + i * d * p);
  });
  return out;
}

Tensor PerSampleGainGrads(const Tensor* normalized, const Tensor& output_grad) {
  if (normalized == nullptr) {
    throw PolicyError("weight gradient requested in activation-free mode");
  }
  if (normalized->shape() != output_grad.shape() || output_grad.rank() != 3) {
    throw DimensionError("normalized input " + normalized->ShapeString() +
                         " does not match output gradient " +
                         output_grad.ShapeString());
  }
  const std::size_t batch = output_grad.dim(0), tokens = output_grad.dim(1);
  const std::size_t p = output_grad.dim(2);
  LedgerScope scope(kTagPerSampleGrad);
  Tensor out({batch, p});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t j = 0; j < p; ++j) {
        out.at(b, j) += normalized->at(b, t, j) * output_grad.at(b, t, j);
      }
    }
  }
  return out;
}

std::vector<double> GhostWeightNorms(const Tensor& activation,
                                     const Tensor& output_grad) {
  CheckPair(activation, output_grad);
  const std::size_t batch = output_grad.dim(0), tokens = output_grad.dim(1);
  const std::size_t d = activation.dim(2), p = output_grad.dim(2);
  std::vector<double> out(batch, 0.0);
  const double* ad = activation.data().data();
  const double* gd = output_grad.data().data();
  LedgerScope scope(kTagGhostGram);
  ParallelFor(batch, [&](std::size_t i) {
    Tensor gram_a({tokens, tokens});
    Tensor gram_g({tokens, tokens});
    Gram(ad + i * tokens * d, tokens, d, gram_a.data().data());
    Gram(gd + i * tokens * p, tokens, p, gram_g.data().data());
    double diag = 0.0, off = 0.0;
    for (std::size_t t = 0; t < tokens; ++t) {
      diag += gram_a.at(t, t) * gram_g.at(t, t);
      for (std::size_t s = t + 1; s < tokens; ++s) {
        off += gram_a.at(t, s) * gram_g.at(t, s);
      }
    }
    out[i] = diag + 2.0 * off;
  });
  return out;
}

std::vector<double> InstantiatedWeightNorms(const Tensor& activation,
                                            const Tensor& output_grad) {
  return NormsOf(PerSampleWeightGrads(&activation, output_grad));
}

bool PrefersGhost(std::size_t tokens, std::size_t p, std::size_t d) {
  return 2 * tokens * tokens <= 2 * p * d;
}

std::vector<double> MixedWeightNorms(const Tensor& activation,
                                     const Tensor& output_grad) {
  CheckPair(activation, output_grad);
  if (PrefersGhost(output_grad.dim(1), output_grad.dim(2),
                   activation.dim(2))) {
    return GhostWeightNorms(activation, output_grad);
  }
  return InstantiatedWeightNorms(activation, output_grad);
}

std::vector<double> SliceNormsSq(const Tensor& per_sample) {
  const std::size_t batch = per_sample.rank() == 0 ? 0 : per_sample.dim(0);
  std::vector<double> out(batch, 0.0);
  if (batch == 0) return out;
  const std::size_t slice = per_sample.numel() / batch;
  const double* d = per_sample.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < slice; ++k) {
      acc += d[i * slice + k] * d[i * slice + k];
    }
    out[i] = acc;
  }
  return out;
}

Tensor WeightedSliceSum(const Tensor& per_sample,
                        std::span<const double> weights) {
  const std::size_t batch = per_sample.dim(0);
  if (!weights.empty() && weights.size() != batch) {
    throw DimensionError("need " + std::to_string(batch) + " weights, got " +
                         std::to_string(weights.size()));
  }
  Shape shape(per_sample.shape().begin() + 1, per_sample.shape().end());
  LedgerScope scope(kTagGradient);
  Tensor out(shape);
  const std::size_t slice = out.numel();
  const double* d = per_sample.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    const double c = weights.empty() ? 1.0 : weights[i];
    for (std::size_t k = 0; k < slice; ++k) od[k] += c * d[i * slice + k];
  }
  return out;
}

Tensor BatchWeightGrad(const Tensor& activation, const Tensor& output_grad) {
  CheckPair(activation, output_grad);
  const std::size_t batch = output_grad.dim(0), tokens = output_grad.dim(1);
  const std::size_t d = activation.dim(2), p = output_grad.dim(2);
  LedgerScope scope(kTagGradient);
  Tensor out({d, p});
  Tensor sample({d, p});
  const double* ad = activation.data().data();
  const double* gd = output_grad.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    std::fill(sample.data().begin(), sample.data().end(), 0.0);
    AccumulateOuter(ad + i * tokens * d, gd + i * tokens * p, tokens, d, p,
                    sample.data().data());
    for (std::size_t k = 0; k < d * p; ++k) out[k] += sample[k];
  }
  return out;
}

Tensor BatchBiasGrad(const Tensor& output_grad) {
  // Same reduction order as clipping with unit factors.
  Tensor sums = [&] {
    LedgerScope scope(kTagWorkspace);
    return SumOverT(output_grad);
  }();
  return WeightedSliceSum(sums, {});
}

namespace {

// Trainable-parameter batch gradients gathered during a backward sweep.
class BatchGradCollector {
 public:
  void operator()(const LayerGrad& lg) {
    const Layer& l = lg.layer;
    if (l.weight_trainable) {
      if (l.kind == LayerKind::kLayerNorm) {
        grads_[ParamName(lg.index, ParamKind::kWeight)] = WeightedSliceSum(
            PerSampleGainGrads(lg.activation, lg.output_grad), {});
      } else {
        if (lg.activation == nullptr) {
          throw PolicyError(
              "weight gradient requested in activation-free mode");
        }
        grads_[ParamName(lg.index, ParamKind::kWeight)] =
            BatchWeightGrad(*lg.activation, lg.output_grad);
      }
    }
    if (l.bias_trainable) {
      grads_[ParamName(lg.index, ParamKind::kBias)] =
          BatchBiasGrad(lg.output_grad);
    }
  }

  Gradients Ordered(const Network& net) {
    Gradients out;
    for (const ConstParamRef& p : net.TrainableParameters()) {
      auto it = grads_.find(p.name);
      if (it == grads_.end()) {
        throw InternalError("backward produced no gradient for " + p.name);
      }
      out.Add(p.name, std::move(it->second));
    }
    return out;
  }

 private:
  std::map<std::string, Tensor> grads_;
};

void ScaleRows(Tensor& dlogits, std::span<const double> factors) {
  const std::size_t batch = dlogits.dim(0);
  const std::size_t per_sample = dlogits.numel() / batch;
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < per_sample; ++k) {
      dlogits[i * per_sample + k] *= factors[i];
    }
  }
}

}  // namespace

BatchGradResult BatchGradients(const Network& net, const Batch& batch) {
  BatchGradResult r;
  ForwardTrace trace = Forward(net, batch.inputs);
  LossResult loss = LossSoftmaxCE(trace.output, batch.labels);
  BatchGradCollector collect;
  Backward(net, std::move(trace), loss.dlogits,
           [&](const LayerGrad& lg) { collect(lg); });
  r.grads = collect.Ordered(net);
  r.loss = loss.loss;
  r.per_sample_loss = std::move(loss.per_sample_loss);
  return r;
}

Gradients ReweightedBackward(const Network& net, const Batch& batch,
                             std::span<const double> factors) {
  if (factors.size() != batch.size()) {
    throw ParameterError("need one reweighting factor per sample: got " +
                         std::to_string(factors.size()) + " for batch of " +
                         std::to_string(batch.size()));
  }
  for (double c : factors) {
    if (!std::isfinite(c) || c < 0.0) {
      throw ParameterError("reweighting factors must be finite and "
                           "non-negative");
    }
  }
  ForwardTrace trace = Forward(net, batch.inputs);
  LossResult loss = LossSoftmaxCE(trace.output, batch.labels);
  ScaleRows(loss.dlogits, factors);
  BatchGradCollector collect;
  Backward(net, std::move(trace), loss.dlogits,
           [&](const LayerGrad& lg) { collect(lg); });
  return collect.Ordered(net);
}

GradReport PerSampleReport(const Network& net, const Batch& batch,
                           const ReportOptions& options) {
  GradReport report;
  report.layers.resize(net.size());
  auto start = Clock::now();
  ForwardTrace trace = Forward(net, batch.inputs);
  LossResult loss = LossSoftmaxCE(trace.output, batch.labels);
  report.profile.forward_seconds = SecondsSince(start);
  report.loss = loss.loss;
  report.per_sample_loss = loss.per_sample_loss;

  BatchGradCollector collect;
  double norm_seconds = 0.0;
  start = Clock::now();
  Backward(net, std::move(trace), loss.dlogits, [&](const LayerGrad& lg) {
    LayerGradReport& out = report.layers[lg.index];
    const Layer& l = lg.layer;
    if (l.bias_trainable) {
      Tensor per_sample = PerSampleBiasGrads(lg.output_grad);
      const auto t0 = Clock::now();
      out.bias_norm_sq_per_sample = SliceNormsSq(per_sample);
      norm_seconds += SecondsSince(t0);
      if (options.keep_bias_grads) out.bias_grad_per_sample = std::move(per_sample);
    }
    if (l.weight_trainable) {
      const auto t0 = Clock::now();
      if (l.kind == LayerKind::kLayerNorm) {
        // Elementwise gain: instantiation is already O(Bp).
        Tensor per_sample = PerSampleGainGrads(lg.activation, lg.output_grad);
        out.weight_norm_sq_per_sample = SliceNormsSq(per_sample);
        out.weight_path = WeightNormPath::kInstantiate;
        if (options.keep_weight_grads) {
          out.weight_grad_per_sample = std::move(per_sample);
        }
      } else {
        if (lg.activation == nullptr) {
          throw PolicyError(
              "weight gradient requested in activation-free mode");
        }
        const Tensor& a = *lg.activation;
        const Tensor& g = lg.output_grad;
        WeightNormPath path = options.weight_path;
        if (path == WeightNormPath::kMixed) {
          path = PrefersGhost(g.dim(1), g.dim(2), a.dim(2))
                     ? WeightNormPath::kGhost
                     : WeightNormPath::kInstantiate;
        }
        out.weight_path = path;
        if (path == WeightNormPath::kGhost) {
          out.weight_norm_sq_per_sample = GhostWeightNorms(a, g);
        } else {
          Tensor per_sample = PerSampleWeightGrads(&a, g);
          out.weight_norm_sq_per_sample = SliceNormsSq(per_sample);
          if (options.keep_weight_grads &&
              options.weight_path == WeightNormPath::kInstantiate) {
            out.weight_grad_per_sample = std::move(per_sample);
          }
        }
      }
      norm_seconds += SecondsSince(t0);
    }
    if (options.batch_grads) collect(lg);
  });
  report.profile.backward_seconds = SecondsSince(start);
  report.profile.norm_seconds = norm_seconds;
  if (options.batch_grads) report.batch_grads = collect.Ordered(net);
  return report;
}

}  // namespace dpbf
