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

#include "dpbf/nn.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "dpbf/errors.h"

namespace dpbf {

std::string LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kLinear:
      return "linear";
    case LayerKind::kConv2d:
      return "conv2d";
    case LayerKind::kLayerNorm:
      return "layernorm";
    case LayerKind::kReLU:
      return "relu";
    case LayerKind::kFlatten:
      return "flatten";
  }
  return "unknown";
}

std::string TrainModeName(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFull:
      return "full";
    case TrainMode::kBitFit:
      return "bitfit";
    case TrainMode::kLinearProbe:
      return "linear_probe";
    case TrainMode::kCustom:
      return "custom";
  }
  return "unknown";
}

std::string ParamName(std::size_t layer, ParamKind kind) {
  return "layer" + std::to_string(layer) +
         (kind == ParamKind::kWeight ? ".weight" : ".bias");
}

Layer Layer::Linear(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw ConfigError("linear dims must be positive");
  LedgerScope scope(kTagParameter);
  Layer l;
  l.kind = LayerKind::kLinear;
  l.in_features = in;
  l.out_features = out;
  l.weight = Tensor({in, out});
  l.bias = Tensor({out});
  l.weight_trainable = l.bias_trainable = true;
  return l;
}

Layer Layer::Conv2d(std::size_t in_channels, std::size_t out_channels,
                    const Window2d& window) {
  if (in_channels == 0 || out_channels == 0 || window.kernel_h == 0 ||
      window.kernel_w == 0 || window.stride_h == 0 || window.stride_w == 0) {
    throw ConfigError("conv2d channels, kernel and stride must be positive");
  }
  LedgerScope scope(kTagParameter);
  Layer l;
  l.kind = LayerKind::kConv2d;
  l.in_features = in_channels;
  l.out_features = out_channels;
  l.window = window;
  l.weight = Tensor({in_channels * window.kernel_h * window.kernel_w,
                     out_channels});
  l.bias = Tensor({out_channels});
  l.weight_trainable = l.bias_trainable = true;
  return l;
}

Layer Layer::LayerNorm(std::size_t features) {
  if (features == 0) throw ConfigError("layernorm width must be positive");
  LedgerScope scope(kTagParameter);
  Layer l;
  l.kind = LayerKind::kLayerNorm;
  l.in_features = l.out_features = features;
  l.weight = Tensor({features}, 1.0);
  l.bias = Tensor({features});
  l.weight_trainable = l.bias_trainable = true;
  return l;
}

Layer Layer::ReLU() {
  Layer l;
  l.kind = LayerKind::kReLU;
  return l;
}

Layer Layer::Flatten() {
  Layer l;
  l.kind = LayerKind::kFlatten;
  return l;
}

std::string Layer::Describe() const {
  switch (kind) {
    case LayerKind::kLinear:
      return "Linear(" + std::to_string(in_features) + "," +
             std::to_string(out_features) + ")";
    case LayerKind::kConv2d:
      return "Conv2d(" + std::to_string(in_features) + "," +
             std::to_string(out_features) + ",k=" +
             std::to_string(window.kernel_h) + "x" +
             std::to_string(window.kernel_w) + ")";
    case LayerKind::kLayerNorm:
      return "LayerNorm(" + std::to_string(out_features) + ")";
    case LayerKind::kReLU:
      return "ReLU";
    case LayerKind::kFlatten:
      return "Flatten";
  }
  return "?";
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  SetMode(TrainMode::kFull);
}

void Network::SetMode(TrainMode mode) {
  mode_ = mode;
  if (mode == TrainMode::kCustom) return;
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].parametric()) last = i;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    bool w = false, b = false;
    switch (mode) {
      case TrainMode::kFull:
        w = b = true;
        break;
      case TrainMode::kBitFit:
        b = true;
        break;
      case TrainMode::kLinearProbe:
        w = b = (last && *last == i);
        break;
      case TrainMode::kCustom:
        break;
    }
    l.weight_trainable = w && l.weight.has_value();
    l.bias_trainable = b && l.bias.has_value();
  }
}

void Network::SetTrainable(std::size_t layer, ParamKind kind, bool trainable) {
  Layer& l = layers_.at(layer);
  mode_ = TrainMode::kCustom;
  if (kind == ParamKind::kWeight) {
    l.weight_trainable = trainable && l.weight.has_value();
  } else {
    l.bias_trainable = trainable && l.bias.has_value();
  }
}

std::vector<ParamRef> Network::Parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    if (l.weight) {
      out.push_back({ParamName(i, ParamKind::kWeight), i, ParamKind::kWeight,
                     &*l.weight, l.weight_trainable});
    }
    if (l.bias) {
      out.push_back({ParamName(i, ParamKind::kBias), i, ParamKind::kBias,
                     &*l.bias, l.bias_trainable});
    }
  }
  return out;
}

std::vector<ConstParamRef> Network::Parameters() const {
  std::vector<ConstParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.weight) {
      out.push_back({ParamName(i, ParamKind::kWeight), i, ParamKind::kWeight,
                     &*l.weight, l.weight_trainable});
    }
    if (l.bias) {
      out.push_back({ParamName(i, ParamKind::kBias), i, ParamKind::kBias,
                     &*l.bias, l.bias_trainable});
    }
  }
  return out;
}

std::vector<ConstParamRef> Network::TrainableParameters() const {
  std::vector<ConstParamRef> out;
  for (ConstParamRef& p : Parameters()) {
    if (p.trainable) out.push_back(std::move(p));
  }
  return out;
}

std::optional<std::size_t> Network::FirstTrainableLayer() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].any_trainable()) return i;
  }
  return std::nullopt;
}

bool Network::HasTrainableWeight() const {
  return std::any_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.weight_trainable; });
}

void Network::Initialize(SeededRng& rng) {
  for (Layer& l : layers_) {
    if (l.kind == LayerKind::kLayerNorm) {
      std::fill(l.weight->data().begin(), l.weight->data().end(), 1.0);
      std::fill(l.bias->data().begin(), l.bias->data().end(), 0.0);
      continue;
    }
    if (!l.weight) continue;
    const double std = 1.0 / std::sqrt(static_cast<double>(l.weight->dim(0)));
    for (double& v : l.weight->data()) {
      double z = rng.Normal();
      while (std::abs(z) > 2.0) z = rng.Normal();
      v = std * z;
    }
    std::fill(l.bias->data().begin(), l.bias->data().end(), 0.0);
  }
}

namespace {

DimensionError LayerShapeError(std::size_t index, const Layer& layer,
                               const Shape& input, const std::string& why) {
  return DimensionError("layer " + std::to_string(index) + " (" +
                        layer.Describe() + "): input " + ShapeString(input) +
                        " " + why);
}

Shape LayerOutputShape(std::size_t index, const Layer& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::kLinear:
    case LayerKind::kLayerNorm: {
      if (in.size() < 2 || in.back() != l.in_features) {
        throw LayerShapeError(index, l, in,
                              "needs last axis " +
                                  std::to_string(l.in_features));
      }
      Shape out = in;
      out.back() = l.out_features;
      return out;
    }
    case LayerKind::kConv2d: {
      if (in.size() != 4 || in[1] != l.in_features) {
        throw LayerShapeError(index, l, in,
                              "needs [B x " + std::to_string(l.in_features) +
                                  " x H x W]");
      }
      const Conv2dOutput o = ConvOutputSize(in[2], in[3], l.window);
      return {in[0], l.out_features, o.height, o.width};
    }
    case LayerKind::kReLU:
      return in;
    case LayerKind::kFlatten: {
      if (in.empty()) throw LayerShapeError(index, l, in, "has no batch axis");
      std::size_t rest = 1;
      for (std::size_t i = 1; i < in.size(); ++i) rest *= in[i];
      return {in[0], rest};
    }
  }
  return in;
}

struct NormState {
  Tensor hat;
  Tensor mean;
  Tensor inv_std;
};

NormState Normalize(const Tensor& a, std::size_t p) {
  const std::size_t rows = a.numel() / p;
  NormState st{Tensor(a.shape()), Tensor({rows}), Tensor({rows})};
  const double* ad = a.data().data();
  double* hd = st.hat.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = ad + r * p;
    double mean = 0.0;
    for (std::size_t j = 0; j < p; ++j) mean += row[j];
    mean /= static_cast<double>(p);
    double var = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(p);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < p; ++j) {
      hd[r * p + j] = (row[j] - mean) * inv_std;
    }
    st.mean[r] = mean;
    st.inv_std[r] = inv_std;
  }
  return st;
}

Tensor ScaleShift(const Tensor& hat, const Tensor& gain, const Tensor& bias) {
  Tensor out(hat.shape());
  const std::size_t p = gain.dim(0);
  auto hd = hat.data();
  auto od = out.data();
  auto gd = gain.data();
  auto bd = bias.data();
  for (std::size_t i = 0; i < hd.size(); ++i) {
    od[i] = hd[i] * gd[i % p] + bd[i % p];
  }
  return out;
}

}  // namespace

Shape Network::OutputShape(const Shape& input) const {
  Shape s = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    s = LayerOutputShape(i, layers_[i], s);
  }
  return s;
}

std::vector<std::optional<Shape>> Network::LoweredInputShapes(
    const Shape& input) const {
  std::vector<std::optional<Shape>> out(layers_.size());
  Shape s = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    Shape next = LayerOutputShape(i, l, s);
    if (l.kind == LayerKind::kLinear || l.kind == LayerKind::kLayerNorm) {
      out[i] = AsBatchTokens(s);
    } else if (l.kind == LayerKind::kConv2d) {
      out[i] = Shape{s[0], next[2] * next[3],
                     l.in_features * l.window.kernel_h * l.window.kernel_w};
    }
    s = std::move(next);
  }
  return out;
}

Tensor LayerNormForward(const Tensor& a, const Tensor& gain,
                        const Tensor& bias) {
  if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) == 0 ||
      gain.dim(0) != bias.dim(0) || a.rank() < 1 ||
      a.shape().back() != gain.dim(0)) {
    throw DimensionError("layernorm shape mismatch: " + a.ShapeString() +
                         " with gain " + gain.ShapeString() + " and bias " +
                         bias.ShapeString());
  }
  NormState st = Normalize(a, gain.dim(0));
  return ScaleShift(st.hat, gain, bias);
}

ForwardTrace Forward(const Network& net, const Tensor& x,
                     ForwardOptions options) {
  ForwardTrace trace;
  const std::optional<std::size_t> first = net.FirstTrainableLayer();
  trace.has_trainable = options.record && first.has_value();
  trace.stop_layer = trace.has_trainable ? *first : net.size();
  trace.records.resize(net.size());

  Tensor current = [&] {
    LedgerScope scope(kTagForward);
    return Tensor(x);
  }();
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Layer& l = net.layer(i);
    const Shape out_shape = LayerOutputShape(i, l, current.shape());
    LayerRecord& rec = trace.records[i];
    const bool keep = trace.has_trainable && i >= trace.stop_layer;
    // Input gradient is needed only above the lowest trainable layer.
    const bool needs_input_grad = keep && i > trace.stop_layer;
    if (keep) rec.input_shape = current.shape();

    LedgerScope scope(kTagForward);
    switch (l.kind) {
      case LayerKind::kLinear: {
        Tensor a3 = current.Reshaped(AsBatchTokens(current.shape()));
        if (keep && l.weight_trainable) {
          LedgerScope cache_scope(kTagActivationCache);
          rec.activation_cache = Tensor(a3);
        }
        Tensor s = AddBias(MatMul(a3, *l.weight), *l.bias);
        current = std::move(s).Reshaped(out_shape);
        break;
      }
      case LayerKind::kConv2d: {
        const bool cache = keep && l.weight_trainable;
        Tensor cols = [&] {
          LedgerScope cols_scope(cache ? kTagActivationCache : kTagForward);
          return Unfold2d(current, l.window);
        }();
        Tensor s = AddBias(MatMul(cols, *l.weight), *l.bias);
        if (cache) rec.activation_cache = std::move(cols);
        current = TokensToChannels(s, out_shape[2], out_shape[3]);
        break;
      }
      case LayerKind::kLayerNorm: {
        NormState st = Normalize(current, l.out_features);
        Tensor s = ScaleShift(st.hat, *l.weight, *l.bias);
        if (keep && l.weight_trainable) {
          LedgerScope cache_scope(kTagActivationCache);
          rec.activation_cache =
              Tensor(st.hat).Reshaped(AsBatchTokens(current.shape()));
        } else if (needs_input_grad) {
          LedgerScope cache_scope(kTagNormCache);
          rec.norm_hat =
              Tensor(st.hat).Reshaped(AsBatchTokens(current.shape()));
        }
        if (needs_input_grad) {
          LedgerScope stats_scope(kTagNormCache);
          rec.norm_mean = Tensor(st.mean);
          rec.norm_inv_std = Tensor(st.inv_std);
        }
        current = std::move(s);
        break;
      }
      case LayerKind::kReLU: {
        if (needs_input_grad) {
          LedgerScope mask_scope(kTagNonlinearityMask);
          rec.relu_mask = Mask(current.numel());
        }
        for (std::size_t k = 0; k < current.numel(); ++k) {
          const bool on = current[k] > 0.0;
          if (!on) current[k] = 0.0;
          if (rec.relu_mask) (*rec.relu_mask)[k] = on ? 1 : 0;
        }
        break;
      }
      case LayerKind::kFlatten:
        current = std::move(current).Reshaped(out_shape);
        break;
    }
  }
  trace.output = std::move(current);
  return trace;
}

Tensor Predict(const Network& net, const Tensor& x) {
  return Forward(net, x, {.record = false}).output;
}

ParamCount CountParams(const Network& net) {
  ParamCount c;
  for (const ConstParamRef& p : net.Parameters()) {
    c.total += p.tensor->numel();
    if (p.kind == ParamKind::kBias) c.bias += p.tensor->numel();
  }
  if (c.total == 0) {
    c.empty = true;
    c.fraction = 0.0;
  } else {
    c.fraction = static_cast<double>(c.bias) / static_cast<double>(c.total);
  }
  return c;
}

LossResult LossSoftmaxCE(const Tensor& logits,
                         const std::vector<int>& labels) {
  if (logits.rank() != 2 && logits.rank() != 3) {
    throw DimensionError("logits must be [B x K] or [B x T x K], got " +
                         logits.ShapeString());
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.shape().back();
  const std::size_t rows = logits.numel() / classes;
  const std::size_t per_sample = batch == 0 ? 0 : rows / batch;
  if (labels.size() != rows) {
    throw InputError("expected " + std::to_string(rows) + " labels, got " +
                     std::to_string(labels.size()));
  }
  LossResult r;
  {
    LedgerScope scope(kTagOutputGrad);
    r.dlogits = Tensor(logits.shape());
  }
  r.per_sample_loss.assign(batch, 0.0);
  const double* ld = logits.data().data();
  double* gd = r.dlogits.data().data();
  for (std::size_t row = 0; row < rows; ++row) {
    const int label = labels[row];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw InputError("label " + std::to_string(label) + " at row " +
                       std::to_string(row) + " outside [0," +
                       std::to_string(classes) + ")");
    }
    const double* z = ld + row * classes;
    double* g = gd + row * classes;
    double zmax = z[0];
    for (std::size_t k = 1; k < classes; ++k) zmax = std::max(zmax, z[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(z[k] - zmax);
    const double log_denom = std::log(denom);
    for (std::size_t k = 0; k < classes; ++k) {
      g[k] = std::exp(z[k] - zmax - log_denom);
    }
    g[label] -= 1.0;
    const double loss = log_denom + zmax - z[label];
    r.per_sample_loss[row / per_sample] += loss;
  }
  for (double l : r.per_sample_loss) r.loss += l;
  return r;
}

}  // namespace dpbf
