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

#ifndef DPBF_NN_H_
#define DPBF_NN_H_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dpbf/ledger.h"
#include "dpbf/ops.h"
#include "dpbf/rng.h"
#include "dpbf/tensor.h"

namespace dpbf {

enum class LayerKind { kLinear, kConv2d, kLayerNorm, kReLU, kFlatten };
enum class ParamKind { kWeight, kBias };
enum class TrainMode { kFull, kBitFit, kLinearProbe, kCustom };

std::string LayerKindName(LayerKind kind);
std::string TrainModeName(TrainMode mode);

// One layer. Parametric kinds store the weight in lowered form so that every
// one of them computes s = a W + 1 b on a [B x T x d] view of its input:
//   Linear(d, p)           weight d x p, bias p
//   Conv2d(C_in, C_out, k) weight (C_in*kH*kW) x C_out, bias C_out
//   LayerNorm(p)           gain p (the "weight"), bias p
struct Layer {
  LayerKind kind = LayerKind::kReLU;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Window2d window;
  std::optional<Tensor> weight;
  std::optional<Tensor> bias;
  bool weight_trainable = false;
  bool bias_trainable = false;

  static Layer Linear(std::size_t in, std::size_t out);
  static Layer Conv2d(std::size_t in_channels, std::size_t out_channels,
                      const Window2d& window);
  static Layer LayerNorm(std::size_t features);
  static Layer ReLU();
  static Layer Flatten();

  bool parametric() const { return weight.has_value() || bias.has_value(); }
  bool any_trainable() const { return weight_trainable || bias_trainable; }
  std::string Describe() const;
};

struct ParamRef {
  std::string name;
  std::size_t layer;
  ParamKind kind;
  Tensor* tensor;
  bool trainable;
};

struct ConstParamRef {
  std::string name;
  std::size_t layer;
  ParamKind kind;
  const Tensor* tensor;
  bool trainable;
};

std::string ParamName(std::size_t layer, ParamKind kind);

class Network {
 public:
  Network() = default;
  // Starts in full mode: every present parameter is trainable.
  explicit Network(std::vector<Layer> layers);

  void SetMode(TrainMode mode);
  TrainMode mode() const { return mode_; }

  // Switches to custom mode. Absent parameters stay untrainable.
  void SetTrainable(std::size_t layer, ParamKind kind, bool trainable);

  std::size_t size() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Layer& layer(std::size_t i) { return layers_.at(i); }

  // Registry order: layer by layer, weight before bias.
  std::vector<ParamRef> Parameters();
  std::vector<ConstParamRef> Parameters() const;
  std::vector<ConstParamRef> TrainableParameters() const;

  // Lowest layer index holding a trainable parameter.
  std::optional<std::size_t> FirstTrainableLayer() const;
  bool HasTrainableWeight() const;

  // Truncated-normal fan-in weights, zero biases, unit LayerNorm gains.
  void Initialize(SeededRng& rng);

  // Shape propagation; DimensionError names the failing layer.
  Shape OutputShape(const Shape& input) const;
  // Per parametric layer: the [B x T x d] shape its lowered input takes.
  std::vector<std::optional<Shape>> LoweredInputShapes(
      const Shape& input) const;

 private:
  std::vector<Layer> layers_;
  TrainMode mode_ = TrainMode::kFull;
};

// What backward needs from one layer's forward.
struct LayerRecord {
  Shape input_shape;
  // Lowered input a_l ([B x T x d]); for LayerNorm the normalized input.
  // Present iff the layer's weight is trainable.
  std::optional<Tensor> activation_cache;
  std::optional<Mask> relu_mask;
  // Per normalized row.
  std::optional<Tensor> norm_mean;
  std::optional<Tensor> norm_inv_std;
  // Normalized input kept for the input-gradient rule when the gain is
  // frozen (otherwise activation_cache serves).
  std::optional<Tensor> norm_hat;
};

struct ForwardTrace {
  Tensor output;
  std::vector<LayerRecord> records;
  // Backward stops at this layer; layers below it keep no records.
  std::size_t stop_layer = 0;
  bool has_trainable = false;
};

struct ForwardOptions {
  bool record = true;
};

ForwardTrace Forward(const Network& net, const Tensor& x,
                     ForwardOptions options = {});

// Forward without any caching.
Tensor Predict(const Network& net, const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes each length-p row to zero mean and unit population variance,
// then applies s = xhat * W + b.
Tensor LayerNormForward(const Tensor& a, const Tensor& gain,
                        const Tensor& bias);

struct ParamCount {
  std::size_t total = 0;
  std::size_t bias = 0;
  double fraction = 0.0;
  bool empty = false;
};

ParamCount CountParams(const Network& net);

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;
  std::vector<double> per_sample_loss;
};

// Summed softmax cross-entropy. logits [B x K] with B labels, or [B x T x K]
// with B*T token labels (a sample's loss sums over its tokens).
LossResult LossSoftmaxCE(const Tensor& logits, const std::vector<int>& labels);

}  // namespace dpbf

#endif  // DPBF_NN_H_
