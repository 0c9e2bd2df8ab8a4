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

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "dpbf/checkpoint.h"
#include "dpbf/errors.h"
#include "dpbf/ledger.h"
#include "dpbf/nn.h"
#include "dpbf/ops.h"
#include "gtest/gtest.h"
#include "oracles.h"

namespace dpbf {
namespace {

using testing::RandomTensor;

Network Mlp(std::size_t a, std::size_t b, std::size_t c) {
  return Network({Layer::Linear(a, b), Layer::ReLU(), Layer::Linear(b, c)});
}

TEST(LayerTest, ParameterShapes) {
  const Layer lin = Layer::Linear(3, 4);
  EXPECT_EQ(lin.weight->shape(), (Shape{3, 4}));
  EXPECT_EQ(lin.bias->shape(), (Shape{4}));
  const Layer conv = Layer::Conv2d(2, 5, Window2d{3, 2, 1, 1, 0, 0});
  EXPECT_EQ(conv.weight->shape(), (Shape{12, 5}));
  EXPECT_EQ(conv.bias->shape(), (Shape{5}));
  const Layer ln = Layer::LayerNorm(6);
  EXPECT_EQ(ln.weight->shape(), (Shape{6}));
  const Layer relu = Layer::ReLU();
  EXPECT_FALSE(relu.parametric());
}

TEST(NetworkTest, ModesSetTrainability) {
  Network net = Mlp(4, 3, 2);
  for (const ParamRef& p : net.Parameters()) EXPECT_TRUE(p.trainable);
  net.SetMode(TrainMode::kBitFit);
  for (const ParamRef& p : net.Parameters()) {
    EXPECT_EQ(p.trainable, p.kind == ParamKind::kBias) << p.name;
  }
  EXPECT_FALSE(net.HasTrainableWeight());
  net.SetMode(TrainMode::kLinearProbe);
  const auto trainable = net.TrainableParameters();
  ASSERT_EQ(trainable.size(), 2u);
  EXPECT_EQ(trainable[0].name, "layer2.weight");
  EXPECT_EQ(trainable[1].name, "layer2.bias");
  EXPECT_FALSE(net.layer(1).any_trainable());
  net.SetTrainable(0, ParamKind::kWeight, true);
  EXPECT_EQ(net.mode(), TrainMode::kCustom);
  EXPECT_EQ(*net.FirstTrainableLayer(), 0u);
}

TEST(NetworkTest, ReluHasNoTrainableFlags) {
  Network net = Mlp(2, 2, 2);
  net.SetMode(TrainMode::kBitFit);
  EXPECT_FALSE(net.layer(1).weight_trainable);
  EXPECT_FALSE(net.layer(1).bias_trainable);
}

TEST(ForwardTest, IdentityLinear) {
  Network net({Layer::Linear(2, 2)});
  Tensor& w = *net.layer(0).weight;
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  const Tensor out = Predict(net, Tensor({1, 2}, {1.0, 2.0}));
  EXPECT_EQ(out[0], 1.0);
  EXPECT_EQ(out[1], 2.0);
}

TEST(ForwardTest, ShapeMismatchNamesTheLayer) {
  Network net = Mlp(4, 3, 2);
  try {
    Predict(net, Tensor({1, 5}));
    FAIL() << "expected a dimension error";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos)
        << e.what();
  }
  Network bad({Layer::Linear(4, 3), Layer::Linear(2, 2)});
  try {
    Predict(bad, Tensor({1, 4}));
    FAIL() << "expected a dimension error";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos)
        << e.what();
  }
}

TEST(LayerNormTest, HandComputedRow) {
  const Tensor out = LayerNormForward(Tensor({1, 2}, {3.0, 5.0}),
                                      Tensor({2}, {1.0, 1.0}), Tensor({2}));
  const double want = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(out[0], -want, 1e-15);
  EXPECT_NEAR(out[1], want, 1e-15);
}

TEST(LayerNormTest, ConstantRowAndZeroGain) {
  const Tensor c = LayerNormForward(Tensor({1, 3}, 2.5), Tensor({3}, 1.0),
                                    Tensor({3}));
  for (double v : c.data()) EXPECT_EQ(v, 0.0);
  SeededRng rng(1, "ln");
  const Tensor shifted = LayerNormForward(RandomTensor({2, 4}, rng),
                                          Tensor({4}), Tensor({4}, 7.0));
  for (double v : shifted.data()) EXPECT_EQ(v, 7.0);
}

TEST(LayerNormTest, RowsAreStandardized) {
  SeededRng rng(2, "ln-stats");
  const std::size_t rows = 20, p = 16;
  const Tensor x = RandomTensor({rows, p}, rng, 3.0);
  const Tensor y = LayerNormForward(x, Tensor({p}, 1.0), Tensor({p}));
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < p; ++j) mean += y.at(r, j);
    mean /= p;
    for (std::size_t j = 0; j < p; ++j) var += std::pow(y.at(r, j) - mean, 2);
    var /= p;
    EXPECT_LT(std::abs(mean), 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(ForwardTest, ConvLayerMatchesDirectConvolution) {
  SeededRng rng(3, "conv-fwd");
  for (int trial = 0; trial < 20; ++trial) {
    Window2d w;
    w.kernel_h = testing::RandomInt(rng, 1, 3);
    w.kernel_w = testing::RandomInt(rng, 1, 3);
    w.stride_h = testing::RandomInt(rng, 1, 2);
    w.stride_w = testing::RandomInt(rng, 1, 2);
    w.pad_h = testing::RandomInt(rng, 0, 1);
    w.pad_w = testing::RandomInt(rng, 0, 1);
    const std::size_t C = testing::RandomInt(rng, 1, 3);
    const std::size_t out = testing::RandomInt(rng, 1, 3);
    const std::size_t H = testing::RandomInt(rng, 3, 8);
    const std::size_t W = testing::RandomInt(rng, 3, 8);
    Network net({Layer::Conv2d(C, out, w)});
    *net.layer(0).weight = RandomTensor(net.layer(0).weight->shape(), rng);
    *net.layer(0).bias = RandomTensor({out}, rng);
    const Tensor x = RandomTensor({2, C, H, W}, rng);
    const Tensor got = Predict(net, x);
    const Tensor want = testing::DirectConv2d(x, *net.layer(0).weight,
                                              *net.layer(0).bias, out, w);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT(testing::MaxAbsDiff(got, want), 1e-10);
  }
}

TEST(ForwardTest, OutputIndependentOfTrainability) {
  SeededRng rng(4, "modes");
  for (int trial = 0; trial < 10; ++trial) {
    testing::RandomCase rc = testing::MakeRandomCase(rng);
    const Tensor full = Forward(rc.net, rc.batch.inputs).output;
    rc.net.SetMode(TrainMode::kBitFit);
    const Tensor bitfit = Forward(rc.net, rc.batch.inputs).output;
    EXPECT_TRUE(full.BitwiseEquals(bitfit)) << rc.description;
  }
}

// Bytes of every lowered input a_l for weight-trainable layers.
std::size_t ExpectedCacheBytes(const Network& net, const Shape& input) {
  const auto shapes = net.LoweredInputShapes(input);
  std::size_t bytes = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (net.layer(i).weight_trainable && shapes[i]) {
      bytes += NumElements(*shapes[i]) * sizeof(double);
    }
  }
  return bytes;
}

TEST(ForwardTest, CachePolicyPerLayer) {
  SeededRng rng(5, "cache");
  AllocationLedger& ledger = AllocationLedger::Global();
  for (int trial = 0; trial < 30; ++trial) {
    testing::RandomCase rc = testing::MakeRandomCase(rng);
    for (TrainMode mode : {TrainMode::kFull, TrainMode::kBitFit,
                           TrainMode::kLinearProbe}) {
      rc.net.SetMode(mode);
      const std::size_t before = ledger.live_bytes(kTagActivationCache);
      const ForwardTrace trace = Forward(rc.net, rc.batch.inputs);
      EXPECT_EQ(ledger.live_bytes(kTagActivationCache) - before,
                ExpectedCacheBytes(rc.net, rc.batch.inputs.shape()))
          << rc.description;
      if (mode == TrainMode::kBitFit) {
        EXPECT_EQ(ledger.live_bytes(kTagActivationCache), before);
      }
      for (std::size_t i = 0; i < trace.records.size(); ++i) {
        EXPECT_EQ(trace.records[i].activation_cache.has_value(),
                  rc.net.layer(i).weight_trainable)
            << "layer " << i << " " << rc.description;
      }
    }
  }
}

TEST(ParamCountTest, ClosedForms) {
  ParamCount c = CountParams(Network({Layer::Linear(999, 10)}));
  EXPECT_EQ(c.total, 10000u);
  EXPECT_EQ(c.bias, 10u);
  EXPECT_DOUBLE_EQ(c.fraction, 0.001);
  c = CountParams(Mlp(100, 50, 10));
  EXPECT_EQ(c.total, 5560u);
  EXPECT_EQ(c.bias, 60u);
  EXPECT_NEAR(c.fraction, 60.0 / 5560.0, 1e-15);
  c = CountParams(Network({Layer::Linear(7, 3)}));
  EXPECT_DOUBLE_EQ(c.fraction, 1.0 / 8.0);
  c = CountParams(Network({Layer::ReLU()}));
  EXPECT_TRUE(c.empty);
  EXPECT_EQ(c.fraction, 0.0);
}

TEST(LossTest, UniformLogitsGiveLogK) {
  const LossResult r = LossSoftmaxCE(Tensor({2, 2}), {0, 1});
  EXPECT_NEAR(r.per_sample_loss[0], std::log(2.0), 1e-15);
  EXPECT_NEAR(r.loss, 2.0 * std::log(2.0), 1e-15);
}

TEST(LossTest, RowsOfTheGradientSumToZero) {
  SeededRng rng(6, "loss");
  const Tensor logits = RandomTensor({5, 4}, rng, 3.0);
  const LossResult r = LossSoftmaxCE(logits, {0, 1, 2, 3, 0});
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += r.dlogits.at(i, k);
    EXPECT_NEAR(s, 0.0, 1e-15);
  }
}

TEST(LossTest, GradientMatchesFiniteDifferences) {
  SeededRng rng(7, "loss-fd");
  Tensor logits = RandomTensor({3, 4}, rng);
  const std::vector<int> labels = {2, 0, 3};
  const LossResult r = LossSoftmaxCE(logits, labels);
  Tensor fd(logits.shape());
  const double h = 1e-6;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double saved = logits[i];
    logits[i] = saved + h;
    const double up = LossSoftmaxCE(logits, labels).loss;
    logits[i] = saved - h;
    const double down = LossSoftmaxCE(logits, labels).loss;
    logits[i] = saved;
    fd[i] = (up - down) / (2 * h);
  }
  EXPECT_LE(testing::RelativeError(r.dlogits, fd), 1e-7);
}

TEST(LossTest, TokenLabelsSumPerSample) {
  SeededRng rng(8, "tokens");
  const Tensor logits = RandomTensor({2, 3, 4}, rng);
  const LossResult r = LossSoftmaxCE(logits, {0, 1, 2, 3, 0, 1});
  ASSERT_EQ(r.per_sample_loss.size(), 2u);
  EXPECT_NEAR(r.per_sample_loss[0] + r.per_sample_loss[1], r.loss, 1e-12);
}

TEST(LossTest, BadLabelsAreInputErrors) {
  EXPECT_THROW(LossSoftmaxCE(Tensor({1, 2}), {2}), InputError);
  EXPECT_THROW(LossSoftmaxCE(Tensor({1, 2}), {-1}), InputError);
  EXPECT_THROW(LossSoftmaxCE(Tensor({2, 2}), {0}), InputError);
}

TEST(CheckpointTest, RoundTripIsBitwiseExact) {
  SeededRng rng(9, "ckpt");
  Network net({Layer::Conv2d(2, 3, Window2d{2, 2, 1, 1, 0, 0}),
               Layer::Flatten(), Layer::Linear(12, 4), Layer::LayerNorm(4)});
  net.Initialize(rng);
  for (ParamRef p : net.Parameters()) {
    for (double& v : p.tensor->data()) v = rng.Normal() * 1e-300;
  }
  net.layer(2).bias->data()[0] = -0.0;
  const std::string bytes = EncodeCheckpoint(net);
  Network copy({Layer::Conv2d(2, 3, Window2d{2, 2, 1, 1, 0, 0}),
                Layer::Flatten(), Layer::Linear(12, 4), Layer::LayerNorm(4)});
  ApplyCheckpoint(copy, DecodeCheckpoint(bytes));
  const auto a = net.Parameters();
  const auto b = copy.Parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].tensor->BitwiseEquals(*b[i].tensor)) << a[i].name;
  }
  EXPECT_EQ(EncodeCheckpoint(copy), bytes);
}

TEST(CheckpointTest, ByteLayout) {
  Network net({Layer::Linear(1, 1)});
  (*net.layer(0).weight)[0] = 1.0;
  (*net.layer(0).bias)[0] = 2.0;
  const std::string bytes = EncodeCheckpoint(net);
  // magic, version, then two records of 4 + 13 + 4 + 4*rank + 8 bytes.
  ASSERT_EQ(bytes.size(), 8u + (4 + 13 + 4 + 8 + 8) + (4 + 11 + 4 + 4 + 8));
  EXPECT_EQ(bytes.substr(0, 4), "DPBF");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes.substr(12, 13), "layer0.weight");
  double w = 0;
  std::memcpy(&w, bytes.data() + 8 + 4 + 13 + 4 + 8, 8);
  EXPECT_EQ(w, 1.0);
}

TEST(CheckpointTest, CorruptInputIsRejected) {
  Network net({Layer::Linear(2, 2)});
  std::string bytes = EncodeCheckpoint(net);
  EXPECT_THROW(DecodeCheckpoint("XXXX"), InputError);
  std::string bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(DecodeCheckpoint(bad_version), InputError);
  EXPECT_THROW(DecodeCheckpoint(bytes.substr(0, bytes.size() - 3)),
               InputError);
  Network other({Layer::Linear(2, 3)});
  EXPECT_THROW(ApplyCheckpoint(other, DecodeCheckpoint(bytes)), InputError);
}

TEST(CheckpointTest, FileRoundTrip) {
  SeededRng rng(10, "file");
  Network net = Mlp(3, 4, 2);
  net.Initialize(rng);
  const auto path =
      (std::filesystem::temp_directory_path() / "dpbf_ckpt_test.bin").string();
  SaveCheckpoint(net, path);
  Network copy = Mlp(3, 4, 2);
  LoadCheckpoint(copy, path);
  EXPECT_EQ(EncodeCheckpoint(copy), EncodeCheckpoint(net));
  std::remove(path.c_str());
}

TEST(InitTest, TruncatedFanInScaling) {
  SeededRng rng(11, "init");
  Network net({Layer::Linear(400, 50), Layer::LayerNorm(50)});
  net.Initialize(rng);
  const Tensor& w = *net.layer(0).weight;
  const double bound = 2.0 / std::sqrt(400.0);
  double var = 0;
  for (double v : w.data()) {
    EXPECT_LE(std::abs(v), bound);
    var += v * v;
  }
  var /= w.numel();
  // A normal truncated at 2 std keeps about 77% of the variance.
  EXPECT_NEAR(var * 400.0, 0.774, 0.05);
  for (double v : net.layer(0).bias->data()) EXPECT_EQ(v, 0.0);
  for (double v : net.layer(1).weight->data()) EXPECT_EQ(v, 1.0);
}

}  // namespace
}  // namespace dpbf
