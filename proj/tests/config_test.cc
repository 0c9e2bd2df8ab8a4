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

#include <string>

#include "dpbf/accountant.h"
#include "dpbf/config.h"
#include "dpbf/errors.h"
#include "gtest/gtest.h"

namespace dpbf {
namespace {

const char* kValid = R"({
  "task": {"kind": "blobs", "n": 200, "dims": 2, "classes": 2,
           "separation": 4},
  "network": {"layers": [{"type": "linear", "in": 2, "out": 8},
                         {"type": "relu"},
                         {"type": "linear", "in": 8, "out": 2}]},
  "mode": "bitfit",
  "epochs": 3,
  "batch_size": 20,
  "privacy": {"sigma": 1.5, "clipping": "abadi", "R": 0.5},
  "optimizer": {"kind": "sgd", "lr": 0.1},
  "seed": 42,
  "output_dir": "out"
})";

std::string ErrorOf(const std::string& text) {
  try {
    ParseRunConfig(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string Replace(std::string s, const std::string& from,
                    const std::string& to) {
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

TEST(RunConfigTest, ParsesEveryField) {
  const RunConfig c = ParseRunConfig(kValid);
  EXPECT_EQ(c.layers.size(), 3u);
  EXPECT_EQ(c.input_shape, (Shape{2}));
  EXPECT_EQ(c.train.mode, FineTuneMode::kBitFit);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_DOUBLE_EQ(c.train.q, 0.1);
  ASSERT_TRUE(c.train.privacy.has_value());
  EXPECT_EQ(c.train.privacy->sigma, 1.5);
  EXPECT_EQ(c.train.privacy->clipping.kind, ClipKind::kAbadi);
  EXPECT_EQ(c.train.privacy->clipping.threshold, 0.5);
  EXPECT_DOUBLE_EQ(c.train.privacy->delta, 0.5 / 200);
  EXPECT_EQ(c.train.optimizer.kind, OptimizerKind::kSgd);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.task.seed, 42u);
  EXPECT_EQ(c.output_dir, "out");
  EXPECT_FALSE(c.target_eps.has_value());
}

TEST(RunConfigTest, MissingNetworkNamesThePointer) {
  std::string text = kValid;
  const auto start = text.find("\"network\"");
  const auto end = text.find("\"mode\"");
  text.erase(start, end - start);
  EXPECT_EQ(ErrorOf(text).rfind("/network", 0), 0u) << ErrorOf(text);
}

TEST(RunConfigTest, BadFieldsNameTheirPointers) {
  EXPECT_EQ(ErrorOf(Replace(kValid, "\"out\": 8", "\"out\": 0"))
                .rfind("/network/layers/0/out", 0),
            0u);
  EXPECT_EQ(ErrorOf(Replace(kValid, "\"type\": \"relu\"", "\"type\": \"gelu\""))
                .rfind("/network/layers/1/type", 0),
            0u);
  EXPECT_EQ(ErrorOf(Replace(kValid, "\"bitfit\"", "\"lora\"")).rfind("/mode", 0),
            0u);
  EXPECT_EQ(ErrorOf(Replace(kValid, "\"sigma\": 1.5", "\"sigma\": 1.5, \"eps\": 3"))
                .rfind("/privacy/eps", 0),
            0u);
  EXPECT_EQ(ErrorOf(Replace(kValid, "\"sigma\": 1.5,", "")).rfind("/privacy/eps", 0),
            0u);
  EXPECT_EQ(ErrorOf(Replace(kValid, "\"in\": 8", "\"in\": 7")).rfind("/network", 0),
            0u);
  EXPECT_EQ(ErrorOf("{not json").rfind("/", 0), 0u);
}

TEST(RunConfigTest, NoClipNeedsAcknowledgment) {
  const std::string noclip = Replace(kValid, "\"abadi\"", "\"noclip\"");
  EXPECT_EQ(ErrorOf(noclip).rfind("/privacy/clipping", 0), 0u);
  EXPECT_NO_THROW(ParseRunConfig(
      Replace(noclip, "\"R\": 0.5", "\"R\": 0.5, \"non_private_ack\": true")));
  EXPECT_NO_THROW(
      ParseRunConfig(Replace(noclip, "\"sigma\": 1.5", "\"sigma\": 0")));
}

TEST(RunConfigTest, ConvNetworkWithInputShape) {
  const std::string text = R"({
    "task": {"kind": "blobs", "n": 40, "dims": 16, "classes": 2},
    "network": {"input": [1, 4, 4],
                "layers": [{"type": "conv2d", "in_channels": 1,
                            "out_channels": 2, "kernel": 3, "padding": 1},
                           {"type": "flatten"},
                           {"type": "linear", "in": 32, "out": 2}]},
    "mode": "full", "epochs": 1, "q": 0.5
  })";
  const RunConfig c = ParseRunConfig(text);
  EXPECT_EQ(c.input_shape, (Shape{1, 4, 4}));
  EXPECT_EQ(c.layers[0].window.pad_h, 1u);
  EXPECT_FALSE(c.train.privacy.has_value());
}

TEST(RunConfigTest, EpsIsResolvedByCalibration) {
  const RunConfig c = ResolvePrivacy(ParseRunConfig(
      Replace(kValid, "\"sigma\": 1.5", "\"eps\": 3")));
  ASSERT_TRUE(c.target_eps.has_value());
  const double eps = ComputeEpsilon(c.train.q, c.train.privacy->sigma,
                                    TotalSteps(c.train),
                                    c.train.privacy->delta)
                         .eps;
  EXPECT_LE(eps, 3.0);
  EXPECT_GT(eps, 2.9);
}

TEST(RunConfigTest, BuildNetworkIsSeeded) {
  const RunConfig c = ParseRunConfig(kValid);
  const Network a = BuildNetwork(c), b = BuildNetwork(c);
  EXPECT_TRUE(a.layer(0).weight->BitwiseEquals(*b.layer(0).weight));
}

TEST(LayerListTest, ParsesBareLists) {
  const auto layers =
      ParseLayerList(R"([{"type": "linear", "in": 999, "out": 10}])");
  ASSERT_EQ(layers.size(), 1u);
  EXPECT_EQ(layers[0].in_features, 999u);
  EXPECT_THROW(ParseLayerList("[]"), ConfigError);
}

}  // namespace
}  // namespace dpbf
