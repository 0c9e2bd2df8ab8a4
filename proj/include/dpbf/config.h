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

#ifndef DPBF_CONFIG_H_
#define DPBF_CONFIG_H_

#include <optional>
#include <string>
#include <vector>

#include "dpbf/nn.h"
#include "dpbf/task.h"
#include "dpbf/train.h"

namespace dpbf {

// A parsed run configuration. Layer dimensions are validated eagerly;
// sigma is resolved from eps lazily because it needs the step count.
struct RunConfig {
  SyntheticTask task;
  std::vector<Layer> layers;
  Shape input_shape;  // per sample
  TrainConfig train;
  std::optional<double> target_eps;
  std::string output_dir = ".";
};

// Errors are ConfigError messages that start with the JSON pointer of the
// offending field, e.g. "/network: missing required field".
RunConfig ParseRunConfig(const std::string& json_text);
RunConfig LoadRunConfig(const std::string& path);

// A bare JSON layer list, e.g. [{"type": "linear", "in": 4, "out": 2}].
std::vector<Layer> ParseLayerList(const std::string& json_text);

// Fills train.privacy->sigma from target_eps when eps was given. Returns
// the (possibly unchanged) config.
RunConfig ResolvePrivacy(RunConfig config);

// Builds the network and initializes it from the "init" stream of the seed.
Network BuildNetwork(const RunConfig& config);

std::optional<FineTuneMode> ParseFineTuneMode(const std::string& name);
std::optional<ClipKind> ParseClipKind(const std::string& name);
std::optional<FullStrategy> ParseFullStrategy(const std::string& name);
std::optional<OptimizerKind> ParseOptimizerKind(const std::string& name);

}  // namespace dpbf

#endif  // DPBF_CONFIG_H_
