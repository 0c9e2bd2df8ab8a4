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

#ifndef DPBF_ANALYSIS_H_
#define DPBF_ANALYSIS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpbf/nn.h"

namespace dpbf {

// Training methods the per-layer cost model covers.
enum class Method {
  kNonDpFull,
  kOpacus,
  kGhostClip,
  kMixGhostClip,
  kLoRA,
  kAdapter,
  kNonDpBias,
  kDpBias,
};

std::vector<Method> AllMethods();
std::string MethodName(Method m);
std::optional<Method> ParseMethod(const std::string& name);

// One layer mapping B x T x d to B x T x p; r is the LoRA/Adapter rank.
struct LayerDims {
  std::int64_t B = 1;
  std::int64_t T = 1;
  std::int64_t p = 1;
  std::int64_t d = 1;
  std::optional<std::int64_t> r;
};

// Element-operation and element counts for one layer under one method.
struct CostReport {
  double forward_and_output_grad_time = 0;
  double train_base_time = 0;
  double train_extra_time = 0;
  double total_time = 0;
  double space_forward = 0;
  double space_train_base = 0;
  double space_extra = 0;
  double space_total = 0;
  int n_backprops = 1;
  bool needs_forward_hook = false;
};

// Fills the time fields (and n_backprops / hook flags).
CostReport TimeCost(const LayerDims& dims, Method method);
// Fills the space fields (and n_backprops / hook flags).
CostReport SpaceCost(const LayerDims& dims, Method method);
CostReport Cost(const LayerDims& dims, Method method);

// Summed total_time of method_a over that of method_b.
double NetworkRatio(const std::vector<LayerDims>& layers, Method method_a,
                    Method method_b);

// Dims of every Linear / Conv2d layer for a batch of the given input shape
// (input includes the batch axis).
std::vector<LayerDims> NetworkLayerDims(const Network& net,
                                        const Shape& input);

struct ParamReportRow {
  std::string layer;
  std::size_t total = 0;
  std::size_t bias = 0;
  double fraction = 0.0;
};

// One row per parametric layer plus a final "total" row.
std::vector<ParamReportRow> ParamReport(const Network& net);

}  // namespace dpbf

#endif  // DPBF_ANALYSIS_H_
