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

#include "dpbf/analysis.h"

#include <algorithm>

#include "dpbf/errors.h"

namespace dpbf {
namespace {

bool NeedsRank(Method m) { return m == Method::kLoRA || m == Method::kAdapter; }

void Validate(const LayerDims& x, Method m) {
  if (x.B < 1 || x.T < 1 || x.p < 1 || x.d < 1) {
    throw ParameterError("layer dims must be positive");
  }
  if (NeedsRank(m) && (!x.r || *x.r < 1)) {
    throw ParameterError(MethodName(m) + " needs a positive rank r");
  }
}

void FillFlags(CostReport& c, Method m) {
  c.n_backprops =
      (m == Method::kGhostClip || m == Method::kMixGhostClip) ? 2 : 1;
  c.needs_forward_hook = m == Method::kOpacus || m == Method::kGhostClip ||
                         m == Method::kMixGhostClip || m == Method::kLoRA ||
                         m == Method::kAdapter;
}

void FillTime(const LayerDims& x, Method m, CostReport& c) {
  const double B = x.B, T = x.T, p = x.p, d = x.d;
  const double r = x.r.value_or(0);
  c.forward_and_output_grad_time = 4 * B * T * p * d;
  const double weight_base = 2 * B * T * p * d;
  switch (m) {
    case Method::kNonDpFull:
      c.train_base_time = weight_base;
      c.train_extra_time = 0;
      break;
    case Method::kOpacus:
      c.train_base_time = weight_base;
      c.train_extra_time = 2 * B * T * p * d;
      break;
    case Method::kGhostClip:
      c.train_base_time = weight_base;
      c.train_extra_time = 2 * B * T * p * d + 2 * B * T * T * (p + d);
      break;
    case Method::kMixGhostClip:
      c.train_base_time = weight_base;
      c.train_extra_time =
          2 * B * T * p * d + std::min(2 * B * T * T * (p + d), 2 * B * T * p * d);
      break;
    case Method::kLoRA:
      c.train_base_time = weight_base;
      c.train_extra_time = 2 * B * T * (p * r + d * r);
      break;
    case Method::kAdapter:
      c.train_base_time = weight_base;
      c.train_extra_time = 4 * B * T * p * r;
      break;
    case Method::kNonDpBias:
      c.train_base_time = B * T * p;
      c.train_extra_time = 0;
      break;
    case Method::kDpBias:
      c.train_base_time = B * T * p;
      c.train_extra_time = 3 * B * p;
      break;
  }
  c.total_time =
      c.forward_and_output_grad_time + c.train_base_time + c.train_extra_time;
}

void FillSpace(const LayerDims& x, Method m, CostReport& c) {
  const double B = x.B, T = x.T, p = x.p, d = x.d;
  const double r = x.r.value_or(0);
  c.space_forward = p * d + B * T * (p + d);
  const double weight_base = B * T * (p + d);
  switch (m) {
    case Method::kNonDpFull:
      c.space_train_base = weight_base;
      c.space_extra = 0;
      break;
    case Method::kOpacus:
      c.space_train_base = weight_base;
      c.space_extra = B * p * d;
      break;
    case Method::kGhostClip:
      c.space_train_base = weight_base;
      c.space_extra = 2 * B * T * T;
      break;
    case Method::kMixGhostClip:
      c.space_train_base = weight_base;
      c.space_extra = std::min(2 * B * T * T, 2 * B * p * d);
      break;
    case Method::kLoRA:
      c.space_train_base = weight_base;
      c.space_extra = B * (p * r + d * r);
      break;
    case Method::kAdapter:
      c.space_train_base = weight_base;
      c.space_extra = 2 * B * p * r;
      break;
    case Method::kNonDpBias:
      c.space_train_base = p;
      c.space_extra = 0;
      break;
    case Method::kDpBias:
      c.space_train_base = p;
      c.space_extra = B * p;
      break;
  }
  c.space_total = c.space_forward + c.space_train_base + c.space_extra;
}

}  // namespace

std::vector<Method> AllMethods() {
  return {Method::kNonDpFull, Method::kOpacus,  Method::kGhostClip,
          Method::kMixGhostClip, Method::kLoRA, Method::kAdapter,
          Method::kNonDpBias,  Method::kDpBias};
}

std::string MethodName(Method m) {
  switch (m) {
    case Method::kNonDpFull:
      return "nondp-full";
    case Method::kOpacus:
      return "opacus";
    case Method::kGhostClip:
      return "ghostclip";
    case Method::kMixGhostClip:
      return "mixghostclip";
    case Method::kLoRA:
      return "dp-lora";
    case Method::kAdapter:
      return "dp-adapter";
    case Method::kNonDpBias:
      return "nondp-bias";
    case Method::kDpBias:
      return "dp-bias";
  }
  return "unknown";
}

std::optional<Method> ParseMethod(const std::string& name) {
  for (Method m : AllMethods()) {
    if (MethodName(m) == name) return m;
  }
  return std::nullopt;
}

CostReport TimeCost(const LayerDims& dims, Method method) {
  Validate(dims, method);
  CostReport c;
  FillFlags(c, method);
  FillTime(dims, method, c);
  return c;
}

CostReport SpaceCost(const LayerDims& dims, Method method) {
  Validate(dims, method);
  CostReport c;
  FillFlags(c, method);
  FillSpace(dims, method, c);
  return c;
}

CostReport Cost(const LayerDims& dims, Method method) {
  Validate(dims, method);
  CostReport c;
  FillFlags(c, method);
  FillTime(dims, method, c);
  FillSpace(dims, method, c);
  return c;
}

double NetworkRatio(const std::vector<LayerDims>& layers, Method method_a,
                    Method method_b) {
  if (layers.empty()) throw ParameterError("network ratio needs a layer");
  double a = 0, b = 0;
  for (const LayerDims& l : layers) {
    a += TimeCost(l, method_a).total_time;
    b += TimeCost(l, method_b).total_time;
  }
  return a / b;
}

std::vector<LayerDims> NetworkLayerDims(const Network& net,
                                        const Shape& input) {
  const std::vector<std::optional<Shape>> lowered =
      net.LoweredInputShapes(input);
  std::vector<LayerDims> out;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Layer& l = net.layer(i);
    if (l.kind != LayerKind::kLinear && l.kind != LayerKind::kConv2d) continue;
    const Shape& s = *lowered[i];
    LayerDims dims;
    dims.B = static_cast<std::int64_t>(s[0]);
    dims.T = static_cast<std::int64_t>(s[1]);
    dims.d = static_cast<std::int64_t>(s[2]);
    dims.p = static_cast<std::int64_t>(l.out_features);
    out.push_back(dims);
  }
  return out;
}

std::vector<ParamReportRow> ParamReport(const Network& net) {
  std::vector<ParamReportRow> rows;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Layer& l = net.layer(i);
    if (!l.parametric()) continue;
    ParamReportRow row;
    row.layer = "layer" + std::to_string(i) + ":" + l.Describe();
    row.total = (l.weight ? l.weight->numel() : 0) +
                (l.bias ? l.bias->numel() : 0);
    row.bias = l.bias ? l.bias->numel() : 0;
    row.fraction = static_cast<double>(row.bias) / static_cast<double>(row.total);
    rows.push_back(row);
  }
  const ParamCount c = CountParams(net);
  rows.push_back({"total", c.total, c.bias, c.fraction});
  return rows;
}

}  // namespace dpbf
