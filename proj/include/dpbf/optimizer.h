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

#ifndef DPBF_OPTIMIZER_H_
#define DPBF_OPTIMIZER_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "dpbf/autograd.h"
#include "dpbf/nn.h"

namespace dpbf {

enum class OptimizerKind { kSgd, kAdam, kAdamW };

std::string OptimizerKindName(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // AdamW only; decoupled from the gradient.
  double weight_decay = 0.0;
};

// SGD / Adam / AdamW over the trainable parameters of a network. Moments are
// created lazily, shaped like their parameter.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  // `grads` must name exactly the trainable parameters.
  void Step(Network& net, const Gradients& grads);

  // Drops moment state of parameters that are no longer trainable.
  void RetainTrainable(const Network& net);

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::int64_t step_count() const { return step_; }
  bool has_state(std::string_view name) const;
  const OptimizerConfig& config() const { return config_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  OptimizerConfig config_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments, std::less<>> state_;
};

}  // namespace dpbf

#endif  // DPBF_OPTIMIZER_H_
