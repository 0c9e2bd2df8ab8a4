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

#include "dpbf/optimizer.h"

#include <cmath>
#include <utility>
#include <vector>

#include "dpbf/errors.h"
#include "dpbf/ledger.h"

namespace dpbf {

std::string OptimizerKindName(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd:
      return "sgd";
    case OptimizerKind::kAdam:
      return "adam";
    case OptimizerKind::kAdamW:
      return "adamw";
  }
  return "unknown";
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {}

bool Optimizer::has_state(std::string_view name) const {
  return state_.find(name) != state_.end();
}

void Optimizer::RetainTrainable(const Network& net) {
  std::map<std::string, Moments, std::less<>> kept;
  for (const ConstParamRef& p : net.TrainableParameters()) {
    auto it = state_.find(p.name);
    if (it != state_.end()) kept.emplace(p.name, std::move(it->second));
  }
  state_ = std::move(kept);
}

void Optimizer::Step(Network& net, const Gradients& grads) {
  std::vector<ParamRef> trainable;
  for (ParamRef& p : net.Parameters()) {
    if (p.trainable) trainable.push_back(p);
  }
  if (trainable.size() != grads.size()) {
    throw InternalError("optimizer got " + std::to_string(grads.size()) +
                        " gradients for " + std::to_string(trainable.size()) +
                        " trainable parameters");
  }
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    if (trainable[i].name != grads.name(i) ||
        trainable[i].tensor->shape() != grads.value(i).shape()) {
      throw InternalError("gradient " + grads.name(i) + " " +
                          grads.value(i).ShapeString() +
                          " does not match parameter " + trainable[i].name +
                          " " + trainable[i].tensor->ShapeString());
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    auto theta = trainable[i].tensor->data();
    auto g = grads.value(i).data();
    if (config_.kind == OptimizerKind::kSgd) {
      for (std::size_t k = 0; k < theta.size(); ++k) {
        theta[k] -= config_.lr * g[k];
      }
      continue;
    }
    auto it = state_.find(trainable[i].name);
    if (it == state_.end()) {
      LedgerScope scope(kTagOptimizer);
      const Shape& shape = trainable[i].tensor->shape();
      it = state_.emplace(trainable[i].name, Moments{Tensor(shape), Tensor(shape)})
               .first;
    }
    auto m = it->second.m.data();
    auto v = it->second.v.data();
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      if (config_.kind == OptimizerKind::kAdamW) {
        theta[k] -= config_.lr * config_.weight_decay * theta[k];
      }
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      theta[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace dpbf
