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

#include "dpbf/config.h"

#include <fstream>
#include <sstream>
#include <utility>

#include "dpbf/accountant.h"
#include "dpbf/errors.h"
#include "dpbf/rng.h"
#include "json.hpp"

namespace dpbf {
namespace {

using nlohmann::json;

[[noreturn]] void Fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& Require(const json& obj, const std::string& key,
                    const std::string& path) {
  const std::string child = path + "/" + key;
  if (!obj.is_object()) Fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) Fail(child, "missing required field");
  return *it;
}

const json* Find(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

double AsNumber(const json& v, const std::string& path) {
  if (!v.is_number()) Fail(path, "expected a number");
  return v.get<double>();
}

std::size_t AsPositive(const json& v, const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    Fail(path, "expected a positive integer");
  }
  const long long n = v.get<long long>();
  if (n <= 0) Fail(path, "expected a positive integer, got " +
                             std::to_string(n));
  return static_cast<std::size_t>(n);
}

std::size_t AsNonNegative(const json& v, const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    Fail(path, "expected a non-negative integer");
  }
  const long long n = v.get<long long>();
  if (n < 0) Fail(path, "expected a non-negative integer");
  return static_cast<std::size_t>(n);
}

std::string AsString(const json& v, const std::string& path) {
  if (!v.is_string()) Fail(path, "expected a string");
  return v.get<std::string>();
}

double NumberOr(const json& obj, const std::string& key,
                const std::string& path, double fallback) {
  const json* v = Find(obj, key);
  return v ? AsNumber(*v, path + "/" + key) : fallback;
}

std::size_t PositiveOr(const json& obj, const std::string& key,
                       const std::string& path, std::size_t fallback) {
  const json* v = Find(obj, key);
  return v ? AsPositive(*v, path + "/" + key) : fallback;
}

// "kernel": 3 or [3, 3].
std::pair<std::size_t, std::size_t> Pair(const json& obj,
                                         const std::string& key,
                                         const std::string& path,
                                         std::size_t fallback,
                                         bool allow_zero) {
  const json* v = Find(obj, key);
  const std::string child = path + "/" + key;
  if (v == nullptr) return {fallback, fallback};
  auto one = [&](const json& x, const std::string& p) {
    return allow_zero ? AsNonNegative(x, p) : AsPositive(x, p);
  };
  if (v->is_array()) {
    if (v->size() != 2) Fail(child, "expected two values");
    return {one((*v)[0], child + "/0"), one((*v)[1], child + "/1")};
  }
  const std::size_t n = one(*v, child);
  return {n, n};
}

SyntheticTask ParseTask(const json& j, const std::string& path,
                        std::uint64_t seed) {
  SyntheticTask task;
  task.seed = seed;
  if (const json* s = Find(j, "seed")) {
    if (!s->is_number_unsigned() && !s->is_number_integer()) {
      Fail(path + "/seed", "expected an unsigned integer");
    }
    task.seed = s->get<std::uint64_t>();
  }
  const std::string kind = AsString(Require(j, "kind", path), path + "/kind");
  if (kind == "blobs") {
    BlobsSpec b;
    b.n = AsPositive(Require(j, "n", path), path + "/n");
    b.dims = PositiveOr(j, "dims", path, b.dims);
    b.classes = PositiveOr(j, "classes", path, b.classes);
    b.separation = NumberOr(j, "separation", path, b.separation);
    task.kind = b;
  } else if (kind == "teacher") {
    TeacherSpec t;
    t.n = AsPositive(Require(j, "n", path), path + "/n");
    t.dims = PositiveOr(j, "dims", path, t.dims);
    t.classes = PositiveOr(j, "classes", path, t.classes);
    t.hidden = PositiveOr(j, "hidden", path, t.hidden);
    t.noise_std = NumberOr(j, "noise_std", path, t.noise_std);
    if (t.noise_std < 0) Fail(path + "/noise_std", "must be >= 0");
    task.kind = t;
  } else {
    Fail(path + "/kind", "unknown task kind '" + kind + "'");
  }
  return task;
}

Layer ParseLayer(const json& j, const std::string& path) {
  const std::string type = AsString(Require(j, "type", path), path + "/type");
  if (type == "linear") {
    return Layer::Linear(AsPositive(Require(j, "in", path), path + "/in"),
                         AsPositive(Require(j, "out", path), path + "/out"));
  }
  if (type == "conv2d") {
    Window2d w;
    std::tie(w.kernel_h, w.kernel_w) = Pair(j, "kernel", path, 1, false);
    std::tie(w.stride_h, w.stride_w) = Pair(j, "stride", path, 1, false);
    std::tie(w.pad_h, w.pad_w) = Pair(j, "padding", path, 0, true);
    return Layer::Conv2d(
        AsPositive(Require(j, "in_channels", path), path + "/in_channels"),
        AsPositive(Require(j, "out_channels", path), path + "/out_channels"),
        w);
  }
  if (type == "layernorm") {
    return Layer::LayerNorm(
        AsPositive(Require(j, "features", path), path + "/features"));
  }
  if (type == "relu") return Layer::ReLU();
  if (type == "flatten") return Layer::Flatten();
  Fail(path + "/type", "unknown layer type '" + type + "'");
}

ClippingFn ParseClipping(const json& j, const std::string& path) {
  ClippingFn fn;
  if (const json* c = Find(j, "clipping")) {
    const auto kind = ParseClipKind(AsString(*c, path + "/clipping"));
    if (!kind) Fail(path + "/clipping", "expected abadi, autos or noclip");
    fn.kind = *kind;
  }
  fn.threshold = NumberOr(j, "R", path, fn.threshold);
  fn.gamma = NumberOr(j, "gamma", path, fn.gamma);
  if (fn.kind != ClipKind::kNoClip && !(fn.threshold > 0.0)) {
    Fail(path + "/R", "must be > 0");
  }
  if (fn.kind == ClipKind::kAutoS && !(fn.gamma > 0.0)) {
    Fail(path + "/gamma", "must be > 0");
  }
  return fn;
}

OptimizerConfig ParseOptimizer(const json& j, const std::string& path,
                               std::optional<double>* lr_bitfit) {
  OptimizerConfig c;
  if (const json* k = Find(j, "kind")) {
    const auto kind = ParseOptimizerKind(AsString(*k, path + "/kind"));
    if (!kind) Fail(path + "/kind", "expected sgd, adam or adamw");
    c.kind = *kind;
  }
  c.lr = NumberOr(j, "lr", path, c.lr);
  if (!(c.lr > 0.0)) Fail(path + "/lr", "must be > 0");
  if (const json* v = Find(j, "lr_bitfit")) {
    *lr_bitfit = AsNumber(*v, path + "/lr_bitfit");
    if (!(**lr_bitfit > 0.0)) Fail(path + "/lr_bitfit", "must be > 0");
  }
  c.beta1 = NumberOr(j, "beta1", path, c.beta1);
  c.beta2 = NumberOr(j, "beta2", path, c.beta2);
  c.eps = NumberOr(j, "eps", path, c.eps);
  c.weight_decay = NumberOr(j, "weight_decay", path, c.weight_decay);
  if (!(c.beta1 >= 0 && c.beta1 < 1)) Fail(path + "/beta1", "must be in [0, 1)");
  if (!(c.beta2 >= 0 && c.beta2 < 1)) Fail(path + "/beta2", "must be in [0, 1)");
  if (!(c.eps > 0)) Fail(path + "/eps", "must be > 0");
  if (c.weight_decay < 0) Fail(path + "/weight_decay", "must be >= 0");
  return c;
}

std::size_t TaskSize(const SyntheticTask& task) {
  return std::visit([](const auto& s) { return s.n; }, task.kind);
}

std::size_t TaskDims(const SyntheticTask& task) {
  return std::visit([](const auto& s) { return s.dims; }, task.kind);
}

}  // namespace

std::optional<FineTuneMode> ParseFineTuneMode(const std::string& name) {
  if (name == "full") return FineTuneMode::kFull;
  if (name == "bitfit") return FineTuneMode::kBitFit;
  if (name == "linear_probe") return FineTuneMode::kLinearProbe;
  if (name == "two_phase") return FineTuneMode::kTwoPhase;
  return std::nullopt;
}

std::optional<ClipKind> ParseClipKind(const std::string& name) {
  if (name == "abadi") return ClipKind::kAbadi;
  if (name == "autos" || name == "auto-s") return ClipKind::kAutoS;
  if (name == "noclip" || name == "none") return ClipKind::kNoClip;
  return std::nullopt;
}

std::optional<FullStrategy> ParseFullStrategy(const std::string& name) {
  if (name == "opacus") return FullStrategy::kOpacus;
  if (name == "ghost" || name == "ghostclip") return FullStrategy::kGhost;
  if (name == "mixed" || name == "mixghostclip") return FullStrategy::kMixed;
  return std::nullopt;
}

std::optional<OptimizerKind> ParseOptimizerKind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "adamw") return OptimizerKind::kAdamW;
  return std::nullopt;
}

RunConfig ParseRunConfig(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("/: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) Fail("", "top level must be an object");

  RunConfig config;
  std::uint64_t seed = 0;
  if (const json* s = Find(root, "seed")) {
    if (!s->is_number_unsigned() && !s->is_number_integer()) {
      Fail("/seed", "expected an unsigned integer");
    }
    seed = s->get<std::uint64_t>();
  }
  config.train.seed = seed;
  config.task = ParseTask(Require(root, "task", ""), "/task", seed);
  const std::size_t n = TaskSize(config.task);

  const json& net = Require(root, "network", "");
  const json* layers = &net;
  if (net.is_object()) {
    layers = &Require(net, "layers", "/network");
    if (const json* in = Find(net, "input")) {
      if (!in->is_array() || in->empty()) {
        Fail("/network/input", "expected a non-empty array");
      }
      for (std::size_t i = 0; i < in->size(); ++i) {
        config.input_shape.push_back(
            AsPositive((*in)[i], "/network/input/" + std::to_string(i)));
      }
    }
  }
  const std::string layers_path = net.is_object() ? "/network/layers"
                                                  : "/network";
  if (!layers->is_array() || layers->empty()) {
    Fail(layers_path, "expected a non-empty layer list");
  }
  for (std::size_t i = 0; i < layers->size(); ++i) {
    config.layers.push_back(
        ParseLayer((*layers)[i], layers_path + "/" + std::to_string(i)));
  }
  if (config.input_shape.empty()) config.input_shape = {TaskDims(config.task)};
  if (NumElements(config.input_shape) != TaskDims(config.task)) {
    Fail("/network/input", "element count " +
                               std::to_string(NumElements(config.input_shape)) +
                               " differs from task dims " +
                               std::to_string(TaskDims(config.task)));
  }
  {
    Network probe(config.layers);
    Shape in = config.input_shape;
    in.insert(in.begin(), 1);
    try {
      const Shape out = probe.OutputShape(in);
      std::size_t classes = std::visit(
          [](const auto& s) { return s.classes; }, config.task.kind);
      if (out.size() != 2 || out[1] != classes) {
        Fail("/network", "output shape " + ShapeString(out) +
                             " does not give one logit per class (" +
                             std::to_string(classes) + ")");
      }
    } catch (const DimensionError& e) {
      Fail("/network", e.what());
    }
  }
  config.train.sample_shape = config.input_shape;

  TrainConfig& t = config.train;
  const std::string mode = AsString(Require(root, "mode", ""), "/mode");
  const auto parsed_mode = ParseFineTuneMode(mode);
  if (!parsed_mode) {
    Fail("/mode", "expected full, bitfit, linear_probe or two_phase");
  }
  t.mode = *parsed_mode;
  t.epochs = static_cast<int>(AsPositive(Require(root, "epochs", ""), "/epochs"));
  if (t.mode == FineTuneMode::kTwoPhase) {
    t.two_phase_epochs = static_cast<int>(AsNonNegative(
        Require(root, "two_phase_epochs", ""), "/two_phase_epochs"));
    if (t.two_phase_epochs > t.epochs) {
      Fail("/two_phase_epochs", "must lie in [0, epochs]");
    }
  }

  const json* q = Find(root, "q");
  const json* bs = Find(root, "batch_size");
  if ((q == nullptr) == (bs == nullptr)) {
    Fail("/q", "give exactly one of q and batch_size");
  }
  if (q) {
    t.q = AsNumber(*q, "/q");
    if (!(t.q > 0.0 && t.q <= 1.0)) Fail("/q", "must lie in (0, 1]");
  } else {
    const std::size_t b = AsPositive(*bs, "/batch_size");
    if (b > n) Fail("/batch_size", "exceeds the dataset size");
    t.q = static_cast<double>(b) / static_cast<double>(n);
  }

  if (const json* s = Find(root, "strategy")) {
    const auto strategy = ParseFullStrategy(AsString(*s, "/strategy"));
    if (!strategy) Fail("/strategy", "expected opacus, ghost or mixed");
    t.strategy = *strategy;
  }
  if (const json* o = Find(root, "optimizer")) {
    t.optimizer = ParseOptimizer(*o, "/optimizer", &t.lr_bitfit);
  }

  if (const json* p = Find(root, "privacy")) {
    const std::string path = "/privacy";
    if (!p->is_object()) Fail(path, "expected an object");
    PrivacySettings ps;
    ps.clipping = ParseClipping(*p, path);
    ps.delta = NumberOr(*p, "delta", path, 0.5 / static_cast<double>(n));
    if (!(ps.delta > 0.0 && ps.delta < 1.0)) {
      Fail(path + "/delta", "must lie in (0, 1)");
    }
    if (const json* ack = Find(*p, "non_private_ack")) {
      if (!ack->is_boolean()) Fail(path + "/non_private_ack", "expected bool");
      ps.allow_nonprivate = ack->get<bool>();
    }
    const json* eps = Find(*p, "eps");
    const json* sigma = Find(*p, "sigma");
    if ((eps == nullptr) == (sigma == nullptr)) {
      Fail(path + "/eps", "give exactly one of eps and sigma");
    }
    if (eps) {
      config.target_eps = AsNumber(*eps, path + "/eps");
      if (!(*config.target_eps > 0.0)) Fail(path + "/eps", "must be > 0");
      ps.sigma = 0.0;  // resolved by ResolvePrivacy
    } else {
      ps.sigma = AsNumber(*sigma, path + "/sigma");
      if (ps.sigma < 0.0) Fail(path + "/sigma", "must be >= 0");
    }
    if (ps.clipping.kind == ClipKind::kNoClip && !ps.allow_nonprivate &&
        (eps != nullptr || ps.sigma > 0.0)) {
      Fail(path + "/clipping",
           "noclip with noise has unbounded sensitivity; set "
           "non_private_ack to true to run it anyway");
    }
    t.privacy = ps;
  }

  if (const json* out = Find(root, "output_dir")) {
    config.output_dir = AsString(*out, "/output_dir");
  }
  return config;
}

std::vector<Layer> ParseLayerList(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("/: invalid JSON: ") + e.what());
  }
  if (!root.is_array() || root.empty()) {
    Fail("", "expected a non-empty layer list");
  }
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < root.size(); ++i) {
    layers.push_back(ParseLayer(root[i], "/" + std::to_string(i)));
  }
  return layers;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("/: cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return ParseRunConfig(text.str());
}

RunConfig ResolvePrivacy(RunConfig config) {
  if (config.target_eps && config.train.privacy) {
    try {
      config.train.privacy->sigma =
          CalibrateSigma(*config.target_eps, config.train.privacy->delta,
                         config.train.q, TotalSteps(config.train));
    } catch (const CalibrationError& e) {
      throw ConfigError(std::string("/privacy/eps: ") + e.what());
    }
  }
  return config;
}

Network BuildNetwork(const RunConfig& config) {
  Network net(config.layers);
  SeededRng rng(config.train.seed, "init");
  net.Initialize(rng);
  return net;
}

}  // namespace dpbf
