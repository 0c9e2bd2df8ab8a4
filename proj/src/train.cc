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

#include "dpbf/train.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <utility>

#include "dpbf/accountant.h"
#include "dpbf/autograd.h"
#include "dpbf/errors.h"
#include "dpbf/ledger.h"
#include "dpbf/rng.h"

namespace dpbf {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kEvalChunk = 512;

double Median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

TrainMode InitialMode(const TrainConfig& c) {
  switch (c.mode) {
    case FineTuneMode::kFull:
      return TrainMode::kFull;
    case FineTuneMode::kBitFit:
      return TrainMode::kBitFit;
    case FineTuneMode::kLinearProbe:
      return TrainMode::kLinearProbe;
    case FineTuneMode::kTwoPhase:
      return c.two_phase_epochs > 0 ? TrainMode::kFull : TrainMode::kBitFit;
  }
  return TrainMode::kFull;
}

double LrFor(TrainMode mode, const TrainConfig& c) {
  if (mode == TrainMode::kBitFit) {
    return c.lr_bitfit.value_or(10.0 * c.optimizer.lr);
  }
  return c.optimizer.lr;
}

std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string FineTuneModeName(FineTuneMode mode) {
  switch (mode) {
    case FineTuneMode::kFull:
      return "full";
    case FineTuneMode::kBitFit:
      return "bitfit";
    case FineTuneMode::kLinearProbe:
      return "linear_probe";
    case FineTuneMode::kTwoPhase:
      return "two_phase";
  }
  return "unknown";
}

void TrainConfig::Validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("q must lie in (0, 1]");
  if (mode == FineTuneMode::kTwoPhase &&
      (two_phase_epochs < 0 || two_phase_epochs > epochs)) {
    throw ConfigError("two-phase X must lie in [0, epochs]");
  }
  if (!(optimizer.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (privacy) {
    PrivacySpec spec{q, privacy->sigma, privacy->clipping, 1,
                     privacy->allow_nonprivate};
    spec.Validate();
    if (!(privacy->delta > 0.0 && privacy->delta < 1.0)) {
      throw ConfigError("delta must lie in (0, 1)");
    }
  }
}

std::int64_t StepsPerEpoch(double q) {
  return static_cast<std::int64_t>(std::ceil(1.0 / q - 1e-12));
}

std::int64_t TotalSteps(const TrainConfig& config) {
  return StepsPerEpoch(config.q) * config.epochs;
}

Evaluation Evaluate(const Network& net, const Dataset& data,
                    const Shape& sample_shape) {
  Evaluation ev;
  std::size_t correct = 0;
  double loss = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t end = std::min(data.size(), start + kEvalChunk);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    Batch batch = GatherBatch(data, idx, sample_shape);
    LedgerScope scope(kTagWorkspace);
    const Tensor logits = Predict(net, batch.inputs);
    loss += LossSoftmaxCE(logits, batch.labels).loss;
    const std::size_t classes = logits.shape().back();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < classes; ++k) {
        if (logits[b * classes + k] > logits[b * classes + best]) best = k;
      }
      if (static_cast<int>(best) == batch.labels[b]) ++correct;
    }
  }
  if (data.size() > 0) {
    ev.mean_loss = loss / static_cast<double>(data.size());
    ev.accuracy =
        static_cast<double>(correct) / static_cast<double>(data.size());
  }
  return ev;
}

TrainResult Train(Network net, const Dataset& data, const TrainConfig& config) {
  config.Validate();
  const Shape sample_shape =
      config.sample_shape.empty() ? Shape{data.dims()} : config.sample_shape;
  const std::int64_t steps_per_epoch = StepsPerEpoch(config.q);

  net.SetMode(InitialMode(config));
  SeededRng sample_rng(config.seed, "sampling");
  SeededRng noise_rng(config.seed, "noise");
  OptimizerConfig opt_config = config.optimizer;
  opt_config.lr = LrFor(net.mode(), config);
  Optimizer optimizer(opt_config);

  TrainResult result;
  const bool is_private = config.privacy.has_value();
  PrivacySpec spec;
  if (is_private) {
    spec = {config.q, config.privacy->sigma, config.privacy->clipping, 1,
            config.privacy->allow_nonprivate};
  }
  auto eps_after = [&](std::int64_t steps) -> std::pair<double, int> {
    if (!is_private || spec.sigma <= 0.0) return {kInf, 0};
    if (steps == 0) return {0.0, 0};
    const EpsDelta e =
        ComputeEpsilon(config.q, spec.sigma, steps, config.privacy->delta);
    return {e.eps, e.alpha};
  };

  {
    const Evaluation ev = Evaluate(net, data, sample_shape);
    result.history.push_back(
        {0, 0, ev.mean_loss, ev.accuracy, eps_after(0).first, kNaN, kNaN});
  }

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.mode == FineTuneMode::kTwoPhase && config.two_phase_epochs > 0 &&
        epoch == config.two_phase_epochs + 1) {
      net.SetMode(TrainMode::kBitFit);
      optimizer.RetainTrainable(net);
      optimizer.set_lr(LrFor(TrainMode::kBitFit, config));
    }
    std::vector<double> norms;
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      const std::vector<std::size_t> idx =
          PoissonSample(data.size(), config.q, sample_rng);
      Batch batch = GatherBatch(data, idx, sample_shape);
      Gradients grads;
      double loss = 0.0;
      if (is_private) {
        PrivateGradient pg =
            net.mode() == TrainMode::kBitFit
                ? DpBitFitStep(net, batch, spec, noise_rng)
                : DpFullStep(net, batch, spec, config.strategy, noise_rng);
        grads = std::move(pg.noisy);
        loss = pg.loss;
        norms.insert(norms.end(), pg.per_sample_norms.begin(),
                     pg.per_sample_norms.end());
      } else if (batch.size() == 0) {
        LedgerScope scope(kTagGradient);
        for (const ConstParamRef& p : net.TrainableParameters()) {
          grads.Add(p.name, Tensor(p.tensor->shape()));
        }
      } else {
        BatchGradResult r = BatchGradients(net, batch);
        grads = std::move(r.grads);
        loss = r.loss;
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at step " +
                                  std::to_string(step + 1),
                              step + 1);
      }
      optimizer.Step(net, grads);
      ++step;
    }
    const Evaluation ev = Evaluate(net, data, sample_shape);
    if (!std::isfinite(ev.mean_loss)) {
      throw DivergenceError("non-finite training loss after step " +
                                std::to_string(step),
                            step);
    }
    double clip_fraction = kNaN;
    if (is_private && !norms.empty()) {
      std::size_t clipped = 0;
      for (double n : norms) {
        if (n > spec.clipping.threshold) ++clipped;
      }
      clip_fraction =
          static_cast<double>(clipped) / static_cast<double>(norms.size());
    }
    result.history.push_back({epoch, step, ev.mean_loss, ev.accuracy,
                              eps_after(step).first, Median(norms),
                              clip_fraction});
  }

  result.privacy.enabled = is_private;
  result.privacy.q = config.q;
  result.privacy.steps = step;
  if (is_private) {
    const auto [eps, alpha] = eps_after(step);
    result.privacy.eps = eps;
    result.privacy.alpha = alpha;
    result.privacy.delta = config.privacy->delta;
    result.privacy.sigma = spec.sigma;
  } else {
    result.privacy.eps = kInf;
  }
  result.net = std::move(net);
  return result;
}

TrainResult TwoPhaseTrain(Network net, const Dataset& data,
                          TrainConfig config, int full_epochs) {
  config.mode = FineTuneMode::kTwoPhase;
  config.two_phase_epochs = full_epochs;
  return Train(std::move(net), data, config);
}

void WriteMetricsCsv(std::ostream& out,
                     const std::vector<EpochMetrics>& history) {
  out << kMetricsHeader << "\n";
  for (const EpochMetrics& m : history) {
    out << m.epoch << "," << m.step << "," << FormatDouble(m.loss) << ","
        << FormatDouble(m.accuracy) << "," << FormatDouble(m.eps_so_far)
        << "," << FormatDouble(m.grad_norm_median) << ","
        << FormatDouble(m.clip_fraction) << "\n";
  }
}

}  // namespace dpbf
