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

// Command-line entry point: training, benchmarks and the analytic tools.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpbf/accountant.h"
#include "dpbf/analysis.h"
#include "dpbf/bench.h"
#include "dpbf/checkpoint.h"
#include "dpbf/config.h"
#include "dpbf/errors.h"
#include "dpbf/parallel.h"
#include "dpbf/task.h"
#include "dpbf/train.h"
#include "json.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitDiverged = 3;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
};

// JSON has no infinity; non-finite epsilons are written as strings.
json Number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::vector<dpbf::Method> ParseMethods(const std::vector<std::string>& names) {
  std::vector<dpbf::Method> out;
  for (const std::string& n : names) {
    const auto m = dpbf::ParseMethod(n);
    if (!m) throw dpbf::ConfigError("unknown method '" + n + "'");
    out.push_back(*m);
  }
  return out;
}

// Writes `text` to out_dir/name when --out is set, else to stdout.
void Emit(const GlobalFlags& g, const std::string& name,
          const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out);
  const fs::path path = fs::path(g.out) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw dpbf::InputError("cannot write " + path.string());
  f << text;
  std::cout << path.string() << "\n";
}

dpbf::RunConfig LoadConfig(const GlobalFlags& g) {
  if (g.config.empty()) throw dpbf::ConfigError("--config is required");
  dpbf::RunConfig config = dpbf::LoadRunConfig(g.config);
  if (g.seed) {
    config.train.seed = *g.seed;
    config.task.seed = *g.seed;
  }
  if (!g.out.empty()) config.output_dir = g.out;
  return config;
}

int CmdTrain(const GlobalFlags& g) {
  dpbf::RunConfig config = dpbf::ResolvePrivacy(LoadConfig(g));
  const dpbf::Dataset data = dpbf::MakeTask(config.task);
  dpbf::Network net = dpbf::BuildNetwork(config);
  dpbf::TrainResult result = dpbf::Train(std::move(net), data, config.train);

  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "metrics.csv", std::ios::binary);
    dpbf::WriteMetricsCsv(f, result.history);
  }
  dpbf::SaveCheckpoint(result.net, (dir / "checkpoint.bin").string());
  const dpbf::PrivacyReport& p = result.privacy;
  json report = {{"private", p.enabled},
                 {"eps", Number(p.eps)},
                 {"delta", p.delta},
                 {"sigma", p.sigma},
                 {"steps", p.steps},
                 {"alpha", p.alpha},
                 {"q", p.q}};
  if (config.target_eps) report["target_eps"] = *config.target_eps;
  {
    std::ofstream f(dir / "privacy.json", std::ios::binary);
    f << report.dump(2) << "\n";
  }
  const dpbf::EpochMetrics& last = result.history.back();
  std::cout << "trained " << last.step << " steps; loss " << last.loss
            << ", accuracy " << last.accuracy << ", eps "
            << Number(p.eps).dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private bias-term fine-tuning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")
      ->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train from a config file");

  auto* scaling =
      app.add_subcommand("bench-scaling", "Time and memory versus T");
  std::vector<std::string> scaling_methods = {
      "nondp-full", "opacus", "ghostclip", "mixghostclip", "nondp-bias",
      "dp-bias"};
  std::vector<std::size_t> t_values = {128, 256, 512};
  dpbf::ScalingOptions scaling_opts;
  scaling->add_option("--methods", scaling_methods, "Comma-separated methods")
      ->delimiter(',');
  scaling->add_option("--T", t_values, "Sequence lengths, at least two")
      ->delimiter(',');
  scaling->add_option("--B", scaling_opts.batch_size, "Batch size");
  scaling->add_option("--d", scaling_opts.d, "Input features");
  scaling->add_option("--p", scaling_opts.p, "Output features");
  scaling->add_option("--reps", scaling_opts.timing.reps, "Timed reps");
  scaling->add_option("--warmups", scaling_opts.timing.warmups,
                      "Untimed reps");

  auto* models = app.add_subcommand("bench-models",
                                    "Max batch size under a memory budget");
  std::vector<std::string> model_methods = {"nondp-full", "opacus",
                                            "mixghostclip", "dp-bias"};
  dpbf::ModelsOptions model_opts;
  model_opts.widths = {32, 64, 128};
  models->add_option("--methods", model_methods, "Comma-separated methods")
      ->delimiter(',');
  models->add_option("--widths", model_opts.widths, "MLP widths")
      ->delimiter(',');
  models->add_option("--T", model_opts.T, "Sequence length");
  models->add_option("--budget", model_opts.memory_budget_bytes,
                     "Memory budget in bytes");
  models->add_option("--cap", model_opts.batch_cap, "Largest batch tried");
  models->add_option("--reps", model_opts.timing.reps, "Timed reps");
  models->add_option("--warmups", model_opts.timing.warmups,
                     "Untimed reps");

  auto* account = app.add_subcommand("account", "Epsilon for a DP-SGD run");
  double q = 0.0, sigma = 0.0, delta = 1e-5, eps = 0.0;
  std::int64_t steps = 1;
  account->add_option("--q", q)->required();
  account->add_option("--sigma", sigma)->required();
  account->add_option("--steps", steps)->required();
  account->add_option("--delta", delta)->required();

  auto* calibrate =
      app.add_subcommand("calibrate", "Noise multiplier for a target epsilon");
  calibrate->add_option("--eps", eps)->required();
  calibrate->add_option("--q", q)->required();
  calibrate->add_option("--steps", steps)->required();
  calibrate->add_option("--delta", delta)->required();

  auto* complexity =
      app.add_subcommand("complexity", "Per-layer time and space model");
  dpbf::LayerDims dims;
  std::int64_t rank = 0;
  std::vector<std::string> complexity_methods;
  complexity->add_option("--B", dims.B);
  complexity->add_option("--T", dims.T);
  complexity->add_option("--p", dims.p);
  complexity->add_option("--d", dims.d);
  complexity->add_option("--r", rank, "LoRA / Adapter rank");
  complexity->add_option("--methods", complexity_methods,
                         "Comma-separated methods (default: all)")
      ->delimiter(',');

  auto* params =
      app.add_subcommand("param-report", "Bias parameter counts per layer");
  std::string layers_json;
  params->add_option("--network", layers_json, "Layer list (JSON)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.threads) dpbf::SetThreadCount(*g.threads);
    const std::uint64_t seed = g.seed.value_or(0);
    if (train->parsed()) return CmdTrain(g);

    if (scaling->parsed()) {
      scaling_opts.methods = ParseMethods(scaling_methods);
      scaling_opts.t_values = t_values;
      scaling_opts.seed = seed;
      std::ostringstream os;
      dpbf::WriteBenchCsv(os, dpbf::BenchScaling(scaling_opts));
      Emit(g, "bench_scaling.csv", os.str());
      return kExitOk;
    }
    if (models->parsed()) {
      model_opts.methods = ParseMethods(model_methods);
      model_opts.seed = seed;
      std::ostringstream os;
      dpbf::WriteBenchCsv(os, dpbf::BenchModels(model_opts));
      Emit(g, "bench_models.csv", os.str());
      return kExitOk;
    }
    if (account->parsed()) {
      const dpbf::EpsDelta e = dpbf::ComputeEpsilon(q, sigma, steps, delta);
      json j = {{"eps", Number(e.eps)}, {"alpha", e.alpha},
                {"sigma", sigma},       {"steps", steps},
                {"q", q},               {"delta", delta}};
      Emit(g, "account.json", j.dump(2) + "\n");
      return kExitOk;
    }
    if (calibrate->parsed()) {
      const double s = dpbf::CalibrateSigma(eps, delta, q, steps);
      const dpbf::EpsDelta e = dpbf::ComputeEpsilon(q, s, steps, delta);
      json j = {{"eps", Number(e.eps)}, {"alpha", e.alpha}, {"sigma", s},
                {"steps", steps},       {"q", q},           {"delta", delta},
                {"target_eps", eps}};
      Emit(g, "calibrate.json", j.dump(2) + "\n");
      return kExitOk;
    }
    if (complexity->parsed()) {
      std::vector<dpbf::Method> methods =
          complexity_methods.empty() ? dpbf::AllMethods()
                                     : ParseMethods(complexity_methods);
      std::vector<dpbf::LayerDims> layers;
      if (!g.config.empty()) {
        const dpbf::RunConfig config = LoadConfig(g);
        dpbf::Network net(config.layers);
        dpbf::Shape in = config.input_shape;
        in.insert(in.begin(), static_cast<std::size_t>(dims.B));
        layers = dpbf::NetworkLayerDims(net, in);
      } else {
        layers.push_back(dims);
      }
      for (auto& l : layers) {
        if (rank > 0) l.r = rank;
      }
      std::ostringstream os;
      os << "method,layer_index,B,T,p,d,r,time_total,space_total,"
            "n_backprops,forward_hook,time_forward,time_base,time_extra,"
            "space_forward,space_base,space_extra\n";
      os << std::setprecision(17);
      for (dpbf::Method m : methods) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
          const dpbf::LayerDims& l = layers[i];
          const bool needs_rank =
              m == dpbf::Method::kLoRA || m == dpbf::Method::kAdapter;
          if (needs_rank && !l.r) continue;
          const dpbf::CostReport c = dpbf::Cost(l, m);
          os << dpbf::MethodName(m) << "," << i << "," << l.B << "," << l.T
             << "," << l.p << "," << l.d << ",";
          if (l.r) os << *l.r;
          os << "," << c.total_time << "," << c.space_total << ","
             << c.n_backprops << "," << (c.needs_forward_hook ? 1 : 0) << ","
             << c.forward_and_output_grad_time << "," << c.train_base_time
             << "," << c.train_extra_time << "," << c.space_forward << ","
             << c.space_train_base << "," << c.space_extra << "\n";
        }
      }
      Emit(g, "complexity.csv", os.str());
      return kExitOk;
    }
    if (params->parsed()) {
      std::vector<dpbf::Layer> layers;
      if (!layers_json.empty()) {
        layers = dpbf::ParseLayerList(layers_json);
      } else {
        layers = LoadConfig(g).layers;
      }
      const dpbf::Network net(std::move(layers));
      std::ostringstream os;
      os << "layer,total,bias,fraction\n" << std::setprecision(17);
      for (const dpbf::ParamReportRow& r : dpbf::ParamReport(net)) {
        os << r.layer << "," << r.total << "," << r.bias << "," << r.fraction
           << "\n";
      }
      Emit(g, "param_report.csv", os.str());
      return kExitOk;
    }
  } catch (const dpbf::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const dpbf::InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const dpbf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
