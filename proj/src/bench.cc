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

#include "dpbf/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <climits>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <tuple>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "dpbf/errors.h"
#include "dpbf/ledger.h"
#include "dpbf/ops.h"
#include "dpbf/privacy.h"
#include "dpbf/rng.h"

namespace dpbf {
namespace {

using Clock = std::chrono::steady_clock;

// Stops glibc from trimming and regrowing the heap around the multi-megabyte
// step buffers. Left alone, the resulting page faults land in whichever
// microsecond-scale phase allocates next and swamp the timers.
void PinAllocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, INT_MAX);
  });
#endif
}

double Median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

bool IsPrivate(Method m) {
  return m != Method::kNonDpFull && m != Method::kNonDpBias;
}

bool IsBiasOnly(Method m) {
  return m == Method::kNonDpBias || m == Method::kDpBias;
}

Network MakeNetwork(const BenchModel& model, Method method,
                    std::uint64_t seed) {
  LedgerScope scope(kTagParameter);
  Network net(model.layers);
  SeededRng rng(seed, "init");
  net.Initialize(rng);
  net.SetMode(IsBiasOnly(method) ? TrainMode::kBitFit : TrainMode::kFull);
  return net;
}

Batch MakeBatch(const BenchModel& model, std::size_t batch_size,
                std::size_t classes, std::uint64_t seed) {
  LedgerScope scope(kTagData);
  SeededRng rng(seed, "bench-data");
  Shape shape = model.sample_shape;
  shape.insert(shape.begin(), batch_size);
  Batch batch;
  batch.inputs = Gaussian(shape, 0.0, 1.0, rng);
  const std::size_t tokens = batch_size * model.sample_shape.front();
  batch.labels.resize(tokens);
  for (int& y : batch.labels) {
    y = static_cast<int>(rng.NextU64() % classes);
  }
  return batch;
}

std::size_t Classes(const Network& net, const BenchModel& model) {
  Shape in = model.sample_shape;
  in.insert(in.begin(), 1);
  return net.OutputShape(in).back();
}

// The bench measures with sigma = 1 and Abadi clipping at R = 1.
PrivacySpec BenchPrivacy() {
  PrivacySpec spec;
  spec.q = 1.0;
  spec.sigma = 1.0;
  spec.clipping = ClippingFn::Abadi(1.0);
  return spec;
}

StepMeasurement RunStep(const Network& net, const Batch& batch,
                        Method method, SeededRng& noise_rng) {
  AllocationLedger& ledger = AllocationLedger::Global();
  ledger.ResetPeak();
  StepMeasurement m;
  const auto start = Clock::now();
  double loss = 0.0;
  if (!IsPrivate(method)) {
    BatchGradResult r = BatchGradients(net, batch);
    loss = r.loss;
  } else {
    PrivateGradient pg;
    const PrivacySpec spec = BenchPrivacy();
    switch (method) {
      case Method::kDpBias:
        pg = DpBitFitStep(net, batch, spec, noise_rng);
        break;
      case Method::kOpacus:
        pg = DpFullStep(net, batch, spec, FullStrategy::kOpacus, noise_rng);
        break;
      case Method::kGhostClip:
        pg = DpFullStep(net, batch, spec, FullStrategy::kGhost, noise_rng);
        break;
      case Method::kMixGhostClip:
        pg = DpFullStep(net, batch, spec, FullStrategy::kMixed, noise_rng);
        break;
      default:
        throw ConfigError("method " + MethodName(method) +
                          " cannot be measured");
    }
    loss = pg.loss;
    const StepProfile& p = pg.profile;
    m.norm_phase_seconds = p.norm_seconds;
    m.dp_overhead_seconds = p.norm_seconds + p.aggregate_seconds +
                            p.clip_seconds + p.noise_seconds +
                            p.second_pass_seconds;
  }
  m.wall_seconds =
      std::chrono::duration<double>(Clock::now() - start).count();
  m.finite = std::isfinite(loss);
  m.peak_bytes = ledger.peak_bytes();
  m.activation_cache_bytes = ledger.peak_bytes(kTagActivationCache);
  m.per_sample_grad_bytes = ledger.peak_bytes(kTagPerSampleGrad);
  return m;
}

std::string FormatDouble(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

bool IsBenchable(Method method) {
  return method != Method::kLoRA && method != Method::kAdapter;
}

void WriteBenchCsv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << kBenchHeader << "\n";
  for (const BenchRow& r : rows) {
    out << r.method << "," << r.B << "," << r.T << "," << r.model_tag << ","
        << FormatDouble(r.step_wall_seconds) << "," << r.peak_bytes << ","
        << r.activation_cache_bytes << "," << r.per_sample_grad_bytes << ","
        << FormatDouble(r.dp_overhead_seconds) << ","
        << FormatDouble(r.norm_phase_seconds) << ",";
    if (r.max_batch) out << *r.max_batch;
    out << ",";
    if (r.throughput) out << FormatDouble(*r.throughput);
    out << "," << r.completed_reps << "," << (r.flagged ? "nonfinite" : "ok")
        << "\n";
  }
}

BenchModel LinearBenchModel(std::size_t T, std::size_t d, std::size_t p) {
  BenchModel m;
  m.tag = "linear" + std::to_string(d) + "x" + std::to_string(p);
  m.layers.push_back(Layer::Linear(d, p));
  m.sample_shape = {T, d};
  return m;
}

BenchModel MlpBenchModel(std::size_t T, std::size_t width) {
  BenchModel m;
  m.tag = "mlp" + std::to_string(width);
  m.layers.push_back(Layer::Linear(width, width));
  m.layers.push_back(Layer::ReLU());
  m.layers.push_back(Layer::Linear(width, width));
  m.sample_shape = {T, width};
  return m;
}

StepMeasurement MeasureStep(const BenchModel& model, Method method,
                            std::size_t batch_size, std::uint64_t seed) {
  if (!IsBenchable(method)) {
    throw ConfigError("method " + MethodName(method) + " cannot be measured");
  }
  StrictLedgerGuard strict;
  const Network net = MakeNetwork(model, method, seed);
  const Batch batch =
      MakeBatch(model, batch_size, Classes(net, model), seed);
  SeededRng noise(seed, "noise");
  return RunStep(net, batch, method, noise);
}

BenchRow MeasureRow(const BenchModel& model, Method method,
                    std::size_t batch_size, const TimingOptions& timing,
                    std::uint64_t seed) {
  if (!IsBenchable(method)) {
    throw ConfigError("method " + MethodName(method) + " cannot be measured");
  }
  if (timing.reps < 1 || timing.warmups < 0) {
    throw ConfigError("need at least one timed rep");
  }
  PinAllocator();
  StrictLedgerGuard strict;
  const Network net = MakeNetwork(model, method, seed);
  const Batch batch =
      MakeBatch(model, batch_size, Classes(net, model), seed);
  SeededRng noise(seed, "noise");

  BenchRow row;
  row.method = MethodName(method);
  row.B = batch_size;
  row.T = model.sample_shape.front();
  row.model_tag = model.tag;
  for (int i = 0; i < timing.warmups; ++i) RunStep(net, batch, method, noise);
  std::vector<double> wall, overhead, norm;
  for (int i = 0; i < timing.reps; ++i) {
    const StepMeasurement m = RunStep(net, batch, method, noise);
    row.peak_bytes = std::max(row.peak_bytes, m.peak_bytes);
    row.activation_cache_bytes =
        std::max(row.activation_cache_bytes, m.activation_cache_bytes);
    row.per_sample_grad_bytes =
        std::max(row.per_sample_grad_bytes, m.per_sample_grad_bytes);
    if (!m.finite) {
      row.flagged = true;
      continue;
    }
    wall.push_back(m.wall_seconds);
    overhead.push_back(m.dp_overhead_seconds);
    norm.push_back(m.norm_phase_seconds);
  }
  row.completed_reps = static_cast<int>(wall.size());
  row.step_wall_seconds = Median(wall);
  row.dp_overhead_seconds = Median(overhead);
  row.norm_phase_seconds = Median(norm);
  return row;
}

std::vector<BenchRow> BenchScaling(const ScalingOptions& options) {
  if (options.t_values.size() < 2) {
    throw ConfigError("bench-scaling needs at least two values of T");
  }
  if (options.methods.empty()) throw ConfigError("no methods to measure");
  if (options.batch_size == 0 || options.d == 0 || options.p == 0) {
    throw ConfigError("B, d and p must be positive");
  }
  std::vector<BenchRow> rows;
  for (Method m : options.methods) {
    for (std::size_t t : options.t_values) {
      if (t == 0) throw ConfigError("T must be positive");
      rows.push_back(MeasureRow(LinearBenchModel(t, options.d, options.p), m,
                                options.batch_size, options.timing,
                                options.seed));
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BenchRow& a, const BenchRow& b) {
                     return std::tie(a.method, a.T) < std::tie(b.method, b.T);
                   });
  return rows;
}

std::size_t PeakBytesAt(const BenchModel& model, Method method,
                        std::size_t batch_size, std::uint64_t seed) {
  return MeasureStep(model, method, batch_size, seed).peak_bytes;
}

std::size_t MaxBatch(const BenchModel& model, Method method,
                     std::size_t budget_bytes, std::size_t cap,
                     std::uint64_t seed) {
  auto fits = [&](std::size_t b) {
    return PeakBytesAt(model, method, b, seed) <= budget_bytes;
  };
  if (cap == 0 || !fits(1)) return 0;
  std::size_t good = 1;
  std::size_t bad = 0;  // 0 means no failing size found yet
  while (bad == 0) {
    if (good >= cap) return cap;
    const std::size_t next = std::min(cap, good * 2);
    if (fits(next)) {
      good = next;
    } else {
      bad = next;
    }
  }
  while (bad - good > 1) {
    const std::size_t mid = good + (bad - good) / 2;
    if (fits(mid)) {
      good = mid;
    } else {
      bad = mid;
    }
  }
  return good;
}

std::vector<BenchRow> BenchModels(const ModelsOptions& options) {
  if (options.methods.empty()) throw ConfigError("no methods to measure");
  if (options.widths.empty()) throw ConfigError("no model sizes given");
  std::vector<BenchRow> rows;
  for (std::size_t w : options.widths) {
    if (w == 0) throw ConfigError("model width must be positive");
    const BenchModel model = MlpBenchModel(options.T, w);
    bool any_fits = false;
    for (Method m : options.methods) {
      const std::size_t max_batch = MaxBatch(
          model, m, options.memory_budget_bytes, options.batch_cap,
          options.seed);
      BenchRow row;
      if (max_batch > 0) {
        any_fits = true;
        row = MeasureRow(model, m, max_batch, options.timing, options.seed);
        row.throughput =
            static_cast<double>(max_batch) / row.step_wall_seconds;
      } else {
        row.method = MethodName(m);
        row.T = options.T;
        row.model_tag = model.tag;
        row.peak_bytes = PeakBytesAt(model, m, 1, options.seed);
      }
      row.max_batch = max_batch;
      rows.push_back(row);
    }
    if (!any_fits) {
      throw ConfigError("memory budget of " +
                        std::to_string(options.memory_budget_bytes) +
                        " bytes does not fit a single sample of " + model.tag +
                        " for any method");
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BenchRow& a, const BenchRow& b) {
                     return std::tie(a.method, a.model_tag) <
                            std::tie(b.method, b.model_tag);
                   });
  return rows;
}

}  // namespace dpbf
