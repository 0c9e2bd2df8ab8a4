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

#include "dpbf/task.h"

#include <algorithm>
#include <string>

#include "dpbf/errors.h"
#include "dpbf/ledger.h"
#include "dpbf/nn.h"
#include "dpbf/rng.h"

namespace dpbf {
namespace {

Dataset MakeBlobs(const BlobsSpec& spec, std::uint64_t seed) {
  if (spec.classes < 1 || spec.classes > spec.dims) {
    throw ConfigError("blobs need 1 <= classes <= dims");
  }
  if (spec.n < 2 * spec.classes) {
    throw ConfigError("blobs need at least two points per class");
  }
  SeededRng rng(seed, "task");
  Dataset out;
  out.classes = spec.classes;
  LedgerScope scope(kTagData);
  out.features = Gaussian({spec.n, spec.dims}, 0.0, 1.0, rng);
  out.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t c = i % spec.classes;
    out.labels[i] = static_cast<int>(c);
    out.features.at(i, c) += spec.separation;
  }
  return out;
}

Dataset MakeTeacher(const TeacherSpec& spec, std::uint64_t seed) {
  if (spec.n < 1 || spec.dims < 1 || spec.classes < 2 || spec.hidden < 1) {
    throw ConfigError("teacher task needs n, dims, hidden >= 1 and "
                      "classes >= 2");
  }
  SeededRng net_rng(seed, "teacher");
  SeededRng data_rng(seed, "task");
  Network teacher({Layer::Linear(spec.dims, spec.hidden), Layer::ReLU(),
                   Layer::Linear(spec.hidden, spec.classes)});
  teacher.Initialize(net_rng);
  Dataset out;
  out.classes = spec.classes;
  LedgerScope scope(kTagData);
  out.features = Gaussian({spec.n, spec.dims}, 0.0, 1.0, data_rng);
  const Tensor logits = Predict(teacher, out.features);
  out.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::size_t best = 0;
    double best_v = 0.0;
    for (std::size_t k = 0; k < spec.classes; ++k) {
      const double v = logits.at(i, k) + spec.noise_std * data_rng.Normal();
      if (k == 0 || v > best_v) {
        best = k;
        best_v = v;
      }
    }
    out.labels[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

Dataset MakeTask(const SyntheticTask& task) {
  if (const auto* blobs = std::get_if<BlobsSpec>(&task.kind)) {
    return MakeBlobs(*blobs, task.seed);
  }
  return MakeTeacher(std::get<TeacherSpec>(task.kind), task.seed);
}

Batch GatherBatch(const Dataset& data, std::span<const std::size_t> indices,
                  const Shape& sample_shape) {
  const std::size_t dims = data.dims();
  if (NumElements(sample_shape) != dims) {
    throw DimensionError("sample shape " + ShapeString(sample_shape) +
                         " does not hold " + std::to_string(dims) +
                         " features");
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Batch batch;
  LedgerScope scope(kTagData);
  batch.inputs = Tensor(shape);
  batch.labels.reserve(indices.size());
  const double* src = data.features.data().data();
  double* dst = batch.inputs.data().data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy(src + indices[b] * dims, src + (indices[b] + 1) * dims,
              dst + b * dims);
    batch.labels.push_back(data.labels[indices[b]]);
  }
  return batch;
}

}  // namespace dpbf
