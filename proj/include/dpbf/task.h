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

#ifndef DPBF_TASK_H_
#define DPBF_TASK_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "dpbf/autograd.h"
#include "dpbf/tensor.h"

namespace dpbf {

// Class c is centered at separation * e_c with unit-variance spread.
struct BlobsSpec {
  std::size_t n = 200;
  std::size_t dims = 2;
  std::size_t classes = 2;
  double separation = 4.0;
};

// Labels are argmax of a frozen random MLP dims -> hidden -> classes, plus
// Gaussian observation noise on the logits.
struct TeacherSpec {
  std::size_t n = 200;
  std::size_t dims = 8;
  std::size_t classes = 2;
  std::size_t hidden = 16;
  double noise_std = 0.1;
};

struct SyntheticTask {
  std::variant<BlobsSpec, TeacherSpec> kind;
  std::uint64_t seed = 0;
};

struct Dataset {
  Tensor features;  // [n x dims]
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return features.dim(1); }
};

Dataset MakeTask(const SyntheticTask& task);

// Rows `indices` reshaped to [B, sample_shape...].
Batch GatherBatch(const Dataset& data, std::span<const std::size_t> indices,
                  const Shape& sample_shape);

}  // namespace dpbf

#endif  // DPBF_TASK_H_
