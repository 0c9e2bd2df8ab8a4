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

#ifndef DPBF_PARALLEL_H_
#define DPBF_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace dpbf {

// Worker count used by ParallelFor. Defaults to 1, or DPBF_THREADS when set.
int ThreadCount();
void SetThreadCount(int n);

// Runs fn(i) for i in [0, n). Each index must write only its own outputs;
// the allocation tag of the caller is inherited by the workers.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dpbf

#endif  // DPBF_PARALLEL_H_
