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

#ifndef DPBF_CHECKPOINT_H_
#define DPBF_CHECKPOINT_H_

#include <string>
#include <utility>
#include <vector>

#include "dpbf/nn.h"
#include "dpbf/tensor.h"

namespace dpbf {

// Binary layout, all integers little-endian:
//   "DPBF" | u32 version (=1) | records...
//   record: u32 name_len | name bytes | u32 rank | u32 dims[rank] | f64 data
// Records follow the parameter registry order and run to end of file.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string EncodeCheckpoint(const Network& net);
std::vector<NamedTensor> DecodeCheckpoint(const std::string& bytes);

void SaveCheckpoint(const Network& net, const std::string& path);
// Overwrites every parameter of `net`; names and shapes must match.
void LoadCheckpoint(Network& net, const std::string& path);
void ApplyCheckpoint(Network& net, const std::vector<NamedTensor>& records);

}  // namespace dpbf

#endif  // DPBF_CHECKPOINT_H_
