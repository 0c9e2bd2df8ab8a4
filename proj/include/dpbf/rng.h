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

#ifndef DPBF_RNG_H_
#define DPBF_RNG_H_

#include <cstdint>
#include <string_view>

namespace dpbf {

// Counter-based 64-bit generator. Output k of a stream is a pure function of
// (seed, stream name, k), so streams are reproducible across implementations
// and independent of one another.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::string_view stream);

  std::uint64_t NextU64();
  // Uniform on the open interval (0, 1).
  double Uniform();
  // Standard normal via Box-Muller; the second value of each pair is kept
  // for the next call.
  double Normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t SplitMix64(std::uint64_t x);

}  // namespace dpbf

#endif  // DPBF_RNG_H_
