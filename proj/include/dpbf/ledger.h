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

#ifndef DPBF_LEDGER_H_
#define DPBF_LEDGER_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace dpbf {

// Well-known allocation tags.
inline constexpr std::string_view kTagUntagged = "untagged";
inline constexpr std::string_view kTagActivationCache = "activation-cache";
inline constexpr std::string_view kTagNonlinearityMask = "nonlinearity-mask";
inline constexpr std::string_view kTagNormCache = "norm-cache";
inline constexpr std::string_view kTagPerSampleGrad = "per-sample-grad";
inline constexpr std::string_view kTagPerSampleNorm = "per-sample-norm";
inline constexpr std::string_view kTagGhostGram = "ghost-gram";
inline constexpr std::string_view kTagOutputGrad = "output-grad";
inline constexpr std::string_view kTagForward = "forward";
inline constexpr std::string_view kTagParameter = "parameter";
inline constexpr std::string_view kTagGradient = "gradient";
inline constexpr std::string_view kTagOptimizer = "optimizer-state";
inline constexpr std::string_view kTagData = "data";
inline constexpr std::string_view kTagWorkspace = "workspace";

using TagId = std::uint16_t;

// Process-wide byte ledger for tensor payloads. Every payload allocation is
// registered under the tag of the innermost LedgerScope active on the
// allocating thread; release decrements exactly the registered bytes.
class AllocationLedger {
 public:
  static AllocationLedger& Global();

  TagId Intern(std::string_view tag);
  std::string TagName(TagId id) const;

  void Register(TagId tag, std::size_t bytes);
  void Release(TagId tag, std::size_t bytes) noexcept;

  std::size_t live_bytes() const;
  std::size_t peak_bytes() const;
  std::size_t live_bytes(std::string_view tag) const;
  std::size_t peak_bytes(std::string_view tag) const;

  // Live bytes per tag, omitting tags that were never used.
  std::map<std::string, std::size_t> tagged_totals() const;

  // Sets every peak (global and per tag) to its current live value.
  void ResetPeak();

  // In strict mode an allocation outside any LedgerScope throws.
  void set_strict(bool strict);
  bool strict() const;

 private:
  AllocationLedger();

  struct Counter {
    std::size_t live = 0;
    std::size_t peak = 0;
    bool used = false;
  };

  mutable std::mutex mu_;
  std::vector<std::string> names_;
  std::vector<Counter> counters_;
  std::size_t live_ = 0;
  std::size_t peak_ = 0;
  bool strict_ = false;
};

// Current allocation tag for this thread.
TagId CurrentTag();

// RAII: routes allocations on this thread to `tag` until destroyed.
class LedgerScope {
 public:
  explicit LedgerScope(std::string_view tag);
  explicit LedgerScope(TagId tag);
  ~LedgerScope();
  LedgerScope(const LedgerScope&) = delete;
  LedgerScope& operator=(const LedgerScope&) = delete;

 private:
  TagId previous_;
};

// RAII: turns strict mode on for its lifetime.
class StrictLedgerGuard {
 public:
  StrictLedgerGuard();
  ~StrictLedgerGuard();
  StrictLedgerGuard(const StrictLedgerGuard&) = delete;
  StrictLedgerGuard& operator=(const StrictLedgerGuard&) = delete;

 private:
  bool previous_;
};

// Stateful allocator that charges every allocation to the ledger. The tag is
// captured when the allocator is created (or when a container is copied) and
// travels with the storage on moves, so release always hits the same tag.
template <typename T>
class LedgerAllocator {
 public:
  using value_type = T;
  using propagate_on_container_move_assignment = std::true_type;
  using propagate_on_container_copy_assignment = std::false_type;
  using propagate_on_container_swap = std::true_type;
  using is_always_equal = std::false_type;

  LedgerAllocator() noexcept : tag_(CurrentTag()) {}
  explicit LedgerAllocator(TagId tag) noexcept : tag_(tag) {}
  template <typename U>
  LedgerAllocator(const LedgerAllocator<U>& other) noexcept
      : tag_(other.tag()) {}

  T* allocate(std::size_t n) {
    AllocationLedger::Global().Register(tag_, n * sizeof(T));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) noexcept {
    std::allocator<T>{}.deallocate(p, n);
    AllocationLedger::Global().Release(tag_, n * sizeof(T));
  }

  LedgerAllocator select_on_container_copy_construction() const {
    return LedgerAllocator(CurrentTag());
  }

  TagId tag() const { return tag_; }

  template <typename U>
  bool operator==(const LedgerAllocator<U>& other) const noexcept {
    return tag_ == other.tag();
  }

 private:
  TagId tag_;
};

// Byte-per-element mask storage (ReLU backward support).
using Mask = std::vector<std::uint8_t, LedgerAllocator<std::uint8_t>>;

}  // namespace dpbf

#endif  // DPBF_LEDGER_H_
