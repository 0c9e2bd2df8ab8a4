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

#include "dpbf/ledger.h"

#include <algorithm>
#include <stdexcept>

#include "dpbf/errors.h"

namespace dpbf {
namespace {

thread_local TagId current_tag = 0;

}  // namespace

AllocationLedger::AllocationLedger() {
  names_.emplace_back(kTagUntagged);
  counters_.emplace_back();
}

AllocationLedger& AllocationLedger::Global() {
  static AllocationLedger* ledger = new AllocationLedger();
  return *ledger;
}

TagId AllocationLedger::Intern(std::string_view tag) {
  std::lock_guard<std::mutex> lock(mu_);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == tag) return static_cast<TagId>(i);
  }
  names_.emplace_back(tag);
  counters_.emplace_back();
  return static_cast<TagId>(names_.size() - 1);
}

std::string AllocationLedger::TagName(TagId id) const {
  std::lock_guard<std::mutex> lock(mu_);
  return id < names_.size() ? names_[id] : std::string();
}

void AllocationLedger::Register(TagId tag, std::size_t bytes) {
  std::lock_guard<std::mutex> lock(mu_);
  if (strict_ && tag == 0 && bytes > 0) {
    throw InternalError("unledgered allocation of " + std::to_string(bytes) +
                        " bytes outside any ledger scope");
  }
  Counter& c = counters_.at(tag);
  c.used = true;
  c.live += bytes;
  c.peak = std::max(c.peak, c.live);
  live_ += bytes;
  peak_ = std::max(peak_, live_);
}

void AllocationLedger::Release(TagId tag, std::size_t bytes) noexcept {
  std::lock_guard<std::mutex> lock(mu_);
  counters_[tag].live -= bytes;
  live_ -= bytes;
}

std::size_t AllocationLedger::live_bytes() const {
  std::lock_guard<std::mutex> lock(mu_);
  return live_;
}

std::size_t AllocationLedger::peak_bytes() const {
  std::lock_guard<std::mutex> lock(mu_);
  return peak_;
}

std::size_t AllocationLedger::live_bytes(std::string_view tag) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == tag) return counters_[i].live;
  }
  return 0;
}

std::size_t AllocationLedger::peak_bytes(std::string_view tag) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == tag) return counters_[i].peak;
  }
  return 0;
}

std::map<std::string, std::size_t> AllocationLedger::tagged_totals() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (counters_[i].used) out[names_[i]] = counters_[i].live;
  }
  return out;
}

void AllocationLedger::ResetPeak() {
  std::lock_guard<std::mutex> lock(mu_);
  peak_ = live_;
  for (Counter& c : counters_) c.peak = c.live;
}

void AllocationLedger::set_strict(bool strict) {
  std::lock_guard<std::mutex> lock(mu_);
  strict_ = strict;
}

bool AllocationLedger::strict() const {
  std::lock_guard<std::mutex> lock(mu_);
  return strict_;
}

TagId CurrentTag() { return current_tag; }

LedgerScope::LedgerScope(std::string_view tag)
    : LedgerScope(AllocationLedger::Global().Intern(tag)) {}

LedgerScope::LedgerScope(TagId tag) : previous_(current_tag) {
  current_tag = tag;
}

LedgerScope::~LedgerScope() { current_tag = previous_; }

StrictLedgerGuard::StrictLedgerGuard()
    : previous_(AllocationLedger::Global().strict()) {
  AllocationLedger::Global().set_strict(true);
}

StrictLedgerGuard::~StrictLedgerGuard() {
  AllocationLedger::Global().set_strict(previous_);
}

}  // namespace dpbf
