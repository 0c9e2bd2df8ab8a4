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

#ifndef DPBF_ERRORS_H_
#define DPBF_ERRORS_H_

#include <stdexcept>
#include <string>

namespace dpbf {

// Root of every error the engine raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A numeric argument is outside its legal range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A layer or run configuration cannot be realized.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An operation was asked for something the trainability policy forbids,
// e.g. a weight gradient when no activation was cached.
class PolicyError : public Error {
 public:
  using Error::Error;
};

// Bad user-supplied data (labels out of range and the like).
class InputError : public Error {
 public:
  using Error::Error;
};

// Broken invariant inside the engine.
class InternalError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long long step)
      : Error(what), step_(step) {}
  long long step() const { return step_; }

 private:
  long long step_;
};

}  // namespace dpbf

#endif  // DPBF_ERRORS_H_
