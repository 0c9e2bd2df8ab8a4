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

#include "dpbf/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>
#include <utility>

#include "dpbf/errors.h"

namespace dpbf {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor() : shape_{0} {}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}

Tensor::Tensor(Shape shape, std::span<const double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != NumElements(shape_)) {
    throw DimensionError("tensor of shape " + dpbf::ShapeString(shape_) +
                         " cannot hold " + std::to_string(values.size()) +
                         " values");
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), std::span<const double>(values.begin(),
                                                       values.size())) {}

Tensor Tensor::Reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).Reshaped(std::move(shape));
}

Tensor Tensor::Reshaped(Shape shape) && {
  if (NumElements(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + ShapeString() + " to " +
                         dpbf::ShapeString(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::BitwiseEquals(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), bytes()) == 0);
}

}  // namespace dpbf
