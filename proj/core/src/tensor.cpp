// Copyright 2026 The rstisp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rstisp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rstisp/errors.hpp"

namespace rstisp {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ContractError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(values_.size())) {
    throw ContractError("tensor shape " + shape_to_string(shape_) + " does not hold " +
                        std::to_string(values_.size()) + " values");
  }
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (values_.size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape_));
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_numel(shape) != size()) {
    throw ContractError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor& Tensor::add_(const Tensor& other) { return add_scaled_(other, 1.0); }

Tensor& Tensor::add_scaled_(const Tensor& other, double scale) {
  if (other.size() != size()) {
    throw ContractError("add: shape " + shape_to_string(other.shape_) + " vs " + shape_to_string(shape_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
  return *this;
}

Tensor& Tensor::scale_(double s) {
  for (auto& v : values_) v *= s;
  return *this;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::batch_item(std::int64_t b) const {
  expect_rank(*this, 4, "batch_item");
  const std::int64_t per = shape_[1] * shape_[2] * shape_[3];
  std::vector<double> out(values_.begin() + b * per, values_.begin() + (b + 1) * per);
  return Tensor({1, shape_[1], shape_[2], shape_[3]}, std::move(out));
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ContractError("stack_batch: no items");
  const Tensor& first = items.front();
  expect_rank(first, 4, "stack_batch");
  std::int64_t total = 0;
  for (const auto& t : items) {
    expect_rank(t, 4, "stack_batch");
    if (t.dim(1) != first.dim(1) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3)) {
      throw ContractError("stack_batch: item shape " + shape_to_string(t.shape()) + " differs from " +
                          shape_to_string(first.shape()));
    }
    total += t.dim(0);
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(total * first.dim(1) * first.dim(2) * first.dim(3)));
  for (const auto& t : items) values.insert(values.end(), t.values().begin(), t.values().end());
  return Tensor({total, first.dim(1), first.dim(2), first.dim(3)}, std::move(values));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void expect_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
  if (a.shape() != b.shape()) {
    throw ContractError(what + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                        shape_to_string(b.shape()));
  }
}

void expect_rank(const Tensor& t, int rank, const std::string& what) {
  if (t.rank() != rank) {
    throw ContractError(what + ": expected rank " + std::to_string(rank) + ", got shape " +
                        shape_to_string(t.shape()));
  }
}

}  // namespace rstisp
