// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace cuetrack {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  if (shape_.empty()) throw Error("array shape must have at least one extent");
}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw Error("array shape must have at least one extent");
  if (element_count(shape_) != data_.size()) {
    throw Error("array shape " + shape_string(shape_) + " does not match " +
                std::to_string(data_.size()) + " values");
  }
}

Array Array::matrix(std::size_t rows, std::size_t cols,
                    std::initializer_list<double> values) {
  return Array({rows, cols}, std::vector<double>(values));
}

Array Array::row(std::span<const double> values) {
  return Array({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Array Array::identity(std::size_t n) {
  Array out({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

std::size_t Array::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw Error("rank-" + std::to_string(shape_.size()) + " array has no matrix view");
}

std::size_t Array::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw Error("rank-" + std::to_string(shape_.size()) + " array has no matrix view");
}

std::vector<double> Array::row_values(std::size_t r) const {
  const std::size_t c = cols();
  return {data_.begin() + static_cast<std::ptrdiff_t>(r * c),
          data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Array& a, const Array& b) {
  if (!a.same_shape(b)) {
    throw Error("max_abs_diff: shape " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace cuetrack
