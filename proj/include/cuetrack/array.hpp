// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cuetrack {

/// Library-wide error type. Messages name the offending node, layer, key or
/// file so callers can surface them unchanged.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of 64-bit reals. The autodiff engine works on
/// rank-2 arrays; a rank-1 array of length n is viewed as a 1 x n row.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values);
  static Array row(std::span<const double> values);
  static Array identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  std::vector<double> row_values(std::size_t r) const;
  bool all_finite() const;
  bool same_shape(const Array& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Array&, const Array&) = default;

 private:
  Shape shape_{};
  std::vector<double> data_{};
};

using NamedArrays = std::map<std::string, Array>;

double max_abs_diff(const Array& a, const Array& b);

}  // namespace cuetrack
