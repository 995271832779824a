// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit tests.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "cuetrack/array.hpp"

namespace testing {

inline cuetrack::Array random_array(cuetrack::Shape shape, std::mt19937_64& rng, double lo = -2.0,
                                    double hi = 2.0) {
  cuetrack::Array a(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = u(rng);
  return a;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cuetrack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Plain triple loop, kept independent of the library kernels.
inline cuetrack::Array dense_matmul(const cuetrack::Array& a, const cuetrack::Array& b) {
  cuetrack::Array out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace testing
