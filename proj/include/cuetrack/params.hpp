// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cuetrack/array.hpp"

namespace cuetrack {

enum class Init {
  Zeros,
  Ones,
  Glorot,
};

/// Named learnable arrays plus a gradient slot of identical shape for each.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// Registers `name`. Glorot draws uniform(-a, a), a = sqrt(6 / (rows + cols)),
  /// from a counter stream keyed by (seed, name), so the value of an entry does
  /// not depend on registration order.
  void add(const std::string& name, Shape shape, Init init);
  void add(const std::string& name, Array value);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  const Array& value(const std::string& name) const;
  Array& mutable_value(const std::string& name);
  const Array& grad(const std::string& name) const;
  Array& mutable_grad(const std::string& name);

  void zero_grads();
  void accumulate_grads(const NamedArrays& grads, double weight = 1.0);

  std::vector<std::string> names() const;
  std::size_t total_size() const;
  std::uint64_t seed() const { return seed_; }

  const NamedArrays& entries() const { return entries_; }
  const NamedArrays& grads() const { return grads_; }

 private:
  std::uint64_t seed_;
  NamedArrays entries_;
  NamedArrays grads_;
};

}  // namespace cuetrack
