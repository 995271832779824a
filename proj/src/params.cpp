// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/params.hpp"

#include <cmath>

#include "cuetrack/rng.hpp"

namespace cuetrack {

void ParameterStore::add(const std::string& name, Shape shape, Init init) {
  Array value(std::move(shape));
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      for (double& v : value.data()) v = 1.0;
      break;
    case Init::Glorot: {
      const double bound = std::sqrt(6.0 / static_cast<double>(value.rows() + value.cols()));
      const std::uint64_t key = splitmix64(seed_ ^ fnv1a(name));
      for (std::size_t i = 0; i < value.size(); ++i) {
        value[i] = (2.0 * counter_uniform(key, i) - 1.0) * bound;
      }
      break;
    }
  }
  add(name, std::move(value));
}

void ParameterStore::add(const std::string& name, Array value) {
  if (entries_.count(name) > 0) throw Error("parameter '" + name + "' registered twice");
  grads_.insert_or_assign(name, Array(value.shape()));
  entries_.insert_or_assign(name, std::move(value));
}

const Array& ParameterStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

Array& ParameterStore::mutable_value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

const Array& ParameterStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

Array& ParameterStore::mutable_grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& [name, g] : grads_) {
    for (double& v : g.data()) v = 0.0;
  }
}

void ParameterStore::accumulate_grads(const NamedArrays& grads, double weight) {
  for (const auto& [name, g] : grads) {
    Array& slot = mutable_grad(name);
    if (!slot.same_shape(g)) {
      throw Error("gradient for '" + name + "' has shape " + shape_string(g.shape()) +
                  ", parameter has " + shape_string(slot.shape()));
    }
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += weight * g[i];
  }
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, v] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.size();
  return n;
}

}  // namespace cuetrack
