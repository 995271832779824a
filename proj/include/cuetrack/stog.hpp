// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cuetrack/array.hpp"
#include "cuetrack/graph.hpp"
#include "cuetrack/params.hpp"

namespace cuetrack {

/// Spatial-temporal object graph: alternating self (within frame) and cross
/// (between frames) attention layers with residual concat-MLP refinement.
struct StogConfig {
  std::size_t descriptor_dim = 32;
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::vector<std::size_t> refine_widths{64, 64, 32};

  void validate() const;
  std::size_t head_dim() const { return descriptor_dim / num_heads; }
};

enum class AttentionMode { Self, Cross };

/// Even layers attend within each frame, odd layers across frames.
AttentionMode layer_mode(std::size_t layer);
std::string layer_prefix(std::size_t layer);

void register_stog(const StogConfig& cfg, ParameterStore& params);

struct AttentionNodes {
  NodeId output;
  std::vector<NodeId> weights;  // one (queries x targets) softmax per head
};

/// Multi-head attention with bias-free projections named
/// `<prefix>.q.h<k>`, `.k.h<k>`, `.v.h<k>` (d x d/heads) and `<prefix>.out` (d x d).
AttentionNodes add_attention(Graph& graph, const std::string& prefix, NodeId queries_from,
                             NodeId keys_values_from, std::size_t descriptor_dim,
                             std::size_t head_count);

std::pair<NodeId, NodeId> add_propagation_layer(Graph& graph, const StogConfig& cfg,
                                                std::size_t layer, NodeId key, NodeId ref);

std::pair<NodeId, NodeId> add_stog(Graph& graph, const StogConfig& cfg, NodeId key, NodeId ref);

// Eager forms.
Array attention(const Array& queries_from, const Array& keys_values_from,
                const ParameterStore& params, const std::string& prefix, std::size_t head_count);
std::pair<Array, Array> propagation_layer(const Array& key, const Array& ref, std::size_t layer,
                                          const StogConfig& cfg, const ParameterStore& params);
std::pair<Array, Array> stog_forward(const Array& key, const Array& ref, const StogConfig& cfg,
                                     const ParameterStore& params);

}  // namespace cuetrack
