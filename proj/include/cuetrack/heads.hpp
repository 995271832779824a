// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cuetrack/array.hpp"
#include "cuetrack/geometry.hpp"
#include "cuetrack/graph.hpp"
#include "cuetrack/params.hpp"

namespace cuetrack {

/// An MLP projecting one cue into descriptor space. Every layer but the last
/// is followed by GroupNorm (optional) and ReLU.
struct HeadSpec {
  std::string name;
  std::size_t input_width = 0;
  std::vector<std::size_t> widths;
  bool use_group_norm = true;

  std::size_t output_width() const { return widths.empty() ? input_width : widths.back(); }
};

/// 8 groups when the channel count allows it, otherwise a single group.
std::size_t group_count(std::size_t channels);

void register_head(const HeadSpec& spec, ParameterStore& params);
NodeId add_head(Graph& graph, const HeadSpec& spec, NodeId input);

/// Eager evaluation of a head on an (objects x input_width) array.
Array head_forward(const HeadSpec& spec, const ParameterStore& params, const Array& input);

struct CueEmbeddings {
  Array semantic;
  Array location;
  Array appearance;
  Array fused;
};

/// [x_min', y_min', w', h'], plus the detection confidence in closed-set mode.
Array location_input(const NormalizedBox& box, std::optional<double> confidence, bool closed_set);

Array fuse(const Array& semantic, const Array& location, const Array& appearance);

/// Adds ctx_key - ctx_ref to every fused embedding of the key frame. The
/// reference frame receives the negated difference (call with the contexts
/// swapped).
std::vector<Array> temporal_encode(const Array& ctx_key, const Array& ctx_ref,
                                   const std::vector<Array>& fused);

/// Graph form of the temporal encoding: frame contexts are the row means of
/// the fused matrices.
std::pair<NodeId, NodeId> add_temporal_encoding(Graph& graph, NodeId fused_key, NodeId fused_ref);

}  // namespace cuetrack
