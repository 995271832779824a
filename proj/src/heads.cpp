// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/heads.hpp"

namespace cuetrack {

namespace {

std::string layer_name(const HeadSpec& spec, std::size_t k) {
  return spec.name + ".fc" + std::to_string(k);
}

std::string norm_name(const HeadSpec& spec, std::size_t k) {
  return spec.name + ".gn" + std::to_string(k);
}

}  // namespace

std::size_t group_count(std::size_t channels) { return channels % 8 == 0 ? 8 : 1; }

void register_head(const HeadSpec& spec, ParameterStore& params) {
  std::size_t in = spec.input_width;
  for (std::size_t k = 0; k < spec.widths.size(); ++k) {
    const std::size_t out = spec.widths[k];
    params.add(layer_name(spec, k) + ".weight", {in, out}, Init::Glorot);
    params.add(layer_name(spec, k) + ".bias", {1, out}, Init::Zeros);
    if (spec.use_group_norm && k + 1 < spec.widths.size()) {
      params.add(norm_name(spec, k) + ".gamma", {1, out}, Init::Ones);
      params.add(norm_name(spec, k) + ".beta", {1, out}, Init::Zeros);
    }
    in = out;
  }
}

NodeId add_head(Graph& graph, const HeadSpec& spec, NodeId input) {
  NodeId x = input;
  for (std::size_t k = 0; k < spec.widths.size(); ++k) {
    const std::string layer = layer_name(spec, k);
    x = graph.matmul(x, graph.param(layer + ".weight"), layer);
    x = graph.add_row_bias(x, graph.param(layer + ".bias"), layer + ".bias");
    if (k + 1 == spec.widths.size()) break;
    if (spec.use_group_norm) {
      const std::string norm = norm_name(spec, k);
      x = graph.group_norm(x, graph.param(norm + ".gamma"), graph.param(norm + ".beta"),
                           group_count(spec.widths[k]), norm);
    }
    x = graph.relu(x, layer + ".relu");
  }
  return x;
}

Array head_forward(const HeadSpec& spec, const ParameterStore& params, const Array& input) {
  if (input.cols() != spec.input_width) {
    throw Error("head '" + spec.name + "': input width " + std::to_string(input.cols()) +
                " does not match spec width " + std::to_string(spec.input_width));
  }
  std::size_t in = spec.input_width;
  for (std::size_t k = 0; k < spec.widths.size(); ++k) {
    const std::string weight = layer_name(spec, k) + ".weight";
    if (!params.contains(weight)) {
      throw Error("head '" + spec.name + "': layer " + layer_name(spec, k) + " has no weights");
    }
    const Array& w = params.value(weight);
    if (w.rows() != in || w.cols() != spec.widths[k]) {
      throw Error("head '" + spec.name + "': layer " + layer_name(spec, k) + " expects " +
                  shape_string({in, spec.widths[k]}) + " weights, found " +
                  shape_string(w.shape()));
    }
    in = spec.widths[k];
  }
  Graph graph;
  graph.mark_output("out", add_head(graph, spec, graph.input("x")));
  return graph.forward({{"x", input}}, params).at("out");
}

Array location_input(const NormalizedBox& box, std::optional<double> confidence, bool closed_set) {
  if (box.width < 0.0 || box.height < 0.0) throw Error("location_input: negative box size");
  if (!closed_set) return Array::matrix(1, 4, {box.x_min, box.y_min, box.width, box.height});
  if (!confidence) throw Error("location_input: closed-set mode needs a detection confidence");
  return Array::matrix(1, 5, {box.x_min, box.y_min, box.width, box.height, *confidence});
}

Array fuse(const Array& semantic, const Array& location, const Array& appearance) {
  if (!semantic.same_shape(location) || !semantic.same_shape(appearance)) {
    throw Error("fuse: embedding shapes differ (" + shape_string(semantic.shape()) + ", " +
                shape_string(location.shape()) + ", " + shape_string(appearance.shape()) + ")");
  }
  Array out = semantic;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += location[i] + appearance[i];
  return out;
}

std::vector<Array> temporal_encode(const Array& ctx_key, const Array& ctx_ref,
                                   const std::vector<Array>& fused) {
  if (ctx_key.size() != ctx_ref.size()) throw Error("temporal_encode: context lengths differ");
  std::vector<Array> out;
  out.reserve(fused.size());
  for (const Array& e : fused) {
    if (e.size() != ctx_key.size()) {
      throw Error("temporal_encode: embedding length " + std::to_string(e.size()) +
                  " does not match context length " + std::to_string(ctx_key.size()));
    }
    Array updated = e;
    for (std::size_t i = 0; i < e.size(); ++i) updated[i] += ctx_key[i] - ctx_ref[i];
    out.push_back(std::move(updated));
  }
  return out;
}

std::pair<NodeId, NodeId> add_temporal_encoding(Graph& graph, NodeId fused_key, NodeId fused_ref) {
  NodeId ctx_key = graph.mean_rows(fused_key, "temporal.ctx_key");
  NodeId ctx_ref = graph.mean_rows(fused_ref, "temporal.ctx_ref");
  NodeId diff = graph.sub(ctx_key, ctx_ref, "temporal.diff");
  NodeId neg = graph.scale(diff, -1.0, "temporal.neg_diff");
  return {graph.add_row_bias(fused_key, diff, "temporal.key"),
          graph.add_row_bias(fused_ref, neg, "temporal.ref")};
}

}  // namespace cuetrack
