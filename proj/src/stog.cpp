// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/stog.hpp"

#include <cmath>
#include <tuple>

namespace cuetrack {

void StogConfig::validate() const {
  if (descriptor_dim == 0 || num_heads == 0) throw Error("stog: dimensions must be positive");
  if (descriptor_dim % num_heads != 0) {
    throw Error("stog: descriptor_dim " + std::to_string(descriptor_dim) +
                " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (refine_widths.empty() || refine_widths.back() != descriptor_dim) {
    throw Error("stog: refine MLP must end at descriptor_dim");
  }
}

AttentionMode layer_mode(std::size_t layer) {
  return layer % 2 == 0 ? AttentionMode::Self : AttentionMode::Cross;
}

std::string layer_prefix(std::size_t layer) { return "stog.l" + std::to_string(layer); }

void register_stog(const StogConfig& cfg, ParameterStore& params) {
  cfg.validate();
  const std::size_t d = cfg.descriptor_dim;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::string attn = layer_prefix(l) + ".attn";
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      for (const char* role : {".q.h", ".k.h", ".v.h"}) {
        params.add(attn + role + std::to_string(h), {d, cfg.head_dim()}, Init::Glorot);
      }
    }
    params.add(attn + ".out", {d, d}, Init::Glorot);
    std::size_t in = 2 * d;
    for (std::size_t k = 0; k < cfg.refine_widths.size(); ++k) {
      const std::string fc = layer_prefix(l) + ".mlp.fc" + std::to_string(k);
      params.add(fc + ".weight", {in, cfg.refine_widths[k]}, Init::Glorot);
      params.add(fc + ".bias", {1, cfg.refine_widths[k]}, Init::Zeros);
      in = cfg.refine_widths[k];
    }
  }
}

AttentionNodes add_attention(Graph& graph, const std::string& prefix, NodeId queries_from,
                             NodeId keys_values_from, std::size_t descriptor_dim,
                             std::size_t head_count) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(descriptor_dim / head_count));
  AttentionNodes nodes;
  std::vector<NodeId> heads;
  for (std::size_t h = 0; h < head_count; ++h) {
    const std::string tag = std::to_string(h);
    NodeId q = graph.matmul(queries_from, graph.param(prefix + ".q.h" + tag), prefix + ".q" + tag);
    NodeId k = graph.matmul(keys_values_from, graph.param(prefix + ".k.h" + tag), prefix + ".k" + tag);
    NodeId v = graph.matmul(keys_values_from, graph.param(prefix + ".v.h" + tag), prefix + ".v" + tag);
    NodeId logits = graph.scale(graph.matmul(q, graph.transpose(k)), inv_sqrt, prefix + ".logits" + tag);
    NodeId weights = graph.row_softmax(logits, prefix + ".softmax" + tag);
    nodes.weights.push_back(weights);
    heads.push_back(graph.matmul(weights, v, prefix + ".head" + tag));
  }
  NodeId merged = heads.size() == 1 ? heads.front() : graph.concat_cols(heads, prefix + ".merge");
  nodes.output = graph.matmul(merged, graph.param(prefix + ".out"), prefix + ".out");
  return nodes;
}

namespace {

NodeId refine(Graph& graph, const StogConfig& cfg, const std::string& prefix, NodeId x,
              NodeId message) {
  NodeId h = graph.concat_cols({x, message}, prefix + ".concat");
  for (std::size_t k = 0; k < cfg.refine_widths.size(); ++k) {
    const std::string fc = prefix + ".mlp.fc" + std::to_string(k);
    h = graph.add_row_bias(graph.matmul(h, graph.param(fc + ".weight")), graph.param(fc + ".bias"), fc);
    if (k + 1 < cfg.refine_widths.size()) h = graph.relu(h);
  }
  return graph.add(x, h, prefix + ".residual");
}

}  // namespace

std::pair<NodeId, NodeId> add_propagation_layer(Graph& graph, const StogConfig& cfg,
                                                std::size_t layer, NodeId key, NodeId ref) {
  const std::string prefix = layer_prefix(layer);
  const std::string attn = prefix + ".attn";
  const std::size_t d = cfg.descriptor_dim;
  NodeId msg_key, msg_ref;
  if (layer_mode(layer) == AttentionMode::Self) {
    msg_key = add_attention(graph, attn, key, key, d, cfg.num_heads).output;
    msg_ref = add_attention(graph, attn, ref, ref, d, cfg.num_heads).output;
  } else {
    msg_key = add_attention(graph, attn, key, ref, d, cfg.num_heads).output;
    msg_ref = add_attention(graph, attn, ref, key, d, cfg.num_heads).output;
  }
  return {refine(graph, cfg, prefix, key, msg_key), refine(graph, cfg, prefix, ref, msg_ref)};
}

std::pair<NodeId, NodeId> add_stog(Graph& graph, const StogConfig& cfg, NodeId key, NodeId ref) {
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    std::tie(key, ref) = add_propagation_layer(graph, cfg, l, key, ref);
  }
  return {key, ref};
}

namespace {

void require_frames(const Array& key, const Array& ref, std::size_t d) {
  if (key.rows() == 0 || ref.rows() == 0) throw Error("stog: empty frame");
  if (key.cols() != d || ref.cols() != d) {
    throw Error("stog: descriptors must have width " + std::to_string(d));
  }
}

}  // namespace

Array attention(const Array& queries_from, const Array& keys_values_from,
                const ParameterStore& params, const std::string& prefix, std::size_t head_count) {
  if (keys_values_from.rows() == 0) throw Error("attention: no attention targets");
  const std::size_t d = queries_from.cols();
  if (keys_values_from.cols() != d) throw Error("attention: query and target widths differ");
  if (head_count == 0 || d % head_count != 0) {
    throw Error("attention: head count must divide the descriptor width");
  }
  Graph graph;
  NodeId q = graph.input("q");
  NodeId kv = graph.input("kv");
  graph.mark_output("out", add_attention(graph, prefix, q, kv, d, head_count).output);
  return graph.forward({{"q", queries_from}, {"kv", keys_values_from}}, params).at("out");
}

std::pair<Array, Array> propagation_layer(const Array& key, const Array& ref, std::size_t layer,
                                          const StogConfig& cfg, const ParameterStore& params) {
  require_frames(key, ref, cfg.descriptor_dim);
  Graph graph;
  auto [k, r] = add_propagation_layer(graph, cfg, layer, graph.input("key"), graph.input("ref"));
  graph.mark_output("key", k);
  graph.mark_output("ref", r);
  NamedArrays out = graph.forward({{"key", key}, {"ref", ref}}, params);
  return {out.at("key"), out.at("ref")};
}

std::pair<Array, Array> stog_forward(const Array& key, const Array& ref, const StogConfig& cfg,
                                     const ParameterStore& params) {
  require_frames(key, ref, cfg.descriptor_dim);
  Graph graph;
  auto [k, r] = add_stog(graph, cfg, graph.input("key"), graph.input("ref"));
  graph.mark_output("key", k);
  graph.mark_output("ref", r);
  NamedArrays out = graph.forward({{"key", key}, {"ref", ref}}, params);
  return {out.at("key"), out.at("ref")};
}

}  // namespace cuetrack
