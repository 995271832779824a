// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/model.hpp"

#include <tuple>

namespace cuetrack {

namespace {

HeadSpec make_head(const ModelConfig& cfg, const char* name, std::size_t input_width) {
  HeadSpec spec;
  spec.name = name;
  spec.input_width = input_width;
  spec.widths.assign(cfg.head_layers > 0 ? cfg.head_layers - 1 : 0, cfg.head_hidden);
  spec.widths.push_back(cfg.descriptor_dim());
  spec.use_group_norm = cfg.group_norm;
  return spec;
}

}  // namespace

HeadSpec ModelConfig::semantic_head() const { return make_head(*this, "head.semantic", semantic_dim); }
HeadSpec ModelConfig::location_head() const { return make_head(*this, "head.location", location_dim()); }
HeadSpec ModelConfig::appearance_head() const {
  return make_head(*this, "head.appearance", appearance_dim);
}

void ModelConfig::validate() const {
  if (!cues.semantic && !cues.location && !cues.appearance) {
    throw Error("model: at least one of the semantic, location, appearance cues must be enabled");
  }
  if (head_layers == 0) throw Error("model: heads need at least one layer");
  if (sinkhorn_iters == 0) throw Error("model: sinkhorn_iters must be positive");
  stog.validate();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"semantic_dim", semantic_dim},
          {"appearance_dim", appearance_dim},
          {"closed_set", closed_set},
          {"head_hidden", head_hidden},
          {"head_layers", head_layers},
          {"group_norm", group_norm},
          {"use_sem", cues.semantic},
          {"use_loc", cues.location},
          {"use_app", cues.appearance},
          {"temporal_encoding", temporal_encoding},
          {"descriptor_dim", stog.descriptor_dim},
          {"num_layers", stog.num_layers},
          {"num_heads", stog.num_heads},
          {"refine_widths", stog.refine_widths},
          {"sinkhorn_iters", sinkhorn_iters},
          {"bin_score_init", bin_score_init}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.semantic_dim = j.at("semantic_dim").get<std::size_t>();
    c.appearance_dim = j.at("appearance_dim").get<std::size_t>();
    c.closed_set = j.at("closed_set").get<bool>();
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.head_layers = j.at("head_layers").get<std::size_t>();
    c.group_norm = j.at("group_norm").get<bool>();
    c.cues.semantic = j.at("use_sem").get<bool>();
    c.cues.location = j.at("use_loc").get<bool>();
    c.cues.appearance = j.at("use_app").get<bool>();
    c.temporal_encoding = j.at("temporal_encoding").get<bool>();
    c.stog.descriptor_dim = j.at("descriptor_dim").get<std::size_t>();
    c.stog.num_layers = j.at("num_layers").get<std::size_t>();
    c.stog.num_heads = j.at("num_heads").get<std::size_t>();
    c.stog.refine_widths = j.at("refine_widths").get<std::vector<std::size_t>>();
    c.sinkhorn_iters = j.at("sinkhorn_iters").get<std::size_t>();
    c.bin_score_init = j.at("bin_score_init").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ParameterStore init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore params(seed);
  if (cfg.cues.semantic) register_head(cfg.semantic_head(), params);
  if (cfg.cues.location) register_head(cfg.location_head(), params);
  if (cfg.cues.appearance) register_head(cfg.appearance_head(), params);
  register_stog(cfg.stog, params);
  params.add(kBinScoreParam, Array({1, 1}, cfg.bin_score_init));
  return params;
}

FrameInputs frame_inputs(const std::vector<Detection>& detections, const ModelConfig& cfg,
                         double image_h, double image_w) {
  const std::size_t n = detections.size();
  FrameInputs f{Array({n, cfg.semantic_dim}), Array({n, cfg.location_dim()}),
                Array({n, cfg.appearance_dim}), n};
  for (std::size_t i = 0; i < n; ++i) {
    const Detection& d = detections[i];
    if (cfg.cues.semantic && d.semantic.size() != cfg.semantic_dim) {
      throw Error("detection " + std::to_string(i) + ": semantic vector has " +
                  std::to_string(d.semantic.size()) + " entries, model expects " +
                  std::to_string(cfg.semantic_dim));
    }
    if (cfg.cues.appearance && d.appearance.size() != cfg.appearance_dim) {
      throw Error("detection " + std::to_string(i) + ": appearance vector has " +
                  std::to_string(d.appearance.size()) + " entries, model expects " +
                  std::to_string(cfg.appearance_dim));
    }
    if (cfg.cues.semantic) {
      for (std::size_t k = 0; k < cfg.semantic_dim; ++k) f.semantic(i, k) = d.semantic[k];
    }
    if (cfg.cues.appearance) {
      for (std::size_t k = 0; k < cfg.appearance_dim; ++k) f.appearance(i, k) = d.appearance[k];
    }
    const Array loc = location_input(normalize_box(d.box, image_h, image_w),
                                     d.score, cfg.closed_set);
    for (std::size_t k = 0; k < loc.size(); ++k) f.location(i, k) = loc[k];
  }
  return f;
}

void bind_frame_inputs(NamedArrays& inputs, const std::string& side, const FrameInputs& frame,
                       const ModelConfig& cfg) {
  if (cfg.cues.semantic) inputs.insert_or_assign(side + ".semantic", frame.semantic);
  if (cfg.cues.location) inputs.insert_or_assign(side + ".location", frame.location);
  if (cfg.cues.appearance) inputs.insert_or_assign(side + ".appearance", frame.appearance);
}

EmbeddingNodes add_cue_heads(Graph& graph, const ModelConfig& cfg, const std::string& side) {
  EmbeddingNodes e;
  if (cfg.cues.semantic) {
    e.semantic = add_head(graph, cfg.semantic_head(), graph.input(side + ".semantic"));
  }
  if (cfg.cues.location) {
    e.location = add_head(graph, cfg.location_head(), graph.input(side + ".location"));
  }
  if (cfg.cues.appearance) {
    e.appearance = add_head(graph, cfg.appearance_head(), graph.input(side + ".appearance"));
  }
  return e;
}

NodeId add_fusion(Graph& graph, const EmbeddingNodes& cues) {
  std::optional<NodeId> fused;
  for (const auto& part : {cues.semantic, cues.location, cues.appearance}) {
    if (!part) continue;
    fused = fused ? graph.add(*fused, *part, "fuse") : *part;
  }
  if (!fused) throw Error("fusion: no cue embeddings to fuse");
  return *fused;
}

NodeId add_association_logits(Graph& graph, const ModelConfig& cfg, NodeId fused_key,
                              NodeId fused_ref) {
  NodeId key = fused_key, ref = fused_ref;
  if (cfg.temporal_encoding) std::tie(key, ref) = add_temporal_encoding(graph, key, ref);
  std::tie(key, ref) = add_stog(graph, cfg.stog, key, ref);
  NodeId scores = add_score_matrix(graph, key, ref, cfg.descriptor_dim());
  return graph.dustbin(scores, graph.param(kBinScoreParam), "match.augmented");
}

Graph build_pair_graph(const ModelConfig& cfg) {
  cfg.validate();
  Graph graph;
  NodeId key = add_fusion(graph, add_cue_heads(graph, cfg, "key"));
  NodeId ref = add_fusion(graph, add_cue_heads(graph, cfg, "ref"));
  NodeId logits = add_association_logits(graph, cfg, key, ref);
  NodeId log_plan = add_log_sinkhorn(graph, logits, graph.input("log_mu"), graph.input("log_nu"),
                                     cfg.sinkhorn_iters);
  graph.mark_output("loss", add_association_loss(graph, log_plan, graph.input("target")));
  return graph;
}

CueEmbeddings embed_frame(const ModelConfig& cfg, const ParameterStore& params,
                          const FrameInputs& frame) {
  const std::size_t d = cfg.descriptor_dim();
  const Array zeros({frame.count, d});
  CueEmbeddings e{zeros, zeros, zeros, zeros};
  if (frame.count == 0) return e;
  if (cfg.cues.semantic) e.semantic = head_forward(cfg.semantic_head(), params, frame.semantic);
  if (cfg.cues.location) e.location = head_forward(cfg.location_head(), params, frame.location);
  if (cfg.cues.appearance) {
    e.appearance = head_forward(cfg.appearance_head(), params, frame.appearance);
  }
  e.fused = fuse(e.semantic, e.location, e.appearance);
  return e;
}

TransportPlan associate(const ModelConfig& cfg, const ParameterStore& params,
                        const CueEmbeddings& key, const CueEmbeddings& ref, double early_exit_tol) {
  const std::size_t m = key.fused.rows(), n = ref.fused.rows();
  Array logits;
  if (m == 0 || n == 0) {
    logits = augment_dustbin(Array({m, n}), params.value(kBinScoreParam)[0]);
  } else {
    Graph graph;
    graph.mark_output("logits", add_association_logits(graph, cfg, graph.input("key.fused"),
                                                       graph.input("ref.fused")));
    logits = graph.forward({{"key.fused", key.fused}, {"ref.fused", ref.fused}}, params).at("logits");
  }
  return sinkhorn(logits, unit_marginals(m, n), cfg.sinkhorn_iters, early_exit_tol);
}

}  // namespace cuetrack
