// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"

#include "cuetrack/data.hpp"
#include "cuetrack/graph.hpp"
#include "cuetrack/heads.hpp"
#include "cuetrack/matching.hpp"
#include "cuetrack/params.hpp"
#include "cuetrack/stog.hpp"

namespace cuetrack {

struct CueFlags {
  bool semantic = true;
  bool location = true;
  bool appearance = true;
};

/// Everything needed to rebuild the association network: cue heads, STOG,
/// and the dustbin/Sinkhorn matcher.
struct ModelConfig {
  std::size_t semantic_dim = 8;
  std::size_t appearance_dim = 16;
  bool closed_set = false;
  std::size_t head_hidden = 32;
  std::size_t head_layers = 5;
  bool group_norm = true;
  CueFlags cues;
  bool temporal_encoding = true;
  StogConfig stog;
  std::size_t sinkhorn_iters = 100;
  double bin_score_init = 1.0;

  std::size_t descriptor_dim() const { return stog.descriptor_dim; }
  std::size_t location_dim() const { return closed_set ? 5 : 4; }
  HeadSpec semantic_head() const;
  HeadSpec location_head() const;
  HeadSpec appearance_head() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

inline constexpr const char* kBinScoreParam = "match.bin_score";

ParameterStore init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Per-object raw cue matrices of one frame (rows follow detection order).
struct FrameInputs {
  Array semantic;
  Array location;
  Array appearance;
  std::size_t count = 0;
};

FrameInputs frame_inputs(const std::vector<Detection>& detections, const ModelConfig& cfg,
                         double image_h, double image_w);

/// Registers the frame's cue inputs under `<side>.semantic` etc.
void bind_frame_inputs(NamedArrays& inputs, const std::string& side, const FrameInputs& frame,
                       const ModelConfig& cfg);

struct EmbeddingNodes {
  std::optional<NodeId> semantic;
  std::optional<NodeId> location;
  std::optional<NodeId> appearance;
};

EmbeddingNodes add_cue_heads(Graph& graph, const ModelConfig& cfg, const std::string& side);
NodeId add_fusion(Graph& graph, const EmbeddingNodes& cues);

/// Fused embeddings of both frames -> dustbin-augmented score logits.
NodeId add_association_logits(Graph& graph, const ModelConfig& cfg, NodeId fused_key,
                              NodeId fused_ref);

/// Training graph over one frame pair. Inputs: cue matrices of "key" and
/// "ref", "log_mu" ((M+1) x 1), "log_nu" (1 x (N+1)), "target"
/// ((M+1) x (N+1)). Outputs: "loss".
Graph build_pair_graph(const ModelConfig& cfg);

/// Eager per-object embeddings of one frame; disabled cues come back as zero
/// matrices so stored tracklets always carry all three.
CueEmbeddings embed_frame(const ModelConfig& cfg, const ParameterStore& params,
                          const FrameInputs& frame);

/// Transport plan between key embeddings and reference embeddings with unit
/// marginals.
TransportPlan associate(const ModelConfig& cfg, const ParameterStore& params,
                        const CueEmbeddings& key, const CueEmbeddings& ref,
                        double early_exit_tol = 0.0);

}  // namespace cuetrack
