// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "cuetrack/data.hpp"
#include "cuetrack/matching.hpp"
#include "cuetrack/model.hpp"
#include "cuetrack/params.hpp"

namespace cuetrack {

using TrackId = std::optional<long>;

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch_pairs = 16;
  double learning_rate = 0.008;
  double weight_decay = 1e-4;
  double max_interval_s = 3.0;
  double iou_match_thr = 0.7;
  std::size_t sinkhorn_iters = 100;
  // Frame pairs drawn from every sequence in each epoch.
  std::size_t pairs_per_sequence = 1;
  // true: learn from detector-style boxes matched to GT; false: GT boxes only.
  bool detection_aware = true;
  double image_h = 480.0;
  double image_w = 640.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// GT id of the best-overlapping GT box per detection, when IoU >= iou_thr.
/// Several detections may inherit the same id.
std::vector<TrackId> dat_match(const std::vector<Box>& detections, const std::vector<GtObject>& gt,
                               double iou_thr);

/// Loss cells over the dustbin-augmented plan. Matching ids mark (i, j);
/// id-carrying objects without a counterpart mark their dustbin; objects
/// without an id mark nothing.
TargetMatrix build_target(const std::vector<TrackId>& key_ids, const std::vector<TrackId>& ref_ids);

/// Marginals sized by match multiplicity: an object with k counterparts of
/// the same id carries mass k, everything else mass 1.
Marginals target_marginals(const std::vector<TrackId>& key_ids, const std::vector<TrackId>& ref_ids);

/// Uniformly random ordered pair (key, ref) of frame indices with
/// 0 < |dt| <= max_interval_s.
std::pair<std::size_t, std::size_t> sample_pair(const std::vector<double>& frame_times,
                                                double max_interval_s, std::mt19937_64& rng);
std::pair<std::size_t, std::size_t> sample_pair(const Sequence& sequence, double max_interval_s,
                                                std::mt19937_64& rng);

/// Detections used for learning from one frame plus their identities.
struct TrainingFrame {
  double time_s = 0.0;
  FrameInputs inputs;
  std::vector<TrackId> ids;
};

TrainingFrame prepare_frame(const FrameSample& frame, const TrainConfig& cfg,
                            const ModelConfig& model_cfg);

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
};

struct TrainResult {
  ParameterStore params;
  std::vector<LossRecord> history;
};

/// Loss of one prepared pair; accumulates d(weight * loss)/d(params) into
/// params' grad slots when `grads` is set.
double pair_loss(Graph& graph, const TrainingFrame& key, const TrainingFrame& ref,
                 const ModelConfig& model_cfg, const ParameterStore& params,
                 ParameterStore* grads = nullptr, double weight = 1.0);

TrainResult train(const std::vector<Sequence>& dataset, const TrainConfig& cfg,
                  const ModelConfig& model_cfg);
TrainResult train(const std::vector<Sequence>& dataset, const TrainConfig& cfg,
                  const ModelConfig& model_cfg, ParameterStore initial);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace cuetrack
