// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cuetrack/data.hpp"
#include "cuetrack/model.hpp"
#include "cuetrack/params.hpp"

namespace cuetrack {

struct TrackerConfig {
  double match_score_thr = 0.2;
  double memo_length_s = 10.0;
  std::size_t sinkhorn_iters = 100;
  double fps = 1.0;
  double image_h = 480.0;
  double image_w = 640.0;
  // Open-vocabulary score filter; 0 disables it.
  std::size_t num_classes = 0;

  void validate() const;
};

/// Score filter for a vocabulary of `num_classes` categories.
double dynamic_threshold(std::size_t num_classes);

struct Tracklet {
  std::uint64_t id = 0;
  long last_frame_id = 0;
  double last_time_s = 0.0;
  Box box;
  Array e_sem;
  Array e_loc;
  Array e_app;
  double score = 0.0;
  int class_id = -1;
};

struct FrameAssignment {
  std::vector<std::uint64_t> ids;
  // Memory slot each detection matched, or nullopt for a fresh id.
  std::vector<std::optional<std::size_t>> slots;
  CueEmbeddings embeddings;
};

/// Assigns every detection an existing tracklet id or a fresh one drawn from
/// `next_id`. Detections claim tracklets greedily in descending plan
/// probability (ties to the lower detection index), each considering only its
/// argmax real column.
FrameAssignment match_frame(const std::vector<Detection>& detections,
                            const std::vector<Tracklet>& memory, const ModelConfig& model_cfg,
                            const ParameterStore& params, const TrackerConfig& cfg,
                            std::uint64_t& next_id);

/// Drops tracklets idle for longer than memo_length_s at `time_s`.
void expire_memo(std::vector<Tracklet>& memory, double time_s, const TrackerConfig& cfg);

void update_memo(std::vector<Tracklet>& memory, const FrameAssignment& assignment,
                 const std::vector<Detection>& detections, long frame_id, double time_s,
                 const TrackerConfig& cfg);

struct TrackedBox {
  long frame_id = 0;
  std::uint64_t id = 0;
  Box box;
  double score = 0.0;
  int class_id = -1;
};

class Tracker {
 public:
  Tracker(ModelConfig model_cfg, const ParameterStore& params, TrackerConfig cfg);

  /// Processes the next frame; rows come back sorted by id.
  std::vector<TrackedBox> step(const FrameSample& frame);

  const std::vector<Tracklet>& memory() const { return memory_; }

 private:
  ModelConfig model_cfg_;
  const ParameterStore& params_;
  TrackerConfig cfg_;
  std::vector<Tracklet> memory_;
  std::uint64_t next_id_ = 0;
  std::optional<double> last_time_;
};

/// Runs a fresh tracker over one sequence. Rows are frame-major, id-minor.
std::vector<TrackedBox> track_sequence(const Sequence& frames, const ModelConfig& model_cfg,
                                       const ParameterStore& params, const TrackerConfig& cfg);

struct TrackedSequence {
  std::string name;
  std::vector<TrackedBox> rows;
};

// CSV: header "frame,id,x_min,y_min,x_max,y_max,score,class_id". Results of
// several sequences are separated by "# sequence <name>" lines.
void write_tracks_csv(std::ostream& out, const std::vector<TrackedSequence>& results);
void write_tracks_csv(const std::filesystem::path& path, const std::vector<TrackedSequence>& results);
std::vector<TrackedSequence> read_tracks_csv(const std::filesystem::path& path);

}  // namespace cuetrack
