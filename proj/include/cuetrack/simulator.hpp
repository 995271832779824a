// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "cuetrack/data.hpp"

namespace cuetrack {

enum class MotionKind { Linear, Sinusoidal, RandomWalk };

const char* motion_kind_name(MotionKind kind);
MotionKind parse_motion_kind(const std::string& name);

struct ClassProfile {
  int class_id = 0;
  // Unit vector; left empty, it is generated from the scene seed.
  std::vector<double> semantic_prototype;
  MotionKind motion_kind = MotionKind::Linear;
  double speed_px_per_s = 10.0;
  // Rate of change of width/height per second.
  double arc_rate = 0.0;
  double size_w = 40.0;
  double size_h = 40.0;
  // Sinusoidal motion: perpendicular swing around the carrier line.
  double amplitude_px = 30.0;
  double period_s = 4.0;
  // Random walk: heading diffusion in rad / sqrt(s).
  double turn_sigma = 1.0;
};

struct NoiseConfig {
  double semantic_sigma = 0.0;
  double appearance_sigma = 0.0;
  // Corner jitter standard deviation as a fraction of box width/height.
  double box_jitter = 0.0;
  double score_sigma = 0.0;
  double drop_prob = 0.0;
  // Mean false positives per frame (Poisson).
  double fp_rate = 0.0;
  // Per detected object, chance of one extra box covering 30-45% of it with
  // the object's own cue vectors (a detector firing on an object part).
  double part_rate = 0.0;
};

struct Reentry {
  long object = 0;
  double exit_s = 0.0;
  double absence_s = 0.0;
};

struct SceneConfig {
  double image_h = 480.0;
  double image_w = 640.0;
  double fps = 2.0;
  double duration_s = 20.0;
  std::vector<ClassProfile> profiles;
  std::size_t objects_per_class = 2;
  std::size_t semantic_dim = 8;
  std::size_t appearance_dim = 16;
  NoiseConfig noise;
  // Same-class identity vectors spread only `lookalike_spread` around a
  // shared class direction.
  bool lookalike = false;
  double lookalike_spread = 0.1;
  std::vector<Reentry> reentries;
  std::uint64_t seed = 0;
  // Class prototypes are a property of the vocabulary, not of one sequence.
  std::uint64_t prototype_seed = 0;

  void validate() const;
  std::size_t frame_count() const;
};

/// One visible object in one frame with its per-frame cue vectors.
struct Observation {
  GtObject gt;
  std::vector<double> semantic;
  std::vector<double> appearance;
};

/// Unit prototypes for `count` classes, mutually orthogonal while count <= dim.
std::vector<std::vector<double>> make_prototypes(std::size_t count, std::size_t dim,
                                                 std::uint64_t seed);

/// Box-level detector channel: drop, jitter, false positives, NMS at 0.5,
/// at most 50 detections.
std::vector<Detection> detect(const std::vector<Observation>& objects, const SceneConfig& cfg,
                              std::mt19937_64& rng);

/// Full scene: GT trajectories, cue vectors and detector output per frame.
Sequence generate(const SceneConfig& cfg);

/// GT trajectories and clean cue observations per frame, before the detector.
std::vector<std::vector<Observation>> generate_observations(const SceneConfig& cfg);

/// `count` sequences whose seeds derive from cfg.seed and the sequence index.
std::vector<NamedSequence> generate_dataset(const SceneConfig& cfg, std::size_t count,
                                            const std::string& prefix = "seq");

nlohmann::json profile_to_json(const ClassProfile& profile);
ClassProfile profile_from_json(const nlohmann::json& j);

}  // namespace cuetrack
