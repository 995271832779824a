// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cuetrack/model.hpp"
#include "cuetrack/simulator.hpp"
#include "cuetrack/tracker.hpp"
#include "cuetrack/training.hpp"

namespace cuetrack {

/// Flat settings shared by every command. Keys that several modules read
/// (image size, fps, cue dims, Sinkhorn iterations) live in one place and are
/// copied into each module config by `materialize`.
struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::size_t num_sequences = 10;
  SceneConfig scene;
  TrainConfig train;
  TrackerConfig tracker;
  ModelConfig model;

  /// Propagates shared keys and derives per-component seeds.
  void materialize();
};

/// Default three-class scene used by the desk preset.
std::vector<ClassProfile> desk_profiles();

RunConfig preset_config(const std::string& preset);

/// Every accepted key, in table order.
std::vector<std::string> config_keys();

/// Preset (from overrides, then file, else desk), then file values, then
/// overrides. Unknown keys and type mismatches are errors naming the key.
RunConfig config_from_json(const nlohmann::json& file_values,
                           const std::map<std::string, nlohmann::json>& overrides = {});

/// Reads `path` (an empty file counts as {}) and applies string overrides,
/// which are parsed as JSON when possible and as plain strings otherwise.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::map<std::string, std::string>& overrides = {});

nlohmann::json config_to_json(const RunConfig& cfg);

}  // namespace cuetrack
