// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "cuetrack/params.hpp"

namespace cuetrack {

struct Checkpoint {
  ParameterStore params;
  nlohmann::json metadata;
};

// Layout: one line of JSON manifest text
//   {"format": ..., "seed": ..., "metadata": {...},
//    "params": [{"name", "shape", "offset"}, ...]}
// terminated by '\n', then every parameter as little-endian float32 in
// manifest order. Offsets are byte offsets into the blob.
std::string encode_checkpoint(const ParameterStore& params, const nlohmann::json& metadata);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cuetrack
