// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cuetrack/geometry.hpp"

namespace cuetrack {

/// One observed object in one frame.
struct Detection {
  Box box;
  double score = 1.0;
  std::vector<double> semantic;
  std::vector<double> appearance;
  int class_id = -1;
};

struct GtObject {
  long id = 0;
  Box box;
  int class_id = 0;
};

struct FrameSample {
  long frame_id = 0;
  double time_s = 0.0;
  std::vector<Detection> detections;
  std::optional<std::vector<GtObject>> gt;
};

using Sequence = std::vector<FrameSample>;

struct NamedSequence {
  std::string name;
  Sequence frames;
};

// JSONL, one frame per line:
// {"frame": int, "time_s": real,
//  "gt": [{"id": int, "box": [4], "class": int}],
//  "detections": [{"box": [4], "score": real, "semantic_vec": [..],
//                  "appearance_vec": [..], "class": int}]}
// "class" on detections is optional (-1 when absent).
std::string frame_to_json_line(const FrameSample& frame);
FrameSample frame_from_json_line(const std::string& line);

void write_sequence(const std::filesystem::path& path, const Sequence& sequence);
Sequence read_sequence(const std::filesystem::path& path);

/// Every *.jsonl under `dir` in filename order (or the file itself when `dir`
/// is a .jsonl file).
std::vector<NamedSequence> read_sequences(const std::filesystem::path& dir);

}  // namespace cuetrack
