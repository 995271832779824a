// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/data.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "cuetrack/array.hpp"

namespace cuetrack {

using nlohmann::json;

namespace {

json box_json(const Box& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

Box box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("box must be an array of 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::string frame_to_json_line(const FrameSample& frame) {
  json j;
  j["frame"] = frame.frame_id;
  j["time_s"] = frame.time_s;
  json gt = json::array();
  if (frame.gt) {
    for (const GtObject& g : *frame.gt) {
      gt.push_back({{"id", g.id}, {"box", box_json(g.box)}, {"class", g.class_id}});
    }
  }
  j["gt"] = std::move(gt);
  json dets = json::array();
  for (const Detection& d : frame.detections) {
    dets.push_back({{"box", box_json(d.box)},
                    {"score", d.score},
                    {"semantic_vec", d.semantic},
                    {"appearance_vec", d.appearance},
                    {"class", d.class_id}});
  }
  j["detections"] = std::move(dets);
  return j.dump();
}

FrameSample frame_from_json_line(const std::string& line) {
  FrameSample frame;
  try {
    const json j = json::parse(line);
    frame.frame_id = j.at("frame").get<long>();
    frame.time_s = j.at("time_s").get<double>();
    if (j.contains("gt") && !j.at("gt").is_null()) {
      std::vector<GtObject> gt;
      for (const auto& g : j.at("gt")) {
        gt.push_back({g.at("id").get<long>(), box_from(g.at("box")), g.value("class", 0)});
      }
      frame.gt = std::move(gt);
    }
    for (const auto& d : j.at("detections")) {
      Detection det;
      det.box = box_from(d.at("box"));
      det.score = d.at("score").get<double>();
      det.semantic = d.at("semantic_vec").get<std::vector<double>>();
      det.appearance = d.at("appearance_vec").get<std::vector<double>>();
      det.class_id = d.value("class", -1);
      frame.detections.push_back(std::move(det));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed frame line: ") + e.what());
  }
  return frame;
}

void write_sequence(const std::filesystem::path& path, const Sequence& sequence) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const FrameSample& f : sequence) out << frame_to_json_line(f) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

Sequence read_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Sequence seq;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      seq.push_back(frame_from_json_line(line));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return seq;
}

std::vector<NamedSequence> read_sequences(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir)) throw Error("no such data path: " + dir.string());
  std::vector<fs::path> files;
  if (fs::is_regular_file(dir)) {
    files.push_back(dir);
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw Error("no .jsonl sequences in " + dir.string());
  std::vector<NamedSequence> out;
  for (const auto& f : files) out.push_back({f.stem().string(), read_sequence(f)});
  return out;
}

}  // namespace cuetrack
