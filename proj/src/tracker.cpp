// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cuetrack {

void TrackerConfig::validate() const {
  if (!(match_score_thr > 0.0 && match_score_thr < 1.0)) {
    throw Error("tracker config: match_score_thr must lie in (0, 1)");
  }
  if (!(memo_length_s > 0.0)) throw Error("tracker config: memo_length_s must be positive");
  if (sinkhorn_iters == 0) throw Error("tracker config: sinkhorn_iters must be positive");
  if (!(fps > 0.0)) throw Error("tracker config: fps must be positive");
  if (!(image_h > 0.0 && image_w > 0.0)) throw Error("tracker config: image size must be positive");
}

double dynamic_threshold(std::size_t num_classes) {
  if (num_classes == 0) throw Error("dynamic_threshold: vocabulary has no classes");
  return (1.0 / static_cast<double>(num_classes)) * 1.001;
}

namespace {

Array stack_rows(const std::vector<Tracklet>& memory, Array Tracklet::*field, std::size_t d) {
  Array out({memory.size(), d});
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const Array& e = memory[i].*field;
    for (std::size_t k = 0; k < d; ++k) out(i, k) = e[k];
  }
  return out;
}

Array row_of(const Array& a, std::size_t r) {
  return Array({1, a.cols()}, a.row_values(r));
}

}  // namespace

FrameAssignment match_frame(const std::vector<Detection>& detections,
                            const std::vector<Tracklet>& memory, const ModelConfig& model_cfg,
                            const ParameterStore& params, const TrackerConfig& cfg,
                            std::uint64_t& next_id) {
  const std::size_t m = detections.size(), n = memory.size();
  FrameAssignment out;
  out.embeddings = embed_frame(model_cfg, params,
                               frame_inputs(detections, model_cfg, cfg.image_h, cfg.image_w));
  out.ids.resize(m);
  out.slots.resize(m);
  if (m == 0) return out;

  if (n > 0) {
    const std::size_t d = model_cfg.descriptor_dim();
    CueEmbeddings mem{stack_rows(memory, &Tracklet::e_sem, d), stack_rows(memory, &Tracklet::e_loc, d),
                      stack_rows(memory, &Tracklet::e_app, d), Array()};
    mem.fused = fuse(mem.semantic, mem.location, mem.appearance);
    ModelConfig infer_cfg = model_cfg;
    infer_cfg.sinkhorn_iters = cfg.sinkhorn_iters;
    const TransportPlan plan = associate(infer_cfg, params, out.embeddings, mem);

    struct Candidate {
      double p;
      std::size_t det;
      std::size_t slot;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < n; ++j) {
        if (plan.values(i, j) > plan.values(i, best)) best = j;
      }
      cands.push_back({plan.values(i, best), i, best});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.p > b.p; });
    std::vector<char> claimed(n, 0);
    for (const Candidate& c : cands) {
      if (c.p < cfg.match_score_thr || claimed[c.slot]) continue;
      claimed[c.slot] = 1;
      out.slots[c.det] = c.slot;
      out.ids[c.det] = memory[c.slot].id;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!out.slots[i]) out.ids[i] = next_id++;
  }
  return out;
}

void expire_memo(std::vector<Tracklet>& memory, double time_s, const TrackerConfig& cfg) {
  memory.erase(std::remove_if(memory.begin(), memory.end(),
                              [&](const Tracklet& t) {
                                return time_s - t.last_time_s > cfg.memo_length_s;
                              }),
               memory.end());
}

void update_memo(std::vector<Tracklet>& memory, const FrameAssignment& assignment,
                 const std::vector<Detection>& detections, long frame_id, double time_s,
                 const TrackerConfig& cfg) {
  if (assignment.ids.size() != detections.size() || assignment.slots.size() != detections.size()) {
    throw Error("update_memo: assignment covers " + std::to_string(assignment.ids.size()) +
                " detections, frame has " + std::to_string(detections.size()));
  }
  std::set<std::uint64_t> seen;
  for (std::uint64_t id : assignment.ids) {
    if (!seen.insert(id).second) throw Error("update_memo: id " + std::to_string(id) + " assigned twice");
  }
  const CueEmbeddings& e = assignment.embeddings;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    Tracklet fresh{assignment.ids[i],          frame_id,
                   time_s,                     detections[i].box,
                   row_of(e.semantic, i),      row_of(e.location, i),
                   row_of(e.appearance, i),    detections[i].score,
                   detections[i].class_id};
    if (const auto& slot = assignment.slots[i]) {
      if (*slot >= memory.size() || memory[*slot].id != fresh.id) {
        throw Error("update_memo: slot " + std::to_string(*slot) + " does not hold id " +
                    std::to_string(fresh.id));
      }
      memory[*slot] = std::move(fresh);
    } else {
      for (const Tracklet& t : memory) {
        if (t.id == fresh.id) throw Error("update_memo: fresh id " + std::to_string(fresh.id) + " already stored");
      }
      memory.push_back(std::move(fresh));
    }
  }
  expire_memo(memory, time_s, cfg);
}

Tracker::Tracker(ModelConfig model_cfg, const ParameterStore& params, TrackerConfig cfg)
    : model_cfg_(std::move(model_cfg)), params_(params), cfg_(cfg) {
  model_cfg_.validate();
  cfg_.validate();
}

std::vector<TrackedBox> Tracker::step(const FrameSample& frame) {
  if (last_time_ && frame.time_s < *last_time_) {
    throw Error("tracker: frame " + std::to_string(frame.frame_id) + " at " +
                std::to_string(frame.time_s) + " s precedes the previous frame");
  }
  last_time_ = frame.time_s;
  std::vector<Detection> dets;
  if (cfg_.num_classes > 0) {
    const double thr = dynamic_threshold(cfg_.num_classes);
    for (const Detection& d : frame.detections) {
      if (d.score >= thr) dets.push_back(d);
    }
  } else {
    dets = frame.detections;
  }
  expire_memo(memory_, frame.time_s, cfg_);
  const FrameAssignment a = match_frame(dets, memory_, model_cfg_, params_, cfg_, next_id_);
  update_memo(memory_, a, dets, frame.frame_id, frame.time_s, cfg_);

  std::vector<TrackedBox> rows;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    rows.push_back({frame.frame_id, a.ids[i], dets[i].box, dets[i].score, dets[i].class_id});
  }
  std::sort(rows.begin(), rows.end(),
            [](const TrackedBox& x, const TrackedBox& y) { return x.id < y.id; });
  return rows;
}

std::vector<TrackedBox> track_sequence(const Sequence& frames, const ModelConfig& model_cfg,
                                       const ParameterStore& params, const TrackerConfig& cfg) {
  Tracker tracker(model_cfg, params, cfg);
  std::vector<TrackedBox> out;
  for (const FrameSample& f : frames) {
    std::vector<TrackedBox> rows = tracker.step(f);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

void write_tracks_csv(std::ostream& out, const std::vector<TrackedSequence>& results) {
  out << "frame,id,x_min,y_min,x_max,y_max,score,class_id\n";
  char buf[256];
  for (const TrackedSequence& seq : results) {
    if (results.size() > 1 || !seq.name.empty()) out << "# sequence " << seq.name << '\n';
    for (const TrackedBox& r : seq.rows) {
      std::snprintf(buf, sizeof buf, "%ld,%llu,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n", r.frame_id,
                    static_cast<unsigned long long>(r.id), r.box.x_min, r.box.y_min, r.box.x_max,
                    r.box.y_max, r.score, r.class_id);
      out << buf;
    }
  }
}

void write_tracks_csv(const std::filesystem::path& path, const std::vector<TrackedSequence>& results) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_tracks_csv(out, results);
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<TrackedSequence> read_tracks_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<TrackedSequence> out;
  std::string line;
  std::size_t line_no = 0;
  const std::string marker = "# sequence ";
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("frame,", 0) == 0) continue;
    if (line.rfind(marker, 0) == 0) {
      out.push_back({line.substr(marker.size()), {}});
      continue;
    }
    if (out.empty()) out.push_back({"", {}});
    TrackedBox r;
    unsigned long long id = 0;
    int used = 0;
    const int got = std::sscanf(line.c_str(), "%ld,%llu,%lf,%lf,%lf,%lf,%lf,%d%n", &r.frame_id, &id,
                                &r.box.x_min, &r.box.y_min, &r.box.x_max, &r.box.y_max, &r.score,
                                &r.class_id, &used);
    if (got != 8 || static_cast<std::size_t>(used) != line.size()) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed track row");
    }
    r.id = id;
    out.back().rows.push_back(r);
  }
  return out;
}

}  // namespace cuetrack
