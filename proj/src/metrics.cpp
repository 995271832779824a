// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "cuetrack/matching.hpp"

namespace cuetrack {

EvalReport association_accuracy(const std::vector<TrackedBox>& pred, const Sequence& gt,
                                double iou_thr) {
  std::map<long, const FrameSample*> frames;
  std::set<long> gt_ids;
  for (const FrameSample& f : gt) {
    if (!f.gt) throw Error("evaluation: frame " + std::to_string(f.frame_id) + " has no ground truth");
    frames[f.frame_id] = &f;
    for (const GtObject& g : *f.gt) gt_ids.insert(g.id);
  }
  std::map<long, std::vector<const TrackedBox*>> by_frame;
  std::set<std::uint64_t> pred_ids;
  for (const TrackedBox& r : pred) {
    if (!frames.count(r.frame_id)) {
      throw Error("evaluation: predicted frame " + std::to_string(r.frame_id) + " is absent from the ground truth");
    }
    by_frame[r.frame_id].push_back(&r);
    pred_ids.insert(r.id);
  }

  // GT id -> predicted id at each matched frame, in frame order.
  std::map<long, std::vector<std::uint64_t>> matched;
  for (const auto& [frame_id, frame] : frames) {
    const auto it = by_frame.find(frame_id);
    if (it == by_frame.end() || frame->gt->empty()) continue;
    const auto& rows = it->second;
    const auto& objs = *frame->gt;
    Array cost({rows.size(), objs.size()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < objs.size(); ++j) cost(i, j) = -iou(rows[i]->box, objs[j].box);
    }
    for (const auto& [i, j] : hungarian(cost).pairs) {
      if (-cost(i, j) >= iou_thr) matched[objs[j].id].push_back(rows[i]->id);
    }
  }

  EvalReport r;
  r.track_count = pred_ids.size();
  r.gt_count = gt_ids.size();
  for (const auto& [gid, ids] : matched) {
    for (std::size_t k = 1; k < ids.size(); ++k) {
      ++r.matched_pairs;
      if (ids[k] == ids[k - 1]) ++r.agreeing_pairs;
      else ++r.id_switches;
    }
  }
  r.association_accuracy =
      r.matched_pairs == 0 ? 1.0
                           : static_cast<double>(r.agreeing_pairs) / static_cast<double>(r.matched_pairs);
  return r;
}

EvalReport combine_reports(const std::vector<EvalReport>& reports) {
  EvalReport out;
  for (const EvalReport& r : reports) {
    out.id_switches += r.id_switches;
    out.track_count += r.track_count;
    out.gt_count += r.gt_count;
    out.matched_pairs += r.matched_pairs;
    out.agreeing_pairs += r.agreeing_pairs;
  }
  out.association_accuracy =
      out.matched_pairs == 0
          ? 1.0
          : static_cast<double>(out.agreeing_pairs) / static_cast<double>(out.matched_pairs);
  return out;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.10g,%zu,%zu,%zu,%zu,%zu\n", r.association_accuracy,
                r.id_switches, r.track_count, r.gt_count, r.matched_pairs, r.agreeing_pairs);
  out << "association_accuracy,id_switches,track_count,gt_count,matched_pairs,agreeing_pairs\n" << buf;
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<double> kde(const std::vector<double>& samples, double bandwidth,
                        const std::vector<double>& grid) {
  if (samples.empty()) throw Error("kde: no samples");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw Error("kde: bandwidth must be positive");
  const double norm = 1.0 / (static_cast<double>(samples.size()) * bandwidth *
                             std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double s : samples) {
      const double z = (grid[g] - s) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    out[g] = acc * norm;
  }
  return out;
}

namespace {

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.empty()) throw Error("silverman_bandwidth: no samples");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double h = 0.0;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - mean) * (s - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    h = 0.9 * spread * std::pow(n, -0.2);
  }
  if (!(h > 0.0)) h = std::max(1e-3, 0.1 * std::abs(mean));
  return h;
}

KdeCurve make_kde_curve(std::vector<double> samples, std::optional<double> bandwidth,
                        std::size_t grid_points, bool log_grid) {
  if (samples.empty()) throw Error("kde: no samples");
  if (grid_points < 2) throw Error("kde: grid needs at least two points");
  std::sort(samples.begin(), samples.end());
  KdeCurve c;
  c.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  double lo = samples.front() - 6.0 * c.bandwidth;
  const double hi = samples.back() + 6.0 * c.bandwidth;
  c.grid.resize(grid_points);
  if (log_grid) {
    lo = std::max(lo, 1e-6 * std::max(1.0, hi));
    const double ratio = std::log(hi / lo);
    for (std::size_t i = 0; i < grid_points; ++i) {
      c.grid[i] = lo * std::exp(ratio * static_cast<double>(i) / static_cast<double>(grid_points - 1));
    }
  } else {
    for (std::size_t i = 0; i < grid_points; ++i) {
      c.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    }
  }
  c.densities = kde(samples, c.bandwidth, c.grid);
  c.samples = std::move(samples);
  return c;
}

std::vector<ClassMotion> class_motion_report(const std::vector<Sequence>& sequences,
                                             const std::map<int, int>& class_map, bool log_grid) {
  struct Instance {
    int group = 0;
    std::vector<std::pair<long, Box>> track;
  };
  std::map<int, std::vector<std::pair<double, double>>> samples;
  for (const Sequence& seq : sequences) {
    std::map<long, Instance> instances;
    for (const FrameSample& f : seq) {
      if (!f.gt) throw Error("motion report: frame " + std::to_string(f.frame_id) + " has no ground truth");
      for (const GtObject& g : *f.gt) {
        const auto mapped = class_map.find(g.class_id);
        Instance& inst = instances[g.id];
        inst.group = mapped == class_map.end() ? g.class_id : mapped->second;
        inst.track.emplace_back(f.frame_id, g.box);
      }
    }
    for (auto& [id, inst] : instances) {
      std::sort(inst.track.begin(), inst.track.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      // Runs of consecutive frames; a gap (exit/re-entry) starts a new run.
      double disp = 0.0, arc = 0.0;
      std::size_t steps = 0;
      std::size_t start = 0;
      for (std::size_t k = 1; k <= inst.track.size(); ++k) {
        if (k < inst.track.size() && inst.track[k].first == inst.track[k - 1].first + 1) continue;
        const std::size_t len = k - start;
        if (len >= 2) {
          const std::vector<std::pair<long, Box>> run(inst.track.begin() + start, inst.track.begin() + k);
          const MotionStats s = motion_stats(run);
          disp += s.mean_displacement * static_cast<double>(len - 1);
          arc += s.mean_aspect_change * static_cast<double>(len - 1);
          steps += len - 1;
        }
        start = k;
      }
      if (steps == 0) continue;
      samples[inst.group].emplace_back(disp / static_cast<double>(steps), arc / static_cast<double>(steps));
    }
  }

  std::vector<ClassMotion> out;
  for (auto& [group, pairs] : samples) {
    std::vector<double> d, a;
    for (const auto& [x, y] : pairs) {
      d.push_back(x);
      a.push_back(y);
    }
    std::sort(d.begin(), d.end());
    std::sort(a.begin(), a.end());
    ClassMotion m;
    m.group = group;
    m.instances = pairs.size();
    m.mean_displacement = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    m.mean_aspect_change = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    m.displacement = make_kde_curve(d, {}, 256, log_grid);
    m.aspect_change = make_kde_curve(a, {}, 256, log_grid);
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

void write_curve(const std::filesystem::path& path, const KdeCurve& c) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "x,density\n";
  char buf[96];
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", c.grid[i], c.densities[i]);
    out << buf;
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace

void write_motion_report(const std::filesystem::path& dir, const std::vector<ClassMotion>& report) {
  std::filesystem::create_directories(dir);
  std::ofstream summary(dir / "summary.csv");
  if (!summary) throw Error("cannot write " + (dir / "summary.csv").string());
  summary << "group,instances,mean_displacement,mean_arc,displacement_bandwidth,arc_bandwidth\n";
  char buf[256];
  for (const ClassMotion& m : report) {
    std::snprintf(buf, sizeof buf, "%d,%zu,%.10g,%.10g,%.10g,%.10g\n", m.group, m.instances,
                  m.mean_displacement, m.mean_aspect_change, m.displacement.bandwidth,
                  m.aspect_change.bandwidth);
    summary << buf;
    const std::string stem = "group_" + std::to_string(m.group);
    write_curve(dir / (stem + "_displacement.csv"), m.displacement);
    write_curve(dir / (stem + "_arc.csv"), m.aspect_change);
  }
  if (!summary) throw Error("failed writing summary.csv");
}

}  // namespace cuetrack
