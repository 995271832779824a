// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "cuetrack/data.hpp"
#include "cuetrack/tracker.hpp"

namespace cuetrack {

struct EvalReport {
  double association_accuracy = 1.0;
  std::size_t id_switches = 0;
  std::size_t track_count = 0;
  std::size_t gt_count = 0;
  // Consecutive same-GT matched pairs, and those whose predicted ids agree.
  std::size_t matched_pairs = 0;
  std::size_t agreeing_pairs = 0;
};

/// Per frame, predictions are matched to GT by Hungarian on -IoU keeping pairs
/// with IoU >= iou_thr. Accuracy is the share of consecutive matched
/// occurrences of one GT track whose predicted ids agree (1 with no pairs).
/// Switches count id change events.
EvalReport association_accuracy(const std::vector<TrackedBox>& pred, const Sequence& gt,
                                double iou_thr);

/// Pools pair counts and switches over several sequences.
EvalReport combine_reports(const std::vector<EvalReport>& reports);

void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

/// Gaussian kernel density estimate of `samples` at every grid point.
std::vector<double> kde(const std::vector<double>& samples, double bandwidth,
                        const std::vector<double>& grid);

/// 0.9 min(sd, IQR / 1.34) n^(-1/5); degenerate samples fall back to
/// max(1e-3, 0.1 |mean|).
double silverman_bandwidth(const std::vector<double>& samples);

struct KdeCurve {
  std::vector<double> samples;
  double bandwidth = 1.0;
  std::vector<double> grid;
  std::vector<double> densities;
};

/// Grid spans [min - 6h, max + 6h]. With `log_grid` the points are
/// geometrically spaced over the positive part of that range.
KdeCurve make_kde_curve(std::vector<double> samples, std::optional<double> bandwidth = {},
                        std::size_t grid_points = 256, bool log_grid = false);

struct ClassMotion {
  int group = 0;
  std::size_t instances = 0;
  double mean_displacement = 0.0;
  double mean_aspect_change = 0.0;
  KdeCurve displacement;
  KdeCurve aspect_change;
};

/// Per-instance motion statistics (over runs of consecutive frames) grouped
/// by class. `class_map` folds classes into parent groups; unmapped classes
/// form their own group.
std::vector<ClassMotion> class_motion_report(const std::vector<Sequence>& sequences,
                                             const std::map<int, int>& class_map = {},
                                             bool log_grid = false);

/// summary.csv plus group_<g>_displacement.csv and group_<g>_arc.csv
/// (columns x,density).
void write_motion_report(const std::filesystem::path& dir, const std::vector<ClassMotion>& report);

}  // namespace cuetrack
