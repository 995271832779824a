// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace cuetrack {

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_max >= x_min && y_max >= y_min; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Box in image-centred units: origin at the image centre, lengths divided by
/// 0.7 * max(H, W).
struct NormalizedBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double width = 0.0;
  double height = 0.0;
};

NormalizedBox normalize_box(const Box& box, double image_h, double image_w);

/// Intersection over union; 0 when either box has zero area.
double iou(const Box& a, const Box& b);

struct ScoredBox {
  Box box;
  double score = 0.0;
};

/// Greedy class-agnostic NMS. Returns kept indices in descending score order
/// (ties by lower index).
std::vector<std::size_t> class_agnostic_nms(const std::vector<ScoredBox>& dets, double iou_thr,
                                            std::size_t max_keep);

struct MotionStats {
  double mean_displacement = 0.0;
  double mean_aspect_change = 0.0;
};

/// Mean centroid displacement and mean |change of width/height| across
/// consecutive entries of a trajectory.
MotionStats motion_stats(const std::vector<std::pair<long, Box>>& trajectory);

}  // namespace cuetrack
