// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cuetrack/array.hpp"

namespace cuetrack {

NormalizedBox normalize_box(const Box& box, double image_h, double image_w) {
  if (!(image_h > 0.0) || !(image_w > 0.0)) {
    throw Error("normalize_box: image dimensions must be positive");
  }
  if (!box.valid()) throw Error("normalize_box: box has max < min");
  const double s = 0.7 * std::max(image_h, image_w);
  return {(box.x_min - image_w / 2.0) / s, (box.y_min - image_h / 2.0) / s,
          (box.x_max - box.x_min) / s, (box.y_max - box.y_min) / s};
}

double iou(const Box& a, const Box& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) return 0.0;
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::size_t> class_agnostic_nms(const std::vector<ScoredBox>& dets, double iou_thr,
                                            std::size_t max_keep) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    if (kept.size() >= max_keep) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(dets[k].box, dets[idx].box) > iou_thr;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

MotionStats motion_stats(const std::vector<std::pair<long, Box>>& trajectory) {
  if (trajectory.size() < 2) throw Error("motion_stats: trajectory needs at least two boxes");
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    if (trajectory[i].first <= trajectory[i - 1].first) {
      throw Error("motion_stats: frames must be strictly increasing");
    }
  }
  auto aspect = [](const Box& b) {
    if (b.height() <= 0.0) throw Error("motion_stats: zero-height box has no aspect ratio");
    return b.width() / b.height();
  };
  double disp = 0.0, arc = 0.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const Box& p = trajectory[i - 1].second;
    const Box& q = trajectory[i].second;
    disp += std::hypot(q.center_x() - p.center_x(), q.center_y() - p.center_y());
    arc += std::abs(aspect(q) - aspect(p));
  }
  const double pairs = static_cast<double>(trajectory.size() - 1);
  return {disp / pairs, arc / pairs};
}

}  // namespace cuetrack
