// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "cuetrack/metrics.hpp"
#include "cuetrack/simulator.hpp"
#include "test_support.hpp"

using namespace cuetrack;

namespace {

// Two objects far apart, one box per object per frame.
Sequence two_object_gt(long frames) {
  Sequence seq;
  for (long f = 0; f < frames; ++f) {
    FrameSample s;
    s.frame_id = f;
    s.time_s = static_cast<double>(f);
    s.gt = std::vector<GtObject>{{10, {f * 1.0, 0, f + 20.0, 20}, 0}, {20, {300 + f * 1.0, 200, 340 + f * 1.0, 260}, 1}};
    seq.push_back(std::move(s));
  }
  return seq;
}

std::vector<TrackedBox> copy_as_pred(const Sequence& gt, std::uint64_t (*relabel)(long, long)) {
  std::vector<TrackedBox> out;
  for (const FrameSample& f : gt)
    for (const GtObject& g : *f.gt) out.push_back({f.frame_id, relabel(g.id, f.frame_id), g.box, 1.0, g.class_id});
  return out;
}

double trapezoid(const KdeCurve& c) {
  double s = 0.0;
  for (std::size_t i = 1; i < c.grid.size(); ++i) {
    s += 0.5 * (c.densities[i] + c.densities[i - 1]) * (c.grid[i] - c.grid[i - 1]);
  }
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("a bijective relabeling scores perfectly") {
  const Sequence gt = two_object_gt(50);
  const auto pred = copy_as_pred(gt, [](long id, long) { return static_cast<std::uint64_t>(100 - id); });
  const EvalReport r = association_accuracy(pred, gt, 0.5);
  CHECK(r.association_accuracy == 1.0);
  CHECK(r.id_switches == 0);
  CHECK(r.track_count == 2);
  CHECK(r.gt_count == 2);
  CHECK(r.matched_pairs == 98);
}

TEST_CASE("a split track gives one switch") {
  const Sequence gt = two_object_gt(50);
  const auto pred = copy_as_pred(gt, [](long id, long f) {
    return static_cast<std::uint64_t>(id == 10 && f >= 25 ? 99 : id);
  });
  const EvalReport r = association_accuracy(pred, gt, 0.5);
  CHECK(r.id_switches == 1);
  CHECK(r.track_count == 3);
  CHECK(r.association_accuracy == doctest::Approx(97.0 / 98.0));
}

TEST_CASE("random ids agree with an exhaustive pair check") {
  const Sequence gt = two_object_gt(50);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TrackedBox> pred;
    // GT id -> predicted ids at frames where a prediction exists.
    std::map<long, std::vector<std::pair<long, std::uint64_t>>> seen;
    for (const FrameSample& f : gt) {
      for (const GtObject& g : *f.gt) {
        if (rng() % 5 == 0) continue;
        const std::uint64_t id = rng() % 3;
        pred.push_back({f.frame_id, id, g.box, 1.0, 0});
        seen[g.id].push_back({f.frame_id, id});
      }
    }
    std::size_t pairs = 0, agree = 0;
    for (const auto& [gid, list] : seen) {
      for (std::size_t a = 0; a < list.size(); ++a)
        for (std::size_t b = a + 1; b < list.size(); ++b) {
          // Consecutive occurrences only: nothing observed in between.
          bool adjacent = true;
          for (const auto& [frame, id] : list) adjacent = adjacent && !(frame > list[a].first && frame < list[b].first);
          if (!adjacent) continue;
          ++pairs;
          if (list[a].second == list[b].second) ++agree;
        }
    }
    const EvalReport r = association_accuracy(pred, gt, 0.5);
    CHECK(r.matched_pairs == pairs);
    CHECK(r.agreeing_pairs == agree);
    CHECK(r.id_switches == pairs - agree);
    CHECK(r.association_accuracy == doctest::Approx(static_cast<double>(agree) / pairs).epsilon(1e-15));
  }
}

TEST_CASE("accuracy ignores which ids are used") {
  const Sequence gt = two_object_gt(30);
  std::mt19937_64 rng(2);
  std::vector<TrackedBox> pred;
  for (const FrameSample& f : gt)
    for (const GtObject& g : *f.gt) pred.push_back({f.frame_id, rng() % 4, g.box, 1.0, 0});
  std::vector<TrackedBox> shifted = pred;
  for (TrackedBox& b : shifted) b.id = 1000 + (3 - b.id) * 7;
  const EvalReport a = association_accuracy(pred, gt, 0.5), b = association_accuracy(shifted, gt, 0.5);
  CHECK(a.association_accuracy == b.association_accuracy);
  CHECK(a.id_switches == b.id_switches);
}

TEST_CASE("iou threshold and edge cases") {
  const Sequence gt = two_object_gt(10);
  auto pred = copy_as_pred(gt, [](long id, long) { return static_cast<std::uint64_t>(id); });
  for (TrackedBox& b : pred) b.box = {b.box.x_min + 1000, b.box.y_min, b.box.x_max + 1000, b.box.y_max};
  const EvalReport far = association_accuracy(pred, gt, 0.5);
  CHECK(far.matched_pairs == 0);
  CHECK(far.association_accuracy == 1.0);

  std::vector<TrackedBox> bad = {{99, 0, {0, 0, 1, 1}, 1.0, 0}};
  CHECK_THROWS_AS(association_accuracy(bad, gt, 0.5), Error);
  Sequence no_gt = gt;
  no_gt[0].gt.reset();
  CHECK_THROWS_AS(association_accuracy({}, no_gt, 0.5), Error);
}

TEST_CASE("combining reports pools the pair counts") {
  EvalReport a, b;
  a.matched_pairs = 10;
  a.agreeing_pairs = 9;
  a.id_switches = 1;
  b.matched_pairs = 30;
  b.agreeing_pairs = 15;
  b.id_switches = 15;
  const EvalReport c = combine_reports({a, b});
  CHECK(c.association_accuracy == doctest::Approx(24.0 / 40.0));
  CHECK(c.id_switches == 16);
  CHECK(combine_reports({}).association_accuracy == 1.0);

  const auto dir = testing::temp_dir("metrics_report");
  write_report_csv(dir / "r.csv", c);
  CHECK(slurp(dir / "r.csv").find("association_accuracy") != std::string::npos);
}

TEST_CASE("kde closed forms") {
  CHECK(std::abs(kde({0.0}, 1.0, {0.0})[0] - 1.0 / std::sqrt(2.0 * std::numbers::pi)) <= 1e-12);
  const auto sym = kde({-1.0, 1.0}, 1.0, {-2.0, -0.5, 0.5, 2.0});
  CHECK(sym[0] == doctest::Approx(sym[3]).epsilon(1e-15));
  CHECK(sym[1] == doctest::Approx(sym[2]).epsilon(1e-15));
  CHECK_THROWS_AS(kde({}, 1.0, {0.0}), Error);
  CHECK_THROWS_AS(kde({0.0}, 0.0, {0.0}), Error);
  CHECK_THROWS_AS(kde({0.0}, -1.0, {0.0}), Error);
}

TEST_CASE("kde of normal samples approaches the normal density") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> s(1000);
  for (double& x : s) x = n(rng);
  CHECK(std::abs(kde(s, 0.3, {0.0})[0] - 0.3989) < 0.05);
}

TEST_CASE("kde scales with its samples") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> s(50), grid = {-2.0, 0.1, 1.7};
  for (double& x : s) x = u(rng);
  const double k = 3.5;
  std::vector<double> ks, kg;
  for (double x : s) ks.push_back(k * x);
  for (double g : grid) kg.push_back(k * g);
  const auto a = kde(s, 0.4, grid), b = kde(ks, 0.4 * k, kg);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(b[i] == doctest::Approx(a[i] / k).epsilon(1e-12));
}

TEST_CASE("kde curves integrate to one") {
  std::mt19937_64 rng(5);
  std::gamma_distribution<double> g(2.0, 3.0);
  std::vector<double> s(200);
  for (double& x : s) x = g(rng);
  const KdeCurve c = make_kde_curve(s);
  CHECK(c.grid.size() == 256);
  CHECK(c.bandwidth == doctest::Approx(silverman_bandwidth(s)));
  CHECK(c.grid.front() == doctest::Approx(*std::min_element(s.begin(), s.end()) - 6 * c.bandwidth));
  for (double d : c.densities) CHECK(d >= 0.0);
  CHECK(std::abs(trapezoid(c) - 1.0) < 0.02);

  const KdeCurve one = make_kde_curve({2.0}, 0.5);
  CHECK(std::abs(trapezoid(one) - 1.0) < 0.02);

  const KdeCurve lg = make_kde_curve(s, {}, 256, true);
  for (std::size_t i = 1; i < lg.grid.size(); ++i) CHECK(lg.grid[i] > lg.grid[i - 1]);
  CHECK(lg.grid.front() > 0.0);
  CHECK(lg.grid[2] / lg.grid[1] == doctest::Approx(lg.grid[1] / lg.grid[0]));
}

TEST_CASE("silverman bandwidth") {
  CHECK(silverman_bandwidth({1.0, 1.0, 1.0}) == doctest::Approx(0.1));
  CHECK(silverman_bandwidth({0.0}) == doctest::Approx(1e-3));
  std::vector<double> s = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double mean = 5.5, var = 0.0;
  for (double x : s) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / 9.0);
  // R-7 quartiles on 1..10: 3.25 and 7.75.
  const double iqr = 4.5;
  CHECK(silverman_bandwidth(s) == doctest::Approx(0.9 * std::min(sd, iqr / 1.34) * std::pow(10.0, -0.2)));
  CHECK_THROWS_AS(silverman_bandwidth({}), Error);
}

TEST_CASE("a static object has no motion") {
  Sequence seq;
  for (long f = 0; f < 5; ++f) {
    FrameSample s;
    s.frame_id = f;
    s.gt = std::vector<GtObject>{{1, {10, 10, 30, 50}, 4}};
    seq.push_back(s);
  }
  const auto r = class_motion_report({seq});
  REQUIRE(r.size() == 1);
  CHECK(r[0].group == 4);
  CHECK(r[0].instances == 1);
  CHECK(r[0].mean_displacement == 0.0);
  CHECK(r[0].mean_aspect_change == 0.0);
}

TEST_CASE("motion report orders classes by speed and is order invariant") {
  SceneConfig s;
  s.fps = 1.0;
  s.duration_s = 20.0;
  ClassProfile fast, slow;
  fast.class_id = 0;
  fast.speed_px_per_s = 20.0;
  fast.arc_rate = 0.2;
  slow.class_id = 1;
  slow.speed_px_per_s = 2.0;
  slow.arc_rate = 0.01;
  s.profiles = {fast, slow};
  s.objects_per_class = 3;
  std::vector<Sequence> seqs;
  for (NamedSequence& n : generate_dataset(s, 4)) seqs.push_back(std::move(n.frames));
  const auto r = class_motion_report(seqs);
  REQUIRE(r.size() == 2);
  CHECK(r[0].instances == 12);
  CHECK(r[0].mean_displacement > r[1].mean_displacement);
  CHECK(r[0].mean_aspect_change > r[1].mean_aspect_change);

  std::vector<Sequence> rev(seqs.rbegin(), seqs.rend());
  const auto q = class_motion_report(rev);
  CHECK(q[0].mean_displacement == r[0].mean_displacement);
  CHECK(q[1].displacement.densities == r[1].displacement.densities);

  const auto merged = class_motion_report(seqs, {{0, 7}, {1, 7}});
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].group == 7);
  CHECK(merged[0].instances == 24);
}

TEST_CASE("gaps split runs in motion statistics") {
  Sequence seq;
  for (long f : {0L, 1L, 5L, 6L}) {
    FrameSample s;
    s.frame_id = f;
    const double x = f < 5 ? f * 3.0 : 100.0 + (f - 5) * 3.0;
    s.gt = std::vector<GtObject>{{1, {x, 0, x + 10, 10}, 0}};
    seq.push_back(s);
  }
  const auto r = class_motion_report({seq});
  REQUIRE(r.size() == 1);
  CHECK(r[0].mean_displacement == doctest::Approx(3.0));
}

TEST_CASE("motion report files") {
  Sequence seq;
  for (long f = 0; f < 4; ++f) {
    FrameSample s;
    s.frame_id = f;
    s.gt = std::vector<GtObject>{{1, {f * 2.0, 0, f * 2.0 + 10, 10}, 3}};
    seq.push_back(s);
  }
  const auto dir = testing::temp_dir("metrics_motion");
  write_motion_report(dir, class_motion_report({seq}));
  CHECK(std::filesystem::exists(dir / "summary.csv"));
  CHECK(std::filesystem::exists(dir / "group_3_displacement.csv"));
  CHECK(std::filesystem::exists(dir / "group_3_arc.csv"));
  CHECK(slurp(dir / "group_3_arc.csv").rfind("x,density\n", 0) == 0);
}
