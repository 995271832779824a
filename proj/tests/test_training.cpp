// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "cuetrack/simulator.hpp"
#include "cuetrack/training.hpp"
#include "test_support.hpp"

using namespace cuetrack;

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.semantic_dim = 4;
  m.appearance_dim = 6;
  m.head_hidden = 16;
  m.head_layers = 2;
  m.stog.descriptor_dim = 8;
  m.stog.num_layers = 2;
  m.stog.num_heads = 2;
  m.stog.refine_widths = {16, 8};
  m.sinkhorn_iters = 30;
  return m;
}

SceneConfig linear_scene(std::uint64_t seed) {
  SceneConfig s;
  s.fps = 1.0;
  s.duration_s = 8.0;
  s.semantic_dim = 4;
  s.appearance_dim = 6;
  s.objects_per_class = 2;
  ClassProfile a;
  a.class_id = 0;
  a.speed_px_per_s = 20.0;
  ClassProfile b = a;
  b.class_id = 1;
  b.speed_px_per_s = 10.0;
  b.size_w = 60.0;
  s.profiles = {a, b};
  s.noise.appearance_sigma = 0.1;
  s.noise.box_jitter = 0.03;
  s.seed = seed;
  s.prototype_seed = 5;
  return s;
}

std::vector<Sequence> dataset(std::size_t count, std::uint64_t seed) {
  std::vector<Sequence> out;
  for (NamedSequence& s : generate_dataset(linear_scene(seed), count)) out.push_back(std::move(s.frames));
  return out;
}

TrainConfig small_train() {
  TrainConfig t;
  t.epochs = 1;
  t.batch_pairs = 4;
  t.sinkhorn_iters = 30;
  t.seed = 3;
  return t;
}

double mean(const std::vector<LossRecord>& h, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += h[i].loss;
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig t;
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), Error);
  t = TrainConfig{};
  t.max_interval_s = 0.0;
  CHECK_THROWS_AS(t.validate(), Error);
  t = TrainConfig{};
  t.iou_match_thr = 1.5;
  CHECK_THROWS_AS(t.validate(), Error);
  t = TrainConfig{};
  t.learning_rate = -1.0;
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("dat_match thresholds and duplicates") {
  const std::vector<GtObject> gt = {{7, {0, 0, 10, 10}, 0}, {9, {50, 50, 60, 60}, 0}};
  // [0,0,10,8]: IoU 0.8; [0,0,10,6]: IoU 0.6.
  const auto ids = dat_match({{0, 0, 10, 8}, {0, 0, 10, 6}, {100, 100, 110, 110}}, gt, 0.7);
  CHECK(ids[0] == TrackId(7));
  CHECK_FALSE(ids[1].has_value());
  CHECK_FALSE(ids[2].has_value());

  // Both at IoU 0.75 with the same box.
  const auto dup = dat_match({{0, 0, 10, 7.5}, {0, 2.5, 10, 10}}, gt, 0.7);
  CHECK(dup[0] == TrackId(7));
  CHECK(dup[1] == TrackId(7));

  // Best-overlap wins even when a second GT also clears the threshold.
  const std::vector<GtObject> close = {{1, {0, 0, 10, 10}, 0}, {2, {0, 0, 10, 9}, 0}};
  CHECK(dat_match({{0, 0, 10, 9.1}}, close, 0.5)[0] == TrackId(2));
  CHECK(dat_match({}, gt, 0.7).empty());
}

TEST_CASE("build_target examples") {
  const long a = 1, b = 2, c = 3;
  const TargetMatrix t = build_target({a, b}, {b, c});
  CHECK(t.values == Array::matrix(3, 3, {0, 0, 1, 1, 0, 0, 0, 1, 0}));

  const TargetMatrix disjoint = build_target({a, b}, {c});
  CHECK(disjoint.values == Array::matrix(3, 2, {0, 1, 0, 1, 1, 0}));

  // The id-less detection's row carries no loss cells.
  const TargetMatrix masked = build_target({a, std::nullopt}, {a});
  CHECK(masked.values == Array::matrix(3, 2, {1, 0, 0, 0, 0, 0}));

  const TargetMatrix empty = build_target({}, {a});
  CHECK(empty.values == Array::matrix(1, 2, {1, 0}));
  CHECK(build_target({std::nullopt}, {std::nullopt}).values == Array({2, 2}));
}

TEST_CASE("build_target row and column sums equal multiplicities") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<TrackId> k(1 + rng() % 6), r(1 + rng() % 6);
    for (auto& v : k) v = rng() % 4 == 0 ? TrackId() : TrackId(static_cast<long>(rng() % 4));
    for (auto& v : r) v = rng() % 4 == 0 ? TrackId() : TrackId(static_cast<long>(rng() % 4));
    const TargetMatrix tm = build_target(k, r);
    const Marginals mg = target_marginals(k, r);
    CHECK(tm.values(k.size(), r.size()) == 0.0);
    for (std::size_t i = 0; i < k.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j <= r.size(); ++j) s += tm.values(i, j);
      CHECK(s == (k[i] ? mg.rows[i] : 0.0));
    }
    for (std::size_t j = 0; j < r.size(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i <= k.size(); ++i) s += tm.values(i, j);
      CHECK(s == (r[j] ? mg.cols[j] : 0.0));
    }
    const double rs = std::accumulate(mg.rows.begin(), mg.rows.end(), 0.0);
    const double cs = std::accumulate(mg.cols.begin(), mg.cols.end(), 0.0);
    CHECK(rs == cs);
  }
}

TEST_CASE("target marginals follow multiplicity") {
  const Marginals m = target_marginals({1L, 1L, 2L}, {1L, 3L});
  CHECK(m.rows == std::vector<double>{1, 1, 1, 3});
  CHECK(m.cols == std::vector<double>{2, 1, 3});
}

TEST_CASE("sample_pair") {
  std::mt19937_64 rng(2);
  auto p = sample_pair(std::vector<double>{0.0, 1.0}, 3.0, rng);
  CHECK(((p.first == 0 && p.second == 1) || (p.first == 1 && p.second == 0)));
  CHECK_THROWS_AS(sample_pair(std::vector<double>{0.0, 10.0}, 3.0, rng), Error);
  CHECK_THROWS_AS(sample_pair(std::vector<double>{0.0}, 3.0, rng), Error);

  const std::vector<double> times = {0, 1, 2, 3, 4, 5, 6};
  std::mt19937_64 a(9), b(9);
  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  for (int i = 0; i < 20000; ++i) {
    const auto x = sample_pair(times, 2.0, a);
    CHECK(x == sample_pair(times, 2.0, b));
    const double dt = std::abs(times[x.first] - times[x.second]);
    CHECK(dt > 0.0);
    CHECK(dt <= 2.0);
    ++counts[x];
  }
  // 7 frames with |dt| in {1, 2}: 2 * (6 + 5) ordered pairs.
  CHECK(counts.size() == 22);
  for (const auto& [pair, n] : counts) {
    CHECK(n > 20000 / 22 * 0.8);
    CHECK(n < 20000 / 22 * 1.2);
  }
}

TEST_CASE("prepare_frame modes") {
  ModelConfig m = tiny_model();
  FrameSample f;
  f.frame_id = 3;
  f.time_s = 1.5;
  Detection d;
  d.semantic = {1, 0, 0, 0};
  d.appearance = {0, 1, 0, 0, 0, 0};
  d.score = 0.7;
  d.box = {0, 0, 10, 8};
  Detection part = d;
  part.box = {0, 0, 10, 7.5};
  Detection fp = d;
  fp.box = {200, 200, 220, 220};
  f.detections = {d, part, fp};
  f.gt = std::vector<GtObject>{{4, {0, 0, 10, 10}, 0}, {5, {300, 300, 320, 320}, 1}};

  TrainConfig t;
  const TrainingFrame dat = prepare_frame(f, t, m);
  CHECK(dat.inputs.count == 3);
  CHECK(dat.ids == std::vector<TrackId>{4L, 4L, std::nullopt});
  CHECK(dat.time_s == 1.5);

  t.detection_aware = false;
  const TrainingFrame gt = prepare_frame(f, t, m);
  CHECK(gt.inputs.count == 1);
  CHECK(gt.ids == std::vector<TrackId>{4L});

  f.gt.reset();
  CHECK_THROWS_AS(prepare_frame(f, t, m), Error);
}

TEST_CASE("masked detections do not change the loss through their cells") {
  // Adding a GT-unmatched detection changes the normalisation, never the set
  // of loss cells it owns, which stay empty.
  const TargetMatrix with = build_target({1L, std::nullopt, 2L}, {2L, std::nullopt, 1L});
  for (std::size_t j = 0; j < 4; ++j) CHECK(with.values(1, j) == 0.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(with.values(i, 1) == 0.0);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const ModelConfig m = tiny_model();
  TrainConfig t = small_train();
  t.learning_rate = 0.0;
  t.weight_decay = 0.0;
  const ParameterStore before = init_model(m, t.seed);
  const TrainResult r = train(dataset(2, 1), t, m);
  for (const std::string& n : before.names()) CHECK(r.params.value(n) == before.value(n));
  CHECK_FALSE(r.history.empty());
}

TEST_CASE("training is deterministic and descends") {
  const ModelConfig m = tiny_model();
  TrainConfig t = small_train();
  t.epochs = 25;
  t.pairs_per_sequence = 4;
  t.learning_rate = 0.02;
  const auto data = dataset(8, 2);
  const TrainResult a = train(data, t, m);
  REQUIRE(a.history.size() == 200);
  CHECK(mean(a.history, 180, 200) < mean(a.history, 0, 20));

  TrainConfig shortrun = t;
  shortrun.epochs = 2;
  const TrainResult x = train(data, shortrun, m);
  const TrainResult y = train(data, shortrun, m);
  REQUIRE(x.history.size() == y.history.size());
  for (std::size_t i = 0; i < x.history.size(); ++i) CHECK(x.history[i].loss == y.history[i].loss);
  for (const std::string& n : x.params.names()) CHECK(x.params.value(n) == y.params.value(n));
}

TEST_CASE("training does not touch its inputs") {
  const ModelConfig m = tiny_model();
  const auto data = dataset(2, 3);
  const auto copy = data;
  train(data, small_train(), m);
  REQUIRE(copy.size() == data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    CHECK(frame_to_json_line(data[s][0]) == frame_to_json_line(copy[s][0]));
    CHECK(frame_to_json_line(data[s].back()) == frame_to_json_line(copy[s].back()));
  }
}

TEST_CASE("training errors") {
  const ModelConfig m = tiny_model();
  CHECK_THROWS_AS(train({}, small_train(), m), Error);
  auto data = dataset(1, 4);
  data[0][0].gt.reset();
  CHECK_THROWS_AS(train(data, small_train(), m), Error);

  auto sparse = dataset(1, 4);
  Sequence two = {sparse[0][0], sparse[0][0]};
  two[1].time_s = 10.0;
  CHECK_THROWS_WITH_AS(train({two}, small_train(), m), doctest::Contains("max_interval_s"), Error);

  TrainConfig hot = small_train();
  hot.learning_rate = 1e12;
  hot.epochs = 5;
  CHECK_THROWS_WITH_AS(train(dataset(2, 5), hot, m), doctest::Contains("step"), Error);
}

TEST_CASE("loss csv") {
  const auto dir = testing::temp_dir("training");
  write_loss_csv(dir / "loss.csv", {{0, 0, 1.5}, {1, 0, 0.1}});
  std::ifstream in(dir / "loss.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "step,epoch,loss\n0,0,1.5\n1,0,0.10000000000000001\n");
}
