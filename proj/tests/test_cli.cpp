// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cuetrack/config.hpp"
#include "cuetrack/data.hpp"
#include "cuetrack/tracker.hpp"
#include "test_support.hpp"

using namespace cuetrack;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CUETRACK_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallConfig = R"({
  "num_sequences": 3, "duration_s": 6, "fps": 1, "objects_per_class": 1,
  "epochs": 1, "batch_pairs": 4, "descriptor_dim": 8, "num_layers": 2, "num_heads": 2,
  "refine_widths": [16, 8], "head_hidden": 16, "head_layers": 2, "sinkhorn_iters": 20,
  "fp_rate": 0.5, "box_jitter": 0.03, "seed": 4
})";

}  // namespace

TEST_CASE("an empty file materializes the desk defaults") {
  const fs::path dir = testing::temp_dir("cli_empty");
  std::ofstream(dir / "c.json").close();
  const RunConfig c = load_config(dir / "c.json");
  const RunConfig d = preset_config("desk");
  CHECK(config_to_json(c) == config_to_json(d));
  CHECK(c.preset == "desk");
  CHECK(c.tracker.match_score_thr == 0.2);
  CHECK(c.tracker.memo_length_s == 10.0);
  CHECK(c.train.epochs == 12);
  CHECK(c.train.batch_pairs == 16);
  CHECK(c.train.learning_rate == 0.008);
  CHECK(c.model.sinkhorn_iters == 100);
  CHECK(c.scene.profiles.size() == 3);
}

TEST_CASE("overrides beat file values") {
  const fs::path dir = testing::temp_dir("cli_override");
  std::ofstream(dir / "c.json") << R"({"match_score_thr": 0.2, "epochs": 3})";
  const RunConfig c = load_config(dir / "c.json", {{"match_score_thr", "0.3"}});
  CHECK(c.tracker.match_score_thr == 0.3);
  CHECK(c.train.epochs == 3);
  CHECK(load_config(std::nullopt, {{"mode", "closed"}}).model.closed_set);
  CHECK_FALSE(load_config(std::nullopt, {{"use_app", "off"}}).model.cues.appearance);
}

TEST_CASE("unknown keys and bad values are rejected by name") {
  CHECK_THROWS_WITH_AS(config_from_json({{"mach_score_thr", 0.3}}), doctest::Contains("unknown key 'mach_score_thr'"),
                       Error);
  CHECK_THROWS_WITH_AS(config_from_json({{"epochs", "many"}}), doctest::Contains("epochs"), Error);
  CHECK_THROWS_WITH_AS(config_from_json({{"epochs", -2}}), doctest::Contains("epochs"), Error);
  CHECK_THROWS_AS(config_from_json({{"preset", "huge"}}), Error);
  CHECK_THROWS_AS(config_from_json({{"mode", "half"}}), Error);
}

TEST_CASE("disabling every cue is rejected") {
  CHECK_THROWS_AS(config_from_json({{"use_sem", false}, {"use_loc", false}, {"use_app", false}}), Error);
  CHECK_NOTHROW(config_from_json({{"use_sem", false}, {"use_loc", false}}));
}

TEST_CASE("the paper preset pins the large-model values") {
  const RunConfig p = config_from_json({{"preset", "paper"}});
  CHECK(p.model.stog.descriptor_dim == 256);
  CHECK(p.model.stog.num_layers == 4);
  CHECK(p.model.stog.num_heads == 4);
  CHECK(p.model.stog.refine_widths == std::vector<std::size_t>{512, 512, 256});
  CHECK(p.model.sinkhorn_iters == 100);
  CHECK(p.tracker.match_score_thr == 0.2);
  CHECK(p.tracker.memo_length_s == 10.0);
  CHECK_THROWS_AS(config_from_json({{"preset", "paper"}, {"descriptor_dim", 64}}), Error);
  CHECK_NOTHROW(config_from_json({{"preset", "paper"}, {"descriptor_dim", 256}}));
}

TEST_CASE("shared keys and seeds are materialized") {
  const RunConfig c = config_from_json({{"semantic_dim", 5}, {"fps", 3.0}, {"seed", 9}, {"sinkhorn_iters", 40}});
  CHECK(c.model.semantic_dim == 5);
  CHECK(c.tracker.fps == 3.0);
  CHECK(c.train.sinkhorn_iters == 40);
  CHECK(c.tracker.sinkhorn_iters == 40);
  CHECK(c.scene.seed != c.train.seed);
  CHECK(config_from_json({{"seed", 9}}).scene.seed == c.scene.seed);
  CHECK(config_from_json({{"seed", 10}}).scene.seed != c.scene.seed);
  const RunConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("simulate, train, track, eval and analyze run end to end") {
  const fs::path dir = testing::temp_dir("cli_pipeline");
  std::ofstream(dir / "c.json") << kSmallConfig;
  const std::string cfg = " --config " + (dir / "c.json").string();

  for (const char* round : {"a", "b"}) {
    const fs::path r = dir / round;
    fs::create_directories(r);
    REQUIRE(run("simulate" + cfg + " --out " + (r / "data").string(), r / "log") == 0);
    REQUIRE(run("train" + cfg + " --data " + (r / "data").string() + " --out " + (r / "model.ckpt").string(),
                r / "log") == 0);
    REQUIRE(run("track" + cfg + " --ckpt " + (r / "model.ckpt").string() + " --data " + (r / "data").string() +
                    " --out " + (r / "tracks.csv").string(),
                r / "log") == 0);
    REQUIRE(run("eval --pred " + (r / "tracks.csv").string() + " --gt " + (r / "data").string() + " --out " +
                    (r / "report.csv").string(),
                r / "log") == 0);
    REQUIRE(run("analyze --gt " + (r / "data").string() + " --out " + (r / "kde").string(), r / "log") == 0);
  }
  CHECK(fs::exists(dir / "a" / "data" / "seq_0002.jsonl"));
  CHECK(fs::exists(dir / "a" / "model.ckpt.loss.csv"));
  CHECK(fs::exists(dir / "a" / "kde" / "summary.csv"));
  for (const char* f : {"data/seq_0000.jsonl", "data/seq_0002.jsonl", "model.ckpt.loss.csv", "tracks.csv",
                        "report.csv", "kde/summary.csv", "kde/group_1_displacement.csv"}) {
    CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
  }
  CHECK(read_tracks_csv(dir / "a" / "tracks.csv").size() == 3);

  // A seed flag changes the data.
  REQUIRE(run("simulate" + cfg + " --seed 5 --out " + (dir / "c").string(), dir / "log") == 0);
  CHECK(slurp(dir / "c" / "seq_0000.jsonl") != slurp(dir / "a" / "data" / "seq_0000.jsonl"));
}

TEST_CASE("eval of ground-truth ids scores one") {
  const fs::path dir = testing::temp_dir("cli_eval");
  std::ofstream(dir / "c.json") << kSmallConfig;
  REQUIRE(run("simulate --config " + (dir / "c.json").string() + " --num-sequences 1 --out " + (dir / "data").string(),
              dir / "log") == 0);
  const Sequence seq = read_sequence(dir / "data" / "seq_0000.jsonl");
  TrackedSequence t;
  for (const FrameSample& f : seq)
    for (const GtObject& g : *f.gt) t.rows.push_back({f.frame_id, static_cast<std::uint64_t>(g.id + 40), g.box, 1.0, 0});
  write_tracks_csv(dir / "pred.csv", {t});
  REQUIRE(run("eval --pred " + (dir / "pred.csv").string() + " --gt " + (dir / "data").string() + " --out " +
                  (dir / "report.csv").string(),
              dir / "log") == 0);
  const std::string report = slurp(dir / "report.csv");
  CHECK(report.find("association_accuracy") != std::string::npos);
  CHECK(slurp(dir / "log").find("association_accuracy 1.0000") != std::string::npos);
}

TEST_CASE("failures exit nonzero with a message") {
  const fs::path dir = testing::temp_dir("cli_fail");
  CHECK(run("track --ckpt " + (dir / "missing.ckpt").string() + " --data " + dir.string() + " --out " +
                (dir / "t.csv").string(),
            dir / "log") != 0);
  CHECK(slurp(dir / "log").find("error: checkpoint not found") != std::string::npos);
  CHECK(run("simulate --out " + (dir / "x").string() + " --match-score-thr 2", dir / "log") != 0);
  CHECK(run("simulate --out " + (dir / "x").string() + " --epochs lots", dir / "log") != 0);
  CHECK(slurp(dir / "log").find("epochs") != std::string::npos);
  CHECK(run("train --data " + (dir / "none").string() + " --out " + (dir / "m.ckpt").string(), dir / "log") != 0);
  CHECK(run("", dir / "log") != 0);
}
