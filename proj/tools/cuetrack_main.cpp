// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cuetrack/checkpoint.hpp"
#include "cuetrack/config.hpp"
#include "cuetrack/data.hpp"
#include "cuetrack/metrics.hpp"
#include "cuetrack/simulator.hpp"
#include "cuetrack/tracker.hpp"
#include "cuetrack/training.hpp"

namespace fs = std::filesystem;
using namespace cuetrack;

namespace {

struct Common {
  std::string config;
  std::map<std::string, std::string> values;   // key -> raw flag text
  std::map<std::string, CLI::Option*> flags;  // key -> option

  void attach(CLI::App& app) {
    app.add_option("--config", config, "JSON config file");
    for (const std::string& key : config_keys()) {
      std::string flag = "--" + key;
      for (char& c : flag) {
        if (c == '_') c = '-';
      }
      flags[key] = app.add_option(flag, values[key], "override config key " + key);
    }
  }

  RunConfig load() const {
    std::map<std::string, std::string> overrides;
    for (const auto& [key, opt] : flags) {
      if (opt->count() > 0) overrides[key] = values.at(key);
    }
    std::optional<fs::path> path;
    if (!config.empty()) path = config;
    return load_config(path, overrides);
  }
};

void require_exists(const std::string& what, const fs::path& p) {
  if (!fs::exists(p)) throw Error(what + " not found: " + p.string());
}

int run_simulate(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  for (const NamedSequence& s : generate_dataset(cfg.scene, cfg.num_sequences)) {
    write_sequence(out / (s.name + ".jsonl"), s.frames);
  }
  std::printf("wrote %zu sequences to %s\n", cfg.num_sequences, out.string().c_str());
  return 0;
}

int run_train(const RunConfig& cfg, const fs::path& data, const fs::path& out) {
  require_exists("training data", data);
  std::vector<Sequence> dataset;
  for (NamedSequence& s : read_sequences(data)) dataset.push_back(std::move(s.frames));
  TrainResult r = train(dataset, cfg.train, cfg.model);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  nlohmann::json meta = {{"model", cfg.model.to_json()}, {"config", config_to_json(cfg)}};
  save_checkpoint(out, r.params, meta);
  write_loss_csv(out.string() + ".loss.csv", r.history);
  const double first = r.history.empty() ? 0.0 : r.history.front().loss;
  const double last = r.history.empty() ? 0.0 : r.history.back().loss;
  std::printf("trained %zu steps, loss %.4f -> %.4f; checkpoint %s\n", r.history.size(), first,
              last, out.string().c_str());
  return 0;
}

int run_track(const RunConfig& cfg, const fs::path& ckpt, const fs::path& data, const fs::path& out) {
  require_exists("checkpoint", ckpt);
  require_exists("sequence data", data);
  Checkpoint c = load_checkpoint(ckpt);
  if (!c.metadata.contains("model")) throw Error("checkpoint " + ckpt.string() + " has no model config");
  const ModelConfig model = ModelConfig::from_json(c.metadata.at("model"));
  std::vector<TrackedSequence> results;
  for (const NamedSequence& s : read_sequences(data)) {
    results.push_back({s.name, track_sequence(s.frames, model, c.params, cfg.tracker)});
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_tracks_csv(out, results);
  std::printf("tracked %zu sequences into %s\n", results.size(), out.string().c_str());
  return 0;
}

int run_eval(const fs::path& pred_path, const fs::path& gt_dir, double iou_thr, const fs::path& out) {
  require_exists("predictions", pred_path);
  require_exists("ground truth", gt_dir);
  const std::vector<TrackedSequence> pred = read_tracks_csv(pred_path);
  const std::vector<NamedSequence> gt = read_sequences(gt_dir);
  std::vector<EvalReport> reports;
  if (pred.size() == 1 && pred[0].name.empty() && gt.size() == 1) {
    reports.push_back(association_accuracy(pred[0].rows, gt[0].frames, iou_thr));
  } else {
    std::map<std::string, const TrackedSequence*> by_name;
    for (const TrackedSequence& p : pred) by_name[p.name] = &p;
    for (const NamedSequence& g : gt) {
      const auto it = by_name.find(g.name);
      if (it == by_name.end()) throw Error("no predictions for sequence " + g.name);
      reports.push_back(association_accuracy(it->second->rows, g.frames, iou_thr));
      by_name.erase(it);
    }
    if (!by_name.empty()) throw Error("predictions name unknown sequence " + by_name.begin()->first);
  }
  const EvalReport total = combine_reports(reports);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_report_csv(out, total);
  std::printf("association_accuracy %.4f, id_switches %zu\n", total.association_accuracy,
              total.id_switches);
  return 0;
}

int run_analyze(const fs::path& gt_dir, const fs::path& out, bool log_grid) {
  require_exists("ground truth", gt_dir);
  std::vector<Sequence> seqs;
  for (NamedSequence& s : read_sequences(gt_dir)) seqs.push_back(std::move(s.frames));
  const auto report = class_motion_report(seqs, {}, log_grid);
  write_motion_report(out, report);
  for (const ClassMotion& m : report) {
    std::printf("class %d: %zu instances, displacement %.4f, arc %.4f\n", m.group, m.instances,
                m.mean_displacement, m.mean_aspect_change);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cuetrack: cue-fusion multi-object association"};
  app.require_subcommand(1);

  Common sim_opts, train_opts, track_opts;
  std::string sim_out, train_data, train_out, track_ckpt, track_data, track_out;
  std::string eval_pred, eval_gt, eval_out, analyze_gt, analyze_out;
  double iou_thr = 0.5;
  bool log_grid = false;

  CLI::App* sim = app.add_subcommand("simulate", "generate synthetic sequences");
  sim_opts.attach(*sim);
  sim->add_option("--out", sim_out, "output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train the association model");
  train_opts.attach(*tr);
  tr->add_option("--data", train_data, "directory of .jsonl sequences")->required();
  tr->add_option("--out", train_out, "checkpoint path")->required();

  CLI::App* tk = app.add_subcommand("track", "track sequences with a checkpoint");
  track_opts.attach(*tk);
  tk->add_option("--ckpt", track_ckpt, "checkpoint path")->required();
  tk->add_option("--data", track_data, "directory of .jsonl sequences")->required();
  tk->add_option("--out", track_out, "result CSV")->required();

  CLI::App* ev = app.add_subcommand("eval", "score tracks against ground truth");
  ev->add_option("--pred", eval_pred, "result CSV")->required();
  ev->add_option("--gt", eval_gt, "directory of .jsonl sequences")->required();
  ev->add_option("--iou-thr", iou_thr, "IoU threshold for matching");
  ev->add_option("--out", eval_out, "report CSV")->required();

  CLI::App* an = app.add_subcommand("analyze", "per-class motion statistics and KDE curves");
  an->add_option("--gt", analyze_gt, "directory of .jsonl sequences")->required();
  an->add_option("--out", analyze_out, "output directory")->required();
  an->add_flag("--log-grid", log_grid, "log-spaced KDE grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(sim_opts.load(), sim_out);
    if (tr->parsed()) return run_train(train_opts.load(), train_data, train_out);
    if (tk->parsed()) return run_track(track_opts.load(), track_ckpt, track_data, track_out);
    if (ev->parsed()) return run_eval(eval_pred, eval_gt, iou_thr, eval_out);
    if (an->parsed()) return run_analyze(analyze_gt, analyze_out, log_grid);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
