// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "cuetrack/rng.hpp"

namespace cuetrack {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_pairs == 0 || pairs_per_sequence == 0 || sinkhorn_iters == 0) {
    throw Error("train config: epochs, batch_pairs, pairs_per_sequence and sinkhorn_iters must be positive");
  }
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
    throw Error("train config: learning_rate and weight_decay must be non-negative");
  }
  if (!(max_interval_s > 0.0)) throw Error("train config: max_interval_s must be positive");
  if (!(iou_match_thr > 0.0 && iou_match_thr <= 1.0)) {
    throw Error("train config: iou_match_thr must lie in (0, 1]");
  }
  if (!(image_h > 0.0 && image_w > 0.0)) throw Error("train config: image size must be positive");
}

std::vector<TrackId> dat_match(const std::vector<Box>& detections, const std::vector<GtObject>& gt,
                               double iou_thr) {
  std::vector<TrackId> ids(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    double best = -1.0;
    for (const GtObject& g : gt) {
      const double o = iou(detections[i], g.box);
      if (o > best) {
        best = o;
        if (o >= iou_thr) ids[i] = g.id;
      }
    }
  }
  return ids;
}

TargetMatrix build_target(const std::vector<TrackId>& key_ids, const std::vector<TrackId>& ref_ids) {
  const std::size_t m = key_ids.size(), n = ref_ids.size();
  Array t({m + 1, n + 1});
  for (std::size_t i = 0; i < m; ++i) {
    if (!key_ids[i]) continue;
    bool matched = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (ref_ids[j] == key_ids[i]) {
        t(i, j) = 1.0;
        matched = true;
      }
    }
    if (!matched) t(i, n) = 1.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!ref_ids[j]) continue;
    const bool matched = std::find(key_ids.begin(), key_ids.end(), ref_ids[j]) != key_ids.end();
    if (!matched) t(m, j) = 1.0;
  }
  return TargetMatrix{std::move(t)};
}

Marginals target_marginals(const std::vector<TrackId>& key_ids, const std::vector<TrackId>& ref_ids) {
  auto mass = [](const std::vector<TrackId>& own, const std::vector<TrackId>& other) {
    std::vector<double> out(own.size(), 1.0);
    for (std::size_t i = 0; i < own.size(); ++i) {
      if (!own[i]) continue;
      const auto k = std::count(other.begin(), other.end(), own[i]);
      out[i] = std::max<double>(1.0, static_cast<double>(k));
    }
    return out;
  };
  return multiplicity_marginals(mass(key_ids, ref_ids), mass(ref_ids, key_ids));
}

std::pair<std::size_t, std::size_t> sample_pair(const std::vector<double>& frame_times,
                                                double max_interval_s, std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> eligible;
  for (std::size_t a = 0; a < frame_times.size(); ++a) {
    for (std::size_t b = 0; b < frame_times.size(); ++b) {
      const double dt = std::abs(frame_times[a] - frame_times[b]);
      if (a != b && dt > 0.0 && dt <= max_interval_s) eligible.emplace_back(a, b);
    }
  }
  if (eligible.empty()) {
    throw Error("sample_pair: no two frames lie within " + std::to_string(max_interval_s) + " s");
  }
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return eligible[pick(rng)];
}

std::pair<std::size_t, std::size_t> sample_pair(const Sequence& sequence, double max_interval_s,
                                                std::mt19937_64& rng) {
  std::vector<double> times;
  times.reserve(sequence.size());
  for (const FrameSample& f : sequence) times.push_back(f.time_s);
  return sample_pair(times, max_interval_s, rng);
}

TrainingFrame prepare_frame(const FrameSample& frame, const TrainConfig& cfg,
                            const ModelConfig& model_cfg) {
  if (!frame.gt) throw Error("frame " + std::to_string(frame.frame_id) + " has no ground truth");
  const std::vector<GtObject>& gt = *frame.gt;
  std::vector<Box> boxes;
  boxes.reserve(frame.detections.size());
  for (const Detection& d : frame.detections) boxes.push_back(d.box);

  TrainingFrame out;
  out.time_s = frame.time_s;
  if (cfg.detection_aware) {
    out.ids = dat_match(boxes, gt, cfg.iou_match_thr);
    out.inputs = frame_inputs(frame.detections, model_cfg, cfg.image_h, cfg.image_w);
    return out;
  }
  // GT-only: one clean box per annotated object. Cue vectors come from the
  // best-overlapping detection; objects the detector missed are skipped.
  std::vector<Detection> clean;
  for (const GtObject& g : gt) {
    double best = -1.0;
    std::size_t best_i = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const double o = iou(boxes[i], g.box);
      if (o > best) {
        best = o;
        best_i = i;
      }
    }
    if (best_i == boxes.size() || best < cfg.iou_match_thr) continue;
    Detection d = frame.detections[best_i];
    d.box = g.box;
    d.score = 1.0;
    clean.push_back(std::move(d));
    out.ids.emplace_back(g.id);
  }
  out.inputs = frame_inputs(clean, model_cfg, cfg.image_h, cfg.image_w);
  return out;
}

namespace {

Array log_column(const std::vector<double>& v) {
  Array out({v.size(), 1});
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  return out;
}

Array log_row(const std::vector<double>& v) {
  Array out({1, v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  return out;
}

}  // namespace

double pair_loss(Graph& graph, const TrainingFrame& key, const TrainingFrame& ref,
                 const ModelConfig& model_cfg, const ParameterStore& params,
                 ParameterStore* grads, double weight) {
  NamedArrays inputs;
  bind_frame_inputs(inputs, "key", key.inputs, model_cfg);
  bind_frame_inputs(inputs, "ref", ref.inputs, model_cfg);
  const Marginals marg = target_marginals(key.ids, ref.ids);
  inputs.emplace("log_mu", log_column(marg.rows));
  inputs.emplace("log_nu", log_row(marg.cols));
  inputs.emplace("target", build_target(key.ids, ref.ids).values);
  const double loss = graph.forward(inputs, params).at("loss")[0];
  if (grads != nullptr && std::isfinite(loss)) {
    graph.backward({{"loss", Array({1, 1}, weight)}}, *grads);
  }
  return loss;
}

TrainResult train(const std::vector<Sequence>& dataset, const TrainConfig& cfg,
                  const ModelConfig& model_cfg) {
  return train(dataset, cfg, model_cfg, init_model(model_cfg, cfg.seed));
}

TrainResult train(const std::vector<Sequence>& dataset, const TrainConfig& cfg,
                  const ModelConfig& model_cfg, ParameterStore initial) {
  cfg.validate();
  model_cfg.validate();
  if (dataset.empty()) throw Error("train: dataset is empty");

  ModelConfig graph_cfg = model_cfg;
  graph_cfg.sinkhorn_iters = cfg.sinkhorn_iters;
  Graph graph = build_pair_graph(graph_cfg);

  // Frames without any usable object cannot form a pair.
  struct PreparedSequence {
    std::vector<TrainingFrame> frames;
    std::vector<double> times;
  };
  std::vector<PreparedSequence> usable;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    PreparedSequence p;
    for (const FrameSample& f : dataset[s]) {
      TrainingFrame t = prepare_frame(f, cfg, model_cfg);
      if (t.inputs.count == 0) continue;
      p.times.push_back(t.time_s);
      p.frames.push_back(std::move(t));
    }
    bool has_pair = false;
    for (std::size_t a = 0; a + 1 < p.times.size() && !has_pair; ++a) {
      const double dt = std::abs(p.times[a + 1] - p.times[a]);
      has_pair = dt > 0.0 && dt <= cfg.max_interval_s;
    }
    if (has_pair) usable.push_back(std::move(p));
  }
  if (usable.empty()) throw Error("train: no sequence has two usable frames within max_interval_s");

  TrainResult result{std::move(initial), {}};
  ParameterStore& params = result.params;
  std::mt19937_64 rng(derive_seed(cfg.seed, "train.sampler"));

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(usable.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::pair<std::size_t, std::size_t>>> pairs;
    for (std::size_t s : order) {
      for (std::size_t k = 0; k < cfg.pairs_per_sequence; ++k) {
        pairs.emplace_back(s, sample_pair(usable[s].times, cfg.max_interval_s, rng));
      }
    }
    for (std::size_t begin = 0; begin < pairs.size(); begin += cfg.batch_pairs) {
      const std::size_t end = std::min(pairs.size(), begin + cfg.batch_pairs);
      const double weight = 1.0 / static_cast<double>(end - begin);
      params.zero_grads();
      double total = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const auto& [s, fr] = pairs[b];
        double loss = 0.0;
        try {
          loss = pair_loss(graph, usable[s].frames[fr.first], usable[s].frames[fr.second], model_cfg,
                           params, &params, weight);
        } catch (const Error& e) {
          throw Error("train: step " + std::to_string(step) + ": " + e.what());
        }
        if (!std::isfinite(loss)) {
          throw Error("train: non-finite loss at step " + std::to_string(step));
        }
        total += loss;
      }
      for (const std::string& name : params.names()) {
        Array& p = params.mutable_value(name);
        const Array& g = params.grad(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
          p[i] -= cfg.learning_rate * g[i] + cfg.learning_rate * cfg.weight_decay * p[i];
        }
      }
      result.history.push_back({step, epoch, total * weight});
      ++step;
    }
  }
  params.zero_grads();
  return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,epoch,loss\n";
  char buf[64];
  for (const LossRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << r.step << ',' << r.epoch << ',' << buf << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace cuetrack
