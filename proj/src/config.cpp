// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "cuetrack/rng.hpp"

namespace cuetrack {

using nlohmann::json;

void RunConfig::materialize() {
  model.semantic_dim = scene.semantic_dim;
  model.appearance_dim = scene.appearance_dim;
  train.sinkhorn_iters = model.sinkhorn_iters;
  tracker.sinkhorn_iters = model.sinkhorn_iters;
  train.image_h = tracker.image_h = scene.image_h;
  train.image_w = tracker.image_w = scene.image_w;
  tracker.fps = scene.fps;
  scene.seed = derive_seed(seed, "simulate");
  train.seed = derive_seed(seed, "train");
  scene.validate();
  train.validate();
  tracker.validate();
  model.validate();
}

std::vector<ClassProfile> desk_profiles() {
  ClassProfile walker;
  walker.class_id = 0;
  walker.motion_kind = MotionKind::Linear;
  walker.speed_px_per_s = 20.0;
  walker.arc_rate = 0.05;
  walker.size_w = 30.0;
  walker.size_h = 60.0;

  ClassProfile swimmer;
  swimmer.class_id = 1;
  swimmer.motion_kind = MotionKind::Sinusoidal;
  swimmer.speed_px_per_s = 15.0;
  swimmer.arc_rate = 0.1;
  swimmer.size_w = 50.0;
  swimmer.size_h = 35.0;
  swimmer.amplitude_px = 30.0;
  swimmer.period_s = 4.0;

  ClassProfile wanderer;
  wanderer.class_id = 2;
  wanderer.motion_kind = MotionKind::RandomWalk;
  wanderer.speed_px_per_s = 25.0;
  wanderer.arc_rate = 0.02;
  wanderer.size_w = 40.0;
  wanderer.size_h = 40.0;
  wanderer.turn_sigma = 1.0;
  return {walker, swimmer, wanderer};
}

RunConfig preset_config(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  c.scene.profiles = desk_profiles();
  c.scene.noise.semantic_sigma = 0.1;
  c.scene.noise.appearance_sigma = 0.1;
  c.scene.noise.box_jitter = 0.05;
  c.scene.noise.score_sigma = 0.05;
  c.scene.noise.drop_prob = 0.05;
  c.scene.noise.fp_rate = 0.5;
  if (preset == "desk") return c;
  if (preset == "paper") {
    c.model.stog.descriptor_dim = 256;
    c.model.stog.num_layers = 4;
    c.model.stog.num_heads = 4;
    c.model.stog.refine_widths = {512, 512, 256};
    c.model.sinkhorn_iters = 100;
    c.tracker.match_score_thr = 0.2;
    c.tracker.memo_length_s = 10.0;
    return c;
  }
  throw Error("unknown preset '" + preset + "' (expected desk or paper)");
}

namespace {

bool to_bool(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) {
    const auto i = v.get<long>();
    if (i == 0 || i == 1) return i == 1;
  }
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "on" || s == "true" || s == "yes") return true;
    if (s == "off" || s == "false" || s == "no") return false;
  }
  throw Error("expected a boolean (true/false/on/off), got " + v.dump());
}

double to_double(const json& v) {
  if (!v.is_number()) throw Error("expected a number, got " + v.dump());
  return v.get<double>();
}

std::size_t to_count(const json& v) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw Error("expected a non-negative integer, got " + v.dump());
  }
  return v.get<std::size_t>();
}

std::uint64_t to_seed(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw Error("expected a non-negative integer, got " + v.dump());
}

std::string to_string(const json& v) {
  if (!v.is_string()) throw Error("expected a string, got " + v.dump());
  return v.get<std::string>();
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

#define CT_DOUBLE(key, field)                                          \
  Key {                                                                \
    key, [](RunConfig& c, const json& v) { c.field = to_double(v); }, \
        [](const RunConfig& c) { return json(c.field); }               \
  }
#define CT_COUNT(key, field)                                          \
  Key {                                                               \
    key, [](RunConfig& c, const json& v) { c.field = to_count(v); }, \
        [](const RunConfig& c) { return json(c.field); }              \
  }
#define CT_BOOL(key, field)                                          \
  Key {                                                              \
    key, [](RunConfig& c, const json& v) { c.field = to_bool(v); }, \
        [](const RunConfig& c) { return json(c.field); }             \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      Key{"preset", [](RunConfig& c, const json& v) { c.preset = to_string(v); },
          [](const RunConfig& c) { return json(c.preset); }},
      Key{"seed",
          [](RunConfig& c, const json& v) {
            c.seed = to_seed(v);
          },
          [](const RunConfig& c) { return json(c.seed); }},
      Key{"mode",
          [](RunConfig& c, const json& v) {
            const std::string m = to_string(v);
            if (m != "open" && m != "closed") throw Error("expected open or closed, got '" + m + "'");
            c.model.closed_set = m == "closed";
          },
          [](const RunConfig& c) { return json(c.model.closed_set ? "closed" : "open"); }},
      CT_BOOL("use_sem", model.cues.semantic),
      CT_BOOL("use_loc", model.cues.location),
      CT_BOOL("use_app", model.cues.appearance),
      // scene
      CT_COUNT("num_sequences", num_sequences),
      CT_DOUBLE("image_h", scene.image_h),
      CT_DOUBLE("image_w", scene.image_w),
      CT_DOUBLE("fps", scene.fps),
      CT_DOUBLE("duration_s", scene.duration_s),
      CT_COUNT("objects_per_class", scene.objects_per_class),
      CT_COUNT("semantic_dim", scene.semantic_dim),
      CT_COUNT("appearance_dim", scene.appearance_dim),
      CT_DOUBLE("semantic_sigma", scene.noise.semantic_sigma),
      CT_DOUBLE("appearance_sigma", scene.noise.appearance_sigma),
      CT_DOUBLE("box_jitter", scene.noise.box_jitter),
      CT_DOUBLE("score_sigma", scene.noise.score_sigma),
      CT_DOUBLE("drop_prob", scene.noise.drop_prob),
      CT_DOUBLE("fp_rate", scene.noise.fp_rate),
      CT_DOUBLE("part_rate", scene.noise.part_rate),
      CT_BOOL("lookalike", scene.lookalike),
      CT_DOUBLE("lookalike_spread", scene.lookalike_spread),
      Key{"prototype_seed",
          [](RunConfig& c, const json& v) {
            c.scene.prototype_seed = to_seed(v);
          },
          [](const RunConfig& c) { return json(c.scene.prototype_seed); }},
      Key{"profiles",
          [](RunConfig& c, const json& v) {
            if (!v.is_array()) throw Error("expected an array of class profiles");
            c.scene.profiles.clear();
            for (const json& p : v) c.scene.profiles.push_back(profile_from_json(p));
          },
          [](const RunConfig& c) {
            json out = json::array();
            for (const ClassProfile& p : c.scene.profiles) out.push_back(profile_to_json(p));
            return out;
          }},
      Key{"reentries",
          [](RunConfig& c, const json& v) {
            if (!v.is_array()) throw Error("expected an array of {object, exit_s, absence_s}");
            c.scene.reentries.clear();
            for (const json& r : v) {
              c.scene.reentries.push_back({r.at("object").get<long>(), r.at("exit_s").get<double>(),
                                           r.at("absence_s").get<double>()});
            }
          },
          [](const RunConfig& c) {
            json out = json::array();
            for (const Reentry& r : c.scene.reentries) {
              out.push_back({{"object", r.object}, {"exit_s", r.exit_s}, {"absence_s", r.absence_s}});
            }
            return out;
          }},
      // training
      CT_COUNT("epochs", train.epochs),
      CT_COUNT("batch_pairs", train.batch_pairs),
      CT_DOUBLE("learning_rate", train.learning_rate),
      CT_DOUBLE("weight_decay", train.weight_decay),
      CT_DOUBLE("max_interval_s", train.max_interval_s),
      CT_DOUBLE("iou_match_thr", train.iou_match_thr),
      CT_COUNT("pairs_per_sequence", train.pairs_per_sequence),
      CT_BOOL("detection_aware", train.detection_aware),
      // tracker
      CT_DOUBLE("match_score_thr", tracker.match_score_thr),
      CT_DOUBLE("memo_length_s", tracker.memo_length_s),
      CT_COUNT("num_classes", tracker.num_classes),
      // model
      CT_COUNT("sinkhorn_iters", model.sinkhorn_iters),
      CT_COUNT("descriptor_dim", model.stog.descriptor_dim),
      CT_COUNT("num_layers", model.stog.num_layers),
      CT_COUNT("num_heads", model.stog.num_heads),
      Key{"refine_widths",
          [](RunConfig& c, const json& v) {
            if (!v.is_array()) throw Error("expected an array of widths");
            std::vector<std::size_t> w;
            for (const json& x : v) w.push_back(to_count(x));
            c.model.stog.refine_widths = std::move(w);
          },
          [](const RunConfig& c) { return json(c.model.stog.refine_widths); }},
      CT_COUNT("head_hidden", model.head_hidden),
      CT_COUNT("head_layers", model.head_layers),
      CT_BOOL("group_norm", model.group_norm),
      CT_BOOL("temporal_encoding", model.temporal_encoding),
      CT_DOUBLE("bin_score_init", model.bin_score_init),
  };
  return keys;
}

#undef CT_DOUBLE
#undef CT_COUNT
#undef CT_BOOL

const Key& find_key(const std::string& name) {
  for (const Key& k : key_table()) {
    if (k.name == name) return k;
  }
  throw Error("unknown key '" + name + "'");
}

void apply(RunConfig& c, const std::string& name, const json& value) {
  const Key& k = find_key(name);
  try {
    k.set(c, value);
  } catch (const Error& e) {
    throw Error("key '" + name + "': " + e.what());
  } catch (const json::exception& e) {
    throw Error("key '" + name + "': " + e.what());
  }
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : key_table()) out.push_back(k.name);
  return out;
}

RunConfig config_from_json(const json& file_values, const std::map<std::string, json>& overrides) {
  if (!file_values.is_null() && !file_values.is_object()) {
    throw Error("config file must hold a JSON object");
  }
  const json file = file_values.is_null() ? json::object() : file_values;
  for (const auto& [name, value] : file.items()) find_key(name);
  for (const auto& [name, value] : overrides) find_key(name);

  std::string preset = "desk";
  if (const auto it = overrides.find("preset"); it != overrides.end()) {
    RunConfig probe;
    apply(probe, "preset", it->second);
    preset = probe.preset;
  } else if (file.contains("preset")) {
    RunConfig probe;
    apply(probe, "preset", file.at("preset"));
    preset = probe.preset;
  }
  RunConfig cfg = preset_config(preset);
  const RunConfig forced = cfg;
  for (const auto& [name, value] : file.items()) apply(cfg, name, value);
  for (const auto& [name, value] : overrides) apply(cfg, name, value);
  cfg.preset = preset;

  if (preset == "paper") {
    for (const char* name : {"descriptor_dim", "num_layers", "num_heads", "refine_widths",
                             "sinkhorn_iters", "match_score_thr", "memo_length_s"}) {
      const Key& k = find_key(name);
      if (k.get(cfg) != k.get(forced)) {
        throw Error("key '" + std::string(name) + "' = " + k.get(cfg).dump() +
                    " conflicts with preset paper, which fixes it to " + k.get(forced).dump());
      }
    }
  }
  cfg.materialize();
  return cfg;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::map<std::string, std::string>& overrides) {
  json file = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error("cannot open config " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        file = json::parse(text);
      } catch (const json::exception& e) {
        throw Error("config " + path->string() + ": " + e.what());
      }
    }
  }
  std::map<std::string, json> parsed;
  for (const auto& [name, text] : overrides) {
    json v = json::parse(text, nullptr, false);
    parsed[name] = v.is_discarded() ? json(text) : v;
  }
  return config_from_json(file, parsed);
}

json config_to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const Key& k : key_table()) out[k.name] = k.get(cfg);
  return out;
}

}  // namespace cuetrack
