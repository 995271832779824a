// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cuetrack/array.hpp"
#include "cuetrack/geometry.hpp"
#include "cuetrack/rng.hpp"

namespace cuetrack {

const char* motion_kind_name(MotionKind kind) {
  switch (kind) {
    case MotionKind::Linear:
      return "linear";
    case MotionKind::Sinusoidal:
      return "sinusoidal";
    case MotionKind::RandomWalk:
      return "random_walk";
  }
  return "?";
}

MotionKind parse_motion_kind(const std::string& name) {
  if (name == "linear") return MotionKind::Linear;
  if (name == "sinusoidal") return MotionKind::Sinusoidal;
  if (name == "random_walk") return MotionKind::RandomWalk;
  throw Error("unknown motion kind '" + name + "' (expected linear, sinusoidal or random_walk)");
}

void SceneConfig::validate() const {
  if (!(image_h > 0.0 && image_w > 0.0)) throw Error("scene: image size must be positive");
  if (!(fps > 0.0)) throw Error("scene: fps must be positive");
  if (!(duration_s >= 0.0)) throw Error("scene: duration_s must be non-negative");
  if (profiles.empty()) throw Error("scene: at least one class profile is required");
  if (objects_per_class == 0) throw Error("scene: objects_per_class must be positive");
  if (semantic_dim == 0 || appearance_dim == 0) throw Error("scene: cue dimensions must be positive");
  for (const ClassProfile& p : profiles) {
    const std::string who = "scene: class " + std::to_string(p.class_id);
    if (!(p.speed_px_per_s >= 0.0) || !(p.arc_rate >= 0.0)) {
      throw Error(who + ": speed and arc_rate must be non-negative");
    }
    if (!(p.size_w > 0.0 && p.size_h > 0.0) || p.size_w >= image_w || p.size_h >= image_h) {
      throw Error(who + ": box size must be positive and smaller than the image");
    }
    if (!(p.period_s > 0.0) || !(p.amplitude_px >= 0.0) || !(p.turn_sigma >= 0.0)) {
      throw Error(who + ": invalid motion parameters");
    }
    if (!p.semantic_prototype.empty()) {
      if (p.semantic_prototype.size() != semantic_dim) {
        throw Error(who + ": prototype length differs from semantic_dim");
      }
      double norm = 0.0;
      for (double v : p.semantic_prototype) norm += v * v;
      if (std::abs(std::sqrt(norm) - 1.0) > 1e-9) throw Error(who + ": prototype must have unit norm");
    }
  }
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  const NoiseConfig& n = noise;
  if (!prob(n.drop_prob)) throw Error("scene: drop probability must lie in [0, 1]");
  if (!prob(n.part_rate)) throw Error("scene: part rate must lie in [0, 1]");
  if (!(n.semantic_sigma >= 0.0 && n.appearance_sigma >= 0.0 && n.box_jitter >= 0.0 &&
        n.score_sigma >= 0.0 && n.fp_rate >= 0.0)) {
    throw Error("scene: noise parameters must be non-negative");
  }
  if (!(lookalike_spread >= 0.0)) throw Error("scene: lookalike_spread must be non-negative");
  const long objects = static_cast<long>(profiles.size() * objects_per_class);
  for (const Reentry& r : reentries) {
    if (r.object < 0 || r.object >= objects) {
      throw Error("scene: re-entry names object " + std::to_string(r.object) + " of " +
                  std::to_string(objects));
    }
    if (!(r.absence_s >= 0.0)) throw Error("scene: re-entry absence must be non-negative");
  }
}

std::size_t SceneConfig::frame_count() const {
  return static_cast<std::size_t>(std::floor(duration_s * fps + 1e-9)) + 1;
}

namespace {

std::vector<double> gaussian_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = g(rng);
  return v;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void normalize(std::vector<double>& v) {
  const double n = norm(v);
  if (n == 0.0) {
    v.assign(v.size(), 0.0);
    v[0] = 1.0;
    return;
  }
  for (double& x : v) x /= n;
}

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::vector<double> v = gaussian_vector(dim, rng);
  normalize(v);
  return v;
}

std::vector<double> noisy(const std::vector<double>& base, double sigma, std::mt19937_64& rng) {
  std::vector<double> out = base;
  if (sigma > 0.0) {
    std::normal_distribution<double> g(0.0, sigma);
    for (double& x : out) x += g(rng);
  }
  return out;
}

Box clip_box(Box b, double image_h, double image_w) {
  b.x_min = std::clamp(b.x_min, 0.0, image_w);
  b.x_max = std::clamp(b.x_max, 0.0, image_w);
  b.y_min = std::clamp(b.y_min, 0.0, image_h);
  b.y_max = std::clamp(b.y_max, 0.0, image_h);
  return b;
}

// Keeps x inside [lo, hi] by mirroring, flipping the velocity component.
void reflect(double& x, double& v, double lo, double hi) {
  if (hi <= lo) {
    x = 0.5 * (lo + hi);
    return;
  }
  for (int guard = 0; guard < 8 && (x < lo || x > hi); ++guard) {
    if (x < lo) {
      x = 2.0 * lo - x;
      v = -v;
    } else if (x > hi) {
      x = 2.0 * hi - x;
      v = -v;
    }
  }
  x = std::clamp(x, lo, hi);
}

struct ObjectState {
  long id = 0;
  const ClassProfile* profile = nullptr;
  std::vector<double> prototype;
  std::vector<double> identity;
  double cx = 0.0, cy = 0.0;  // carrier position
  double vx = 0.0, vy = 0.0;
  double phase = 0.0;
  double ratio = 1.0, ratio_lo = 1.0, ratio_hi = 1.0, ratio_dir = 1.0;
  double area = 1.0;

  double half_w() const { return 0.5 * std::sqrt(area * ratio); }
  double half_h() const { return 0.5 * std::sqrt(area / ratio); }
};

double swing(const ObjectState& o, double t) {
  if (o.profile->motion_kind != MotionKind::Sinusoidal) return 0.0;
  return o.profile->amplitude_px *
         std::sin(2.0 * std::numbers::pi * t / o.profile->period_s + o.phase);
}

Box object_box(const ObjectState& o, double t, const SceneConfig& cfg) {
  double x = o.cx, y = o.cy;
  const double s = swing(o, t);
  if (s != 0.0) {
    const double speed = std::hypot(o.vx, o.vy);
    // Perpendicular to the carrier heading; vertical when at rest.
    const double nx = speed > 0.0 ? -o.vy / speed : 0.0;
    const double ny = speed > 0.0 ? o.vx / speed : 1.0;
    x += s * nx;
    y += s * ny;
  }
  const double hw = o.half_w(), hh = o.half_h();
  x = std::clamp(x, hw, cfg.image_w - hw);
  y = std::clamp(y, hh, cfg.image_h - hh);
  return clip_box({x - hw, y - hh, x + hw, y + hh}, cfg.image_h, cfg.image_w);
}

void advance(ObjectState& o, double dt, const SceneConfig& cfg, std::mt19937_64& rng) {
  const ClassProfile& p = *o.profile;
  if (p.motion_kind == MotionKind::RandomWalk && p.turn_sigma > 0.0) {
    std::normal_distribution<double> turn(0.0, p.turn_sigma * std::sqrt(dt));
    const double heading = std::atan2(o.vy, o.vx) + turn(rng);
    o.vx = p.speed_px_per_s * std::cos(heading);
    o.vy = p.speed_px_per_s * std::sin(heading);
  }
  o.cx += o.vx * dt;
  o.cy += o.vy * dt;
  const double margin = p.motion_kind == MotionKind::Sinusoidal ? p.amplitude_px : 0.0;
  reflect(o.cx, o.vx, o.half_w() + margin, cfg.image_w - o.half_w() - margin);
  reflect(o.cy, o.vy, o.half_h() + margin, cfg.image_h - o.half_h() - margin);

  if (p.arc_rate > 0.0) {
    o.ratio += o.ratio_dir * p.arc_rate * dt;
    for (int guard = 0; guard < 64 && (o.ratio > o.ratio_hi || o.ratio < o.ratio_lo); ++guard) {
      if (o.ratio > o.ratio_hi) {
        o.ratio = 2.0 * o.ratio_hi - o.ratio;
        o.ratio_dir = -1.0;
      } else {
        o.ratio = 2.0 * o.ratio_lo - o.ratio;
        o.ratio_dir = 1.0;
      }
    }
    o.ratio = std::clamp(o.ratio, o.ratio_lo, o.ratio_hi);
  }
}

bool visible(const SceneConfig& cfg, long object, double t) {
  for (const Reentry& r : cfg.reentries) {
    if (r.object == object && t >= r.exit_s && t < r.exit_s + r.absence_s) return false;
  }
  return true;
}

}  // namespace

std::vector<std::vector<double>> make_prototypes(std::size_t count, std::size_t dim,
                                                 std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "sim.prototypes"));
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<double> v = gaussian_vector(dim, rng);
    if (c < dim) {
      for (const auto& prev : out) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += v[k] * prev[k];
        for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * prev[k];
      }
    }
    normalize(v);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Detection> detect(const std::vector<Observation>& objects, const SceneConfig& cfg,
                              std::mt19937_64& rng) {
  const NoiseConfig& n = cfg.noise;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Detection> raw;
  for (const Observation& o : objects) {
    if (n.drop_prob > 0.0 && unit(rng) < n.drop_prob) continue;
    Detection d;
    d.box = o.gt.box;
    if (n.box_jitter > 0.0) {
      std::normal_distribution<double> jx(0.0, n.box_jitter * o.gt.box.width());
      std::normal_distribution<double> jy(0.0, n.box_jitter * o.gt.box.height());
      d.box.x_min += jx(rng);
      d.box.y_min += jy(rng);
      d.box.x_max += jx(rng);
      d.box.y_max += jy(rng);
      d.box = clip_box(d.box, cfg.image_h, cfg.image_w);
      if (d.box.x_max - d.box.x_min < 1.0) {
        const double c = std::clamp(d.box.center_x(), 0.5, cfg.image_w - 0.5);
        d.box.x_min = c - 0.5;
        d.box.x_max = c + 0.5;
      }
      if (d.box.y_max - d.box.y_min < 1.0) {
        const double c = std::clamp(d.box.center_y(), 0.5, cfg.image_h - 0.5);
        d.box.y_min = c - 0.5;
        d.box.y_max = c + 0.5;
      }
    }
    d.score = 1.0;
    if (n.score_sigma > 0.0) {
      std::normal_distribution<double> s(0.0, n.score_sigma);
      d.score = std::clamp(1.0 - std::abs(s(rng)), 0.01, 1.0);
    }
    d.semantic = o.semantic;
    d.appearance = o.appearance;
    d.class_id = o.gt.class_id;
    if (n.part_rate > 0.0 && unit(rng) < n.part_rate) {
      Detection part = d;
      const Box& g = o.gt.box;
      const double frac = 0.30 + 0.15 * unit(rng);
      const int side = static_cast<int>(unit(rng) * 4.0) % 4;
      part.box = g;
      if (side == 0) part.box.x_max = g.x_min + frac * g.width();
      if (side == 1) part.box.x_min = g.x_max - frac * g.width();
      if (side == 2) part.box.y_max = g.y_min + frac * g.height();
      if (side == 3) part.box.y_min = g.y_max - frac * g.height();
      part.score = d.score * (0.4 + 0.4 * unit(rng));
      part.appearance = noisy(o.appearance, n.appearance_sigma, rng);
      raw.push_back(std::move(d));
      raw.push_back(std::move(part));
      continue;
    }
    raw.push_back(std::move(d));
  }
  if (n.fp_rate > 0.0) {
    std::poisson_distribution<int> count(n.fp_rate);
    const int fps = count(rng);
    std::uniform_int_distribution<std::size_t> pick(0, cfg.profiles.size() - 1);
    const auto protos = make_prototypes(cfg.profiles.size(), cfg.semantic_dim, cfg.prototype_seed);
    for (int k = 0; k < fps; ++k) {
      const std::size_t c = pick(rng);
      const ClassProfile& p = cfg.profiles[c];
      const double w = p.size_w * (0.5 + unit(rng)), h = p.size_h * (0.5 + unit(rng));
      const double cx = unit(rng) * cfg.image_w, cy = unit(rng) * cfg.image_h;
      Detection d;
      d.box = clip_box({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}, cfg.image_h,
                       cfg.image_w);
      d.score = 0.05 + 0.45 * unit(rng);
      const std::vector<double>& proto =
          p.semantic_prototype.empty() ? protos[c] : p.semantic_prototype;
      d.semantic = noisy(proto, n.semantic_sigma, rng);
      d.appearance = random_unit(cfg.appearance_dim, rng);
      d.class_id = p.class_id;
      raw.push_back(std::move(d));
    }
  }
  std::vector<ScoredBox> scored;
  scored.reserve(raw.size());
  for (const Detection& d : raw) scored.push_back({d.box, d.score});
  std::vector<Detection> out;
  for (std::size_t i : class_agnostic_nms(scored, 0.5, 50)) out.push_back(raw[i]);
  return out;
}

std::vector<std::vector<Observation>> generate_observations(const SceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 world(derive_seed(cfg.seed, "sim.world"));
  std::mt19937_64 cues(derive_seed(cfg.seed, "sim.cues"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto protos = make_prototypes(cfg.profiles.size(), cfg.semantic_dim, cfg.prototype_seed);

  std::vector<ObjectState> objects;
  long next_id = 0;
  for (std::size_t c = 0; c < cfg.profiles.size(); ++c) {
    const ClassProfile& p = cfg.profiles[c];
    const std::vector<double> class_dir = random_unit(cfg.appearance_dim, world);
    for (std::size_t k = 0; k < cfg.objects_per_class; ++k) {
      ObjectState o;
      o.id = next_id++;
      o.profile = &p;
      o.prototype = p.semantic_prototype.empty() ? protos[c] : p.semantic_prototype;
      if (cfg.lookalike) {
        o.identity = class_dir;
        std::normal_distribution<double> g(0.0, cfg.lookalike_spread);
        for (double& x : o.identity) x += g(world);
        normalize(o.identity);
      } else {
        o.identity = random_unit(cfg.appearance_dim, world);
      }
      o.area = p.size_w * p.size_h;
      const double r0 = p.size_w / p.size_h;
      o.ratio_lo = 0.5 * r0;
      o.ratio_hi = 2.0 * r0;
      o.ratio = r0 * std::pow(2.0, 2.0 * unit(world) - 1.0);
      o.ratio_dir = unit(world) < 0.5 ? -1.0 : 1.0;
      const double heading = 2.0 * std::numbers::pi * unit(world);
      o.vx = p.speed_px_per_s * std::cos(heading);
      o.vy = p.speed_px_per_s * std::sin(heading);
      o.phase = 2.0 * std::numbers::pi * unit(world);
      const double margin = p.motion_kind == MotionKind::Sinusoidal ? p.amplitude_px : 0.0;
      const double lo_x = o.half_w() + margin, hi_x = cfg.image_w - o.half_w() - margin;
      const double lo_y = o.half_h() + margin, hi_y = cfg.image_h - o.half_h() - margin;
      o.cx = hi_x > lo_x ? lo_x + (hi_x - lo_x) * unit(world) : 0.5 * cfg.image_w;
      o.cy = hi_y > lo_y ? lo_y + (hi_y - lo_y) * unit(world) : 0.5 * cfg.image_h;
      objects.push_back(std::move(o));
    }
  }

  const std::size_t frames = cfg.frame_count();
  const double dt = 1.0 / cfg.fps;
  std::vector<std::vector<Observation>> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) * dt;
    if (f > 0) {
      for (ObjectState& o : objects) advance(o, dt, cfg, world);
    }
    for (const ObjectState& o : objects) {
      if (!visible(cfg, o.id, t)) continue;
      Observation obs;
      obs.gt = {o.id, object_box(o, t, cfg), o.profile->class_id};
      obs.semantic = noisy(o.prototype, cfg.noise.semantic_sigma, cues);
      obs.appearance = noisy(o.identity, cfg.noise.appearance_sigma, cues);
      out[f].push_back(std::move(obs));
    }
  }
  return out;
}

Sequence generate(const SceneConfig& cfg) {
  const auto observations = generate_observations(cfg);
  std::mt19937_64 det_rng(derive_seed(cfg.seed, "sim.detect"));
  Sequence seq;
  seq.reserve(observations.size());
  for (std::size_t f = 0; f < observations.size(); ++f) {
    FrameSample frame;
    frame.frame_id = static_cast<long>(f);
    frame.time_s = static_cast<double>(f) / cfg.fps;
    std::vector<GtObject> gt;
    for (const Observation& o : observations[f]) gt.push_back(o.gt);
    frame.gt = std::move(gt);
    frame.detections = detect(observations[f], cfg, det_rng);
    seq.push_back(std::move(frame));
  }
  return seq;
}

std::vector<NamedSequence> generate_dataset(const SceneConfig& cfg, std::size_t count,
                                            const std::string& prefix) {
  std::vector<NamedSequence> out;
  for (std::size_t i = 0; i < count; ++i) {
    SceneConfig c = cfg;
    c.seed = derive_seed(cfg.seed, prefix + "/" + std::to_string(i));
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu", prefix.c_str(), i);
    out.push_back({name, generate(c)});
  }
  return out;
}

nlohmann::json profile_to_json(const ClassProfile& p) {
  nlohmann::json j = {{"class_id", p.class_id},
                      {"motion", motion_kind_name(p.motion_kind)},
                      {"speed_px_per_s", p.speed_px_per_s},
                      {"arc_rate", p.arc_rate},
                      {"size_w", p.size_w},
                      {"size_h", p.size_h},
                      {"amplitude_px", p.amplitude_px},
                      {"period_s", p.period_s},
                      {"turn_sigma", p.turn_sigma}};
  if (!p.semantic_prototype.empty()) j["semantic_prototype"] = p.semantic_prototype;
  return j;
}

ClassProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("class profile must be a JSON object");
  ClassProfile p;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "class_id") p.class_id = value.get<int>();
      else if (key == "motion") p.motion_kind = parse_motion_kind(value.get<std::string>());
      else if (key == "speed_px_per_s") p.speed_px_per_s = value.get<double>();
      else if (key == "arc_rate") p.arc_rate = value.get<double>();
      else if (key == "size_w") p.size_w = value.get<double>();
      else if (key == "size_h") p.size_h = value.get<double>();
      else if (key == "amplitude_px") p.amplitude_px = value.get<double>();
      else if (key == "period_s") p.period_s = value.get<double>();
      else if (key == "turn_sigma") p.turn_sigma = value.get<double>();
      else if (key == "semantic_prototype") p.semantic_prototype = value.get<std::vector<double>>();
      else throw Error("class profile: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error("class profile: key '" + key + "': " + e.what());
    }
  }
  return p;
}

}  // namespace cuetrack
