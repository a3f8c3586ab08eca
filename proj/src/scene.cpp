#include "aemot/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace aemot {
namespace {

constexpr double kPi = std::numbers::pi;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Eigen::Matrix2d rotation(double a) {
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

int nearest_pixel(double v) { return static_cast<int>(std::floor(v + 0.5)); }

double end_time(const ObjectSpec& o, double duration) {
  return o.end < 0.0 ? duration : std::min(o.end, duration);
}

}  // namespace

BlobState ObjectSpec::state_at(double t) const {
  BlobState s = initial;
  // Position and velocity from the waypoint polyline.
  if (waypoints.empty()) {
    s.p = initial.p + initial.v * (t - start);
    s.v = initial.v;
  } else {
    double t0 = start;
    Eigen::Vector2d p0 = initial.p;
    Eigen::Vector2d vel = Eigen::Vector2d::Zero();
    bool placed = false;
    for (const auto& w : waypoints) {
      vel = (w.p - p0) / (w.t - t0);
      if (t <= w.t) {
        s.p = p0 + vel * (t - t0);
        placed = true;
        break;
      }
      t0 = w.t;
      p0 = w.p;
    }
    if (!placed) s.p = p0 + vel * (t - t0);
    s.v = vel;
  }
  if (align_to_heading) {
    const double speed = s.v.norm();
    const double heading = speed > 1e-9 ? std::atan2(s.v.y(), s.v.x()) : initial.theta;
    s.theta = wrap_half_turn(heading);
    s.q = 0.0;
    s.delta = rotation(heading) * initial.delta;
  } else {
    s.theta = wrap_half_turn(initial.theta + initial.q * (t - start));
  }
  return s;
}

bool ObjectSpec::active_at(double t, double scene_duration) const {
  return t >= start && t <= end_time(*this, scene_duration);
}

void SceneConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("scene." + field + ": " + why);
  };
  if (geometry.width <= 0 || geometry.height <= 0) fail("geometry", "width/height must be > 0");
  if (geometry.width > 65535 || geometry.height > 65535) fail("geometry", "exceeds 65535");
  if (!(duration > 0.0)) fail("duration", "must be > 0");
  if (!(noise_rate >= 0.0)) fail("noise_rate", "must be >= 0");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    const std::string f = "objects[" + std::to_string(i) + "]";
    if (o.label == 0) fail(f + ".label", "must be >= 1 (0 is background)");
    if (!(o.rate >= 0.0)) fail(f + ".rate", "must be >= 0");
    if (!(o.initial.lambda.x() > 0.0) || !(o.initial.lambda.y() > 0.0)) {
      fail(f + ".lambda", "components must be > 0");
    }
    double prev = o.start;
    for (const auto& w : o.waypoints) {
      if (!(w.t > prev)) fail(f + ".waypoints", "times must be strictly increasing after start");
      prev = w.t;
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (objects[j].label == o.label) fail(f + ".label", "duplicate label");
    }
  }
  for (std::size_t i = 0; i < flicker.size(); ++i) {
    const auto& r = flicker[i];
    const std::string f = "flicker[" + std::to_string(i) + "]";
    if (!(r.rate >= 0.0)) fail(f + ".rate", "must be >= 0");
    if (!(r.width > 0.0) || !(r.height > 0.0)) fail(f + ".size", "width/height must be > 0");
  }
}

std::vector<LabeledEvent> generate_blob_events(const ObjectSpec& object,
                                               const SensorGeometry& geometry,
                                               double duration, std::uint64_t seed) {
  std::vector<LabeledEvent> out;
  if (!(object.rate > 0.0)) return out;
  auto rng = make_rng(seed, 0);
  std::exponential_distribution<double> gap(object.rate);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const double t_end = end_time(object, duration);
  out.reserve(static_cast<std::size_t>(object.rate * (t_end - object.start) * 1.05) + 16);
  double t = object.start;
  while (true) {
    t += gap(rng);
    if (t >= t_end) break;
    const int polarity = coin(rng) ? 1 : -1;
    const double z1 = normal(rng);
    const double z2 = normal(rng);
    const BlobState s = object.state_at(t);
    const Eigen::Vector2d mean = s.p + static_cast<double>(polarity) * s.delta;
    const Eigen::Vector2d xi = mean + shape_matrix(s.theta, s.lambda) * Eigen::Vector2d(z1, z2);
    const int x = nearest_pixel(xi.x());
    const int y = nearest_pixel(xi.y());
    if (!geometry.contains(x, y)) continue;
    out.push_back({Event{static_cast<TimeUs>(std::floor(t * 1e6)), x, y, polarity},
                   object.label});
  }
  return out;
}

std::vector<LabeledEvent> generate_uniform_noise(const SensorGeometry& geometry, double rate,
                                                 double duration, std::uint64_t seed) {
  std::vector<LabeledEvent> out;
  if (!(rate > 0.0)) return out;
  auto rng = make_rng(seed, 0);
  std::exponential_distribution<double> gap(rate);
  std::uniform_int_distribution<int> ux(0, geometry.width - 1);
  std::uniform_int_distribution<int> uy(0, geometry.height - 1);
  std::bernoulli_distribution coin(0.5);
  out.reserve(static_cast<std::size_t>(rate * duration * 1.05) + 16);
  double t = 0.0;
  while (true) {
    t += gap(rng);
    if (t >= duration) break;
    const int polarity = coin(rng) ? 1 : -1;
    const int x = ux(rng);
    const int y = uy(rng);
    out.push_back({Event{static_cast<TimeUs>(std::floor(t * 1e6)), x, y, polarity}, 0});
  }
  return out;
}

std::vector<LabeledEvent> generate_flicker_events(const FlickerRegion& region,
                                                  const SensorGeometry& geometry,
                                                  double duration, std::uint64_t seed) {
  std::vector<LabeledEvent> out;
  if (!(region.rate > 0.0)) return out;
  auto rng = make_rng(seed, 0);
  std::exponential_distribution<double> gap(region.rate);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double t = 0.0;
  while (true) {
    t += gap(rng);
    if (t >= duration) break;
    const int polarity = coin(rng) ? 1 : -1;
    const double sway = std::sin(2.0 * kPi * region.sway_frequency * t + region.sway_phase);
    const double fx = region.x + unit(rng) * region.width + region.sway_amplitude.x() * sway;
    const double fy = region.y + unit(rng) * region.height + region.sway_amplitude.y() * sway;
    const int x = nearest_pixel(fx);
    const int y = nearest_pixel(fy);
    if (!geometry.contains(x, y)) continue;
    out.push_back({Event{static_cast<TimeUs>(std::floor(t * 1e6)), x, y, polarity}, 0});
  }
  return out;
}

std::vector<GroundTruthRow> sample_ground_truth(const SceneConfig& config, TimeUs period_us) {
  std::vector<GroundTruthRow> rows;
  const TimeUs end = to_micros(config.duration);
  for (TimeUs t = 0; t <= end; t += period_us) {
    const double ts = to_seconds(t);
    for (const auto& o : config.objects) {
      if (!o.active_at(ts, config.duration)) continue;
      rows.push_back({t, o.label, o.state_at(ts)});
    }
  }
  return rows;
}

Scene generate_scene(const SceneConfig& config) {
  config.validate();
  struct Keyed {
    LabeledEvent e;
    std::uint32_t source;
    std::uint32_t index;
  };
  std::vector<Keyed> all;
  std::uint32_t source = 0;
  auto append = [&](std::vector<LabeledEvent>&& events) {
    std::uint32_t i = 0;
    all.reserve(all.size() + events.size());
    for (const auto& e : events) all.push_back({e, source, i++});
    ++source;
  };
  // Each source draws from its own seeded stream so objects are independent of each other.
  std::uint64_t stream = 0;
  auto sub_seed = [&]() {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(++stream)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  };
  for (const auto& o : config.objects) {
    append(generate_blob_events(o, config.geometry, config.duration, sub_seed()));
  }
  append(generate_uniform_noise(config.geometry, config.noise_rate, config.duration, sub_seed()));
  for (const auto& r : config.flicker) {
    append(generate_flicker_events(r, config.geometry, config.duration, sub_seed()));
  }
  std::sort(all.begin(), all.end(), [](const Keyed& a, const Keyed& b) {
    if (a.e.event.t != b.e.event.t) return a.e.event.t < b.e.event.t;
    if (a.e.label != b.e.label) return a.e.label < b.e.label;
    if (a.source != b.source) return a.source < b.source;
    return a.index < b.index;
  });
  Scene scene;
  scene.stream.geometry = config.geometry;
  scene.stream.labelled = true;
  scene.stream.events.reserve(all.size());
  for (const auto& k : all) scene.stream.events.push_back(k.e);
  scene.ground_truth = sample_ground_truth(config);
  return scene;
}

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruthRow>& rows) {
  out << "t_us,label,px,py,vx,vy,theta,q,l1,l2,dx,dy\n";
  out.precision(10);
  for (const auto& r : rows) {
    const auto& s = r.state;
    out << r.t << ',' << r.label << ',' << s.p.x() << ',' << s.p.y() << ',' << s.v.x() << ','
        << s.v.y() << ',' << s.theta << ',' << s.q << ',' << s.lambda.x() << ','
        << s.lambda.y() << ',' << s.delta.x() << ',' << s.delta.y() << '\n';
  }
}

void write_ground_truth_csv(const std::filesystem::path& path,
                            const std::vector<GroundTruthRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ground truth: " + path.string());
  write_ground_truth_csv(out, rows);
}

std::vector<GroundTruthRow> read_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ground truth: " + path.string());
  std::vector<GroundTruthRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == 't' || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": malformed ground-truth field '" + cell + "'");
      }
    }
    if (v.size() != 12) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 12 ground-truth fields");
    }
    GroundTruthRow r;
    r.t = static_cast<TimeUs>(v[0]);
    r.label = static_cast<std::uint32_t>(v[1]);
    r.state.p = {v[2], v[3]};
    r.state.v = {v[4], v[5]};
    r.state.theta = v[6];
    r.state.q = v[7];
    r.state.lambda = {v[8], v[9]};
    r.state.delta = {v[10], v[11]};
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Eigen::Vector2d vec2(const nlohmann::json& j, const char* key, Eigen::Vector2d fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) {
    throw std::invalid_argument(std::string("scene: '") + key + "' must be a 2-element array");
  }
  return {a[0].get<double>(), a[1].get<double>()};
}

nlohmann::json to_array(const Eigen::Vector2d& v) { return nlohmann::json::array({v.x(), v.y()}); }

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) ==
        known.end()) {
      throw std::invalid_argument("scene: unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

SceneConfig scene_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"width", "height", "duration", "seed", "noise_rate", "objects", "flicker"},
                 "scene");
  SceneConfig c;
  c.geometry.width = j.value("width", c.geometry.width);
  c.geometry.height = j.value("height", c.geometry.height);
  c.duration = j.value("duration", c.duration);
  c.seed = j.value("seed", c.seed);
  c.noise_rate = j.value("noise_rate", c.noise_rate);
  std::uint32_t next_label = 1;
  for (const auto& o : j.value("objects", nlohmann::json::array())) {
    reject_unknown(o,
                   {"label", "p", "v", "theta", "q", "lambda", "delta", "rate", "start", "end",
                    "align_to_heading", "waypoints"},
                   "object");
    ObjectSpec s;
    s.label = o.value("label", next_label);
    next_label = s.label + 1;
    s.initial.p = vec2(o, "p", s.initial.p);
    s.initial.v = vec2(o, "v", s.initial.v);
    s.initial.theta = o.value("theta", 0.0);
    s.initial.q = o.value("q", 0.0);
    s.initial.lambda = vec2(o, "lambda", {3.0, 1.5});
    s.initial.delta = vec2(o, "delta", {0.0, 0.0});
    s.rate = o.value("rate", s.rate);
    s.start = o.value("start", 0.0);
    s.end = o.value("end", -1.0);
    s.align_to_heading = o.value("align_to_heading", false);
    for (const auto& w : o.value("waypoints", nlohmann::json::array())) {
      if (!w.is_array() || w.size() != 3) {
        throw std::invalid_argument("scene: waypoint must be [t, x, y]");
      }
      s.waypoints.push_back({w[0].get<double>(), {w[1].get<double>(), w[2].get<double>()}});
    }
    c.objects.push_back(std::move(s));
  }
  for (const auto& r : j.value("flicker", nlohmann::json::array())) {
    reject_unknown(r, {"x", "y", "width", "height", "rate", "sway_amplitude", "sway_frequency",
                       "sway_phase"},
                   "flicker");
    FlickerRegion f;
    f.x = r.value("x", f.x);
    f.y = r.value("y", f.y);
    f.width = r.value("width", f.width);
    f.height = r.value("height", f.height);
    f.rate = r.value("rate", f.rate);
    f.sway_amplitude = vec2(r, "sway_amplitude", f.sway_amplitude);
    f.sway_frequency = r.value("sway_frequency", f.sway_frequency);
    f.sway_phase = r.value("sway_phase", f.sway_phase);
    c.flicker.push_back(f);
  }
  c.validate();
  return c;
}

nlohmann::json scene_to_json(const SceneConfig& c) {
  nlohmann::json j;
  j["width"] = c.geometry.width;
  j["height"] = c.geometry.height;
  j["duration"] = c.duration;
  j["seed"] = c.seed;
  j["noise_rate"] = c.noise_rate;
  j["objects"] = nlohmann::json::array();
  for (const auto& o : c.objects) {
    nlohmann::json jo;
    jo["label"] = o.label;
    jo["p"] = to_array(o.initial.p);
    jo["v"] = to_array(o.initial.v);
    jo["theta"] = o.initial.theta;
    jo["q"] = o.initial.q;
    jo["lambda"] = to_array(o.initial.lambda);
    jo["delta"] = to_array(o.initial.delta);
    jo["rate"] = o.rate;
    jo["start"] = o.start;
    jo["end"] = o.end;
    jo["align_to_heading"] = o.align_to_heading;
    jo["waypoints"] = nlohmann::json::array();
    for (const auto& w : o.waypoints) jo["waypoints"].push_back({w.t, w.p.x(), w.p.y()});
    j["objects"].push_back(jo);
  }
  j["flicker"] = nlohmann::json::array();
  for (const auto& f : c.flicker) {
    j["flicker"].push_back({{"x", f.x},
                            {"y", f.y},
                            {"width", f.width},
                            {"height", f.height},
                            {"rate", f.rate},
                            {"sway_amplitude", to_array(f.sway_amplitude)},
                            {"sway_frequency", f.sway_frequency},
                            {"sway_phase", f.sway_phase}});
  }
  return j;
}

SceneConfig load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return scene_from_json(j);
}

// ---------------------------------------------------------------------------
// Presets

namespace scenarios {

SceneConfig single_blob(std::uint64_t seed, double speed, double heading_deg,
                        Eigen::Vector2d lambda, double rate, double duration) {
  SceneConfig c;
  c.seed = seed;
  c.duration = duration;
  const double h = heading_deg * kPi / 180.0;
  const Eigen::Vector2d dir(std::cos(h), std::sin(h));
  const Eigen::Vector2d centre(c.geometry.width / 2.0, c.geometry.height / 2.0);
  ObjectSpec o;
  o.label = 1;
  o.rate = rate;
  o.align_to_heading = true;
  o.initial.theta = h;
  o.initial.lambda = lambda;
  o.initial.delta = {1.5, 0.0};
  o.initial.v = speed * dir;
  o.initial.p = centre - dir * (speed * duration / 2.0);
  c.objects.push_back(o);
  return c;
}

SceneConfig crossing_pair(std::uint64_t seed, double speed, double cross_time, double rate) {
  SceneConfig c;
  c.seed = seed;
  c.duration = cross_time + 0.15;
  const Eigen::Vector2d centre(c.geometry.width / 2.0, c.geometry.height / 2.0);
  for (int k = 0; k < 2; ++k) {
    ObjectSpec o;
    o.label = static_cast<std::uint32_t>(k + 1);
    o.rate = rate;
    o.align_to_heading = true;
    const Eigen::Vector2d dir = k == 0 ? Eigen::Vector2d(1.0, 0.0) : Eigen::Vector2d(0.0, 1.0);
    o.initial.theta = std::atan2(dir.y(), dir.x());
    o.initial.lambda = {3.0, 1.5};
    o.initial.delta = {1.5, 0.0};
    o.initial.v = speed * dir;
    o.initial.p = centre - dir * (speed * cross_time);
    c.objects.push_back(o);
  }
  return c;
}

SceneConfig noise_only(std::uint64_t seed, double rate, double duration, SensorGeometry geometry) {
  SceneConfig c;
  c.seed = seed;
  c.geometry = geometry;
  c.duration = duration;
  c.noise_rate = rate;
  return c;
}

SceneConfig swarm(std::uint64_t seed, const SwarmOptions& opt) {
  SceneConfig c;
  c.seed = seed;
  c.geometry = opt.geometry;
  c.duration = opt.duration;
  c.noise_rate = opt.noise_rate;
  auto rng = make_rng(seed, 0x5157u);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double w = c.geometry.width;
  const double h = c.geometry.height;
  // Gentle turns: each waypoint changes the velocity by at most speed * kMaxTurn, which a
  // constant-velocity filter with modest velocity noise can follow.
  constexpr double kStep = 0.02;       // s between waypoints
  constexpr double kMargin = 160.0;    // px from the border where steering starts
  constexpr double kMaxTurn = 0.08;    // rad per step while steering
  constexpr double kWander = 0.04;     // rad per step heading noise

  for (int i = 0; i < opt.blobs; ++i) {
    ObjectSpec o;
    o.label = static_cast<std::uint32_t>(i + 1);
    o.rate = uniform(opt.min_rate, opt.max_rate);
    o.align_to_heading = true;
    o.initial.lambda = {uniform(2.5, 3.5), uniform(1.2, 1.8)};
    const double offset = uniform(1.0, 2.0);
    o.initial.delta = {unit(rng) < 0.5 ? offset : -offset, 0.0};
    const double speed = uniform(opt.min_speed, opt.max_speed);
    Eigen::Vector2d pos(uniform(kMargin, w - kMargin), uniform(kMargin, h - kMargin));
    double heading = uniform(-kPi, kPi);
    o.initial.p = pos;
    o.initial.theta = heading;
    o.initial.v = speed * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    for (double t = kStep; t < c.duration + kStep; t += kStep) {
      double turn = kWander * normal(rng);
      const bool near_border = pos.x() < kMargin || pos.x() > w - kMargin ||
                               pos.y() < kMargin || pos.y() > h - kMargin;
      if (near_border) {
        const Eigen::Vector2d to_centre = Eigen::Vector2d(w / 2, h / 2) - pos;
        double want = std::atan2(to_centre.y(), to_centre.x()) - heading;
        want = std::remainder(want, 2.0 * kPi);
        turn = std::clamp(want, -kMaxTurn, kMaxTurn);
      }
      heading += turn;
      Eigen::Vector2d next = pos + speed * kStep * Eigen::Vector2d(std::cos(heading), std::sin(heading));
      if (next.x() < 10 || next.x() > w - 10) {
        heading = kPi - heading;
        next = pos + speed * kStep * Eigen::Vector2d(std::cos(heading), std::sin(heading));
      }
      if (next.y() < 10 || next.y() > h - 10) {
        heading = -heading;
        next = pos + speed * kStep * Eigen::Vector2d(std::cos(heading), std::sin(heading));
      }
      pos = next;
      o.waypoints.push_back({t, pos});
    }
    c.objects.push_back(std::move(o));
  }

  for (int i = 0; i < opt.clutter_regions; ++i) {
    FlickerRegion r;
    r.width = uniform(8.0, 24.0);
    r.height = uniform(8.0, 24.0);
    r.x = uniform(20.0, w - 20.0 - r.width);
    r.y = uniform(h - 140.0, h - 20.0 - r.height);
    r.rate = uniform(4000.0, 15000.0);
    r.sway_amplitude = {uniform(2.0, 8.0), uniform(0.0, 3.0)};
    r.sway_frequency = uniform(0.5, 2.5);
    r.sway_phase = uniform(0.0, 2.0 * kPi);
    c.flicker.push_back(r);
  }
  return c;
}

}  // namespace scenarios

}  // namespace aemot
