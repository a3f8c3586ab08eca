#include "aemot/config.hpp"

#include <fstream>
#include <stdexcept>

namespace aemot {

using nlohmann::json;

void HarvestParams::validate() const {
  if (!(min_purity > 0.5 && min_purity <= 1.0)) {
    throw std::invalid_argument("harvest.min_purity must lie in (0.5, 1]");
  }
  if (!(max_position_error > 0.0)) {
    throw std::invalid_argument("harvest.max_position_error must be > 0");
  }
}

void RunConfig::validate() const {
  if (events.max_regression_us < 0) {
    throw std::invalid_argument("events.max_regression_us must be >= 0");
  }
  pipeline.validate();
  classifier.validate();
  harvest.validate();
  evaluation.validate();
  if (render.frame_period_us <= 0) throw std::invalid_argument("render.frame_period_us must be > 0");
  if (!(render.ellipse_sigma > 0.0)) throw std::invalid_argument("render.ellipse_sigma must be > 0");
}

json config_to_json(const RunConfig& c) {
  const auto& p = c.pipeline;
  const auto& q = p.filter.process_noise;
  const auto& p0 = p.filter.initial_covariance;
  const auto& m = p.manager;
  const auto& th = p.thresholds;
  json j;
  j["seed"] = c.seed;
  j["events"] = {{"max_regression_us", c.events.max_regression_us}};
  j["flowfield"] = {{"patch_radius", p.flow.patch_radius},
                    {"alpha", p.flow.alpha},
                    {"max_staleness", p.flow.max_staleness},
                    {"min_neighbors", p.flow.min_neighbors},
                    {"per_polarity", p.flow.per_polarity}};
  j["detector"] = {{"gamma", p.detector.gamma},
                   {"default_speed", p.detector.default_speed},
                   {"min_speed", p.detector.min_speed},
                   {"max_speed", p.detector.max_speed},
                   {"suppression_radius", p.detector.suppression_radius},
                   {"speed_radius", p.detector.speed_radius}};
  j["filter"] = {
      {"buffer_length", p.filter.buffer_length},
      {"process_noise",
       {{"position", q.position}, {"velocity", q.velocity}, {"theta", q.theta},
        {"angular_rate", q.angular_rate}, {"shape", q.shape}, {"offset", q.offset}}},
      {"initial_covariance",
       {{"position", p0.position}, {"velocity", p0.velocity}, {"theta", p0.theta},
        {"angular_rate", p0.angular_rate}, {"shape", p0.shape}, {"offset", p0.offset}}},
      {"spawn_lambda", {p.filter.spawn_lambda.x(), p.filter.spawn_lambda.y()}},
      {"spawn_offset", p.filter.spawn_offset},
      {"measurement_noise_scale", p.filter.measurement_noise_scale},
      {"g_beta_limit", p.filter.g_beta_limit},
      {"split_g", p.filter.split_g},
      {"g_noise_inflation", p.filter.g_noise_inflation},
      {"h_updates_shape", p.filter.h_updates_shape}};
  j["patch"] = {{"decay_rate", p.patch_decay}};
  j["classifier"] = {{"learning_rate", c.classifier.learning_rate},
                     {"beta1", c.classifier.beta1},
                     {"beta2", c.classifier.beta2},
                     {"epsilon", c.classifier.epsilon},
                     {"batch_size", c.classifier.batch_size},
                     {"epochs", c.classifier.epochs},
                     {"train_fraction", c.classifier.train_fraction},
                     {"threshold", m.classifier_threshold}};
  j["manager"] = {{"significance", m.significance},
                  {"kappa", m.kappa},
                  {"batch_size", m.batch_size},
                  {"evaluation_length", m.evaluation_length},
                  {"max_tracks", m.max_tracks},
                  {"border_margin", m.border_margin},
                  {"interval_smoothing", m.interval_smoothing},
                  {"initial_interval_us", m.initial_interval_us},
                  {"sample_period_us", m.sample_period_us},
                  {"validation", p.mode == ValidationMode::classifier ? "classifier" : "thresholds"},
                  {"thresholds",
                   {{"max_position_cov_trace", th.max_position_cov_trace},
                    {"min_speed", th.min_speed},
                    {"max_speed", th.max_speed},
                    {"min_lambda", th.min_lambda},
                    {"max_lambda", th.max_lambda},
                    {"window", th.window}}}};
  j["harvest"] = {{"per_class", c.harvest.per_class},
                  {"min_purity", c.harvest.min_purity},
                  {"max_position_error", c.harvest.max_position_error},
                  {"min_track_events", c.harvest.min_track_events}};
  j["evaluation"] = {{"match_radius", c.evaluation.match_radius},
                     {"cadence_us", c.evaluation.cadence_us},
                     {"half_window_us", c.evaluation.half_window_us},
                     {"live_tolerance_us", c.evaluation.live_tolerance_us}};
  j["render"] = {{"frame_period_us", c.render.frame_period_us},
                 {"ellipse_sigma", c.render.ellipse_sigma},
                 {"draw_ids", c.render.draw_ids}};
  j["paths"] = {{"model", c.paths.model}, {"output_prefix", c.paths.output_prefix}};
  return j;
}

namespace {

bool compatible(const json& schema, const json& value) {
  if (schema.is_number_float()) return value.is_number();
  if (schema.is_number_unsigned()) return value.is_number_unsigned();
  if (schema.is_number_integer()) return value.is_number_integer();
  return schema.type() == value.type();
}

const char* type_label(const json& schema) {
  if (schema.is_number_float()) return "a number";
  if (schema.is_number_unsigned()) return "a non-negative integer";
  if (schema.is_number_integer()) return "an integer";
  if (schema.is_boolean()) return "a boolean";
  if (schema.is_string()) return "a string";
  if (schema.is_array()) return "an array";
  if (schema.is_object()) return "an object";
  return "a value";
}

void check_against(const json& schema, const json& value, const std::string& path) {
  if (schema.is_object()) {
    if (!value.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, v] : value.items()) {
      const std::string sub = path.empty() ? key : path + "." + key;
      if (!schema.contains(key)) throw ConfigError("unknown config key '" + sub + "'");
      check_against(schema.at(key), v, sub);
    }
    return;
  }
  if (schema.is_array()) {
    if (!value.is_array() || value.size() != schema.size()) {
      throw ConfigError(path + ": expected an array of " + std::to_string(schema.size()) +
                        " numbers");
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      check_against(schema[i], value[i], path + "[" + std::to_string(i) + "]");
    }
    return;
  }
  if (!compatible(schema, value)) throw ConfigError(path + ": expected " + type_label(schema));
}

template <typename T>
T at(const json& j, const char* section, const char* key) {
  return j.at(section).at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const json& input) {
  const RunConfig defaults;
  json merged = config_to_json(defaults);
  check_against(merged, input, "");
  merged.merge_patch(input);

  RunConfig c;
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.events.max_regression_us = at<TimeUs>(merged, "events", "max_regression_us");

  auto& p = c.pipeline;
  p.flow.patch_radius = at<int>(merged, "flowfield", "patch_radius");
  p.flow.alpha = at<double>(merged, "flowfield", "alpha");
  p.flow.max_staleness = at<double>(merged, "flowfield", "max_staleness");
  p.flow.min_neighbors = at<int>(merged, "flowfield", "min_neighbors");
  p.flow.per_polarity = at<bool>(merged, "flowfield", "per_polarity");

  p.detector.gamma = at<double>(merged, "detector", "gamma");
  p.detector.default_speed = at<double>(merged, "detector", "default_speed");
  p.detector.min_speed = at<double>(merged, "detector", "min_speed");
  p.detector.max_speed = at<double>(merged, "detector", "max_speed");
  p.detector.suppression_radius = at<double>(merged, "detector", "suppression_radius");
  p.detector.speed_radius = at<int>(merged, "detector", "speed_radius");

  const json& f = merged.at("filter");
  p.filter.buffer_length = f.at("buffer_length").get<std::size_t>();
  const json& qn = f.at("process_noise");
  auto& q = p.filter.process_noise;
  q.position = qn.at("position").get<double>();
  q.velocity = qn.at("velocity").get<double>();
  q.theta = qn.at("theta").get<double>();
  q.angular_rate = qn.at("angular_rate").get<double>();
  q.shape = qn.at("shape").get<double>();
  q.offset = qn.at("offset").get<double>();
  const json& pn = f.at("initial_covariance");
  auto& p0 = p.filter.initial_covariance;
  p0.position = pn.at("position").get<double>();
  p0.velocity = pn.at("velocity").get<double>();
  p0.theta = pn.at("theta").get<double>();
  p0.angular_rate = pn.at("angular_rate").get<double>();
  p0.shape = pn.at("shape").get<double>();
  p0.offset = pn.at("offset").get<double>();
  p.filter.spawn_lambda = {f.at("spawn_lambda")[0].get<double>(), f.at("spawn_lambda")[1].get<double>()};
  p.filter.spawn_offset = f.at("spawn_offset").get<double>();
  p.filter.measurement_noise_scale = f.at("measurement_noise_scale").get<double>();
  p.filter.g_beta_limit = f.at("g_beta_limit").get<double>();
  p.filter.split_g = f.at("split_g").get<bool>();
  p.filter.g_noise_inflation = f.at("g_noise_inflation").get<double>();
  p.filter.h_updates_shape = f.at("h_updates_shape").get<bool>();

  p.patch_decay = at<double>(merged, "patch", "decay_rate");

  c.classifier.learning_rate = at<double>(merged, "classifier", "learning_rate");
  c.classifier.beta1 = at<double>(merged, "classifier", "beta1");
  c.classifier.beta2 = at<double>(merged, "classifier", "beta2");
  c.classifier.epsilon = at<double>(merged, "classifier", "epsilon");
  c.classifier.batch_size = at<std::size_t>(merged, "classifier", "batch_size");
  c.classifier.epochs = at<std::size_t>(merged, "classifier", "epochs");
  c.classifier.train_fraction = at<double>(merged, "classifier", "train_fraction");
  c.classifier.threshold = at<double>(merged, "classifier", "threshold");
  c.classifier.seed = c.seed;

  auto& m = p.manager;
  m.significance = at<double>(merged, "manager", "significance");
  m.kappa = at<double>(merged, "manager", "kappa");
  m.batch_size = at<std::size_t>(merged, "manager", "batch_size");
  m.evaluation_length = at<std::size_t>(merged, "manager", "evaluation_length");
  m.max_tracks = at<std::size_t>(merged, "manager", "max_tracks");
  m.border_margin = at<double>(merged, "manager", "border_margin");
  m.interval_smoothing = at<double>(merged, "manager", "interval_smoothing");
  m.initial_interval_us = at<double>(merged, "manager", "initial_interval_us");
  m.sample_period_us = at<TimeUs>(merged, "manager", "sample_period_us");
  m.classifier_threshold = c.classifier.threshold;
  const auto mode = at<std::string>(merged, "manager", "validation");
  if (mode == "classifier") {
    p.mode = ValidationMode::classifier;
  } else if (mode == "thresholds") {
    p.mode = ValidationMode::thresholds;
  } else {
    throw ConfigError("manager.validation: expected \"classifier\" or \"thresholds\", got \"" +
                      mode + "\"");
  }
  const json& t = merged.at("manager").at("thresholds");
  p.thresholds.max_position_cov_trace = t.at("max_position_cov_trace").get<double>();
  p.thresholds.min_speed = t.at("min_speed").get<double>();
  p.thresholds.max_speed = t.at("max_speed").get<double>();
  p.thresholds.min_lambda = t.at("min_lambda").get<double>();
  p.thresholds.max_lambda = t.at("max_lambda").get<double>();
  p.thresholds.window = t.at("window").get<std::size_t>();

  c.harvest.per_class = at<std::size_t>(merged, "harvest", "per_class");
  c.harvest.min_purity = at<double>(merged, "harvest", "min_purity");
  c.harvest.max_position_error = at<double>(merged, "harvest", "max_position_error");
  c.harvest.min_track_events = at<std::size_t>(merged, "harvest", "min_track_events");
  c.harvest.seed = c.seed;

  c.evaluation.match_radius = at<double>(merged, "evaluation", "match_radius");
  c.evaluation.cadence_us = at<TimeUs>(merged, "evaluation", "cadence_us");
  c.evaluation.half_window_us = at<TimeUs>(merged, "evaluation", "half_window_us");
  c.evaluation.live_tolerance_us = at<TimeUs>(merged, "evaluation", "live_tolerance_us");

  c.render.frame_period_us = at<TimeUs>(merged, "render", "frame_period_us");
  c.render.ellipse_sigma = at<double>(merged, "render", "ellipse_sigma");
  c.render.draw_ids = at<bool>(merged, "render", "draw_ids");

  c.paths.model = at<std::string>(merged, "paths", "model");
  c.paths.output_prefix = at<std::string>(merged, "paths", "output_prefix");

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return base;
  json j = config_to_json(base);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    const std::string path = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
      if (!node->is_object() || !node->contains(key)) {
        throw ConfigError("unknown config key '" + path + "'");
      }
      node = &(*node)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    // A float field accepts an integer literal; keep the schema's number kind.
    check_against(*node, value, path);
    *node = value;
  }
  return config_from_json(j);
}

}  // namespace aemot
