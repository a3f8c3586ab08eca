#pragma once

// Synthetic labelled scenes: moving Gaussian event blobs plus background clutter.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "aemot/blob_model.hpp"
#include "aemot/events.hpp"

namespace aemot {

struct Waypoint {
  double t = 0.0;  // s
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
};

/// One moving blob. Position is piecewise linear through `initial.p` at `start` and the
/// waypoints, continuing with the last segment velocity; without waypoints it moves with
/// `initial.v`. Orientation either rotates at `initial.q` or, with `align_to_heading`,
/// follows the direction of motion; in that case `initial.delta` is read in the body frame
/// (x along the heading).
struct ObjectSpec {
  std::uint32_t label = 1;
  BlobState initial;
  std::vector<Waypoint> waypoints;
  bool align_to_heading = false;
  double rate = 10000.0;  // events/s
  double start = 0.0;     // s
  double end = -1.0;      // s; negative = until the scene ends

  BlobState state_at(double t) const;
  bool active_at(double t, double scene_duration) const;
};

/// Rectangular region emitting polarity-random events, optionally swaying sinusoidally.
struct FlickerRegion {
  double x = 0.0;
  double y = 0.0;
  double width = 10.0;
  double height = 10.0;
  double rate = 5000.0;  // events/s
  Eigen::Vector2d sway_amplitude = Eigen::Vector2d::Zero();  // px
  double sway_frequency = 0.0;                               // Hz
  double sway_phase = 0.0;                                   // rad
};

struct SceneConfig {
  SensorGeometry geometry{640, 480};
  double duration = 1.0;  // s
  std::vector<ObjectSpec> objects;
  double noise_rate = 0.0;  // uniform background, events/s
  std::vector<FlickerRegion> flicker;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct GroundTruthRow {
  TimeUs t = 0;
  std::uint32_t label = 0;
  BlobState state;
};

struct Scene {
  EventStream stream;
  std::vector<GroundTruthRow> ground_truth;
};

/// Poisson-timed events sampled from the blob model for one object. Polarity is uniform,
/// position ~ N(p + sigma * Delta, Lambda^2) rounded to the nearest pixel; off-sensor
/// samples are dropped. Output is in time order.
std::vector<LabeledEvent> generate_blob_events(const ObjectSpec& object,
                                               const SensorGeometry& geometry,
                                               double duration, std::uint64_t seed);

/// Uniform noise over the sensor (label 0).
std::vector<LabeledEvent> generate_uniform_noise(const SensorGeometry& geometry, double rate,
                                                 double duration, std::uint64_t seed);

std::vector<LabeledEvent> generate_flicker_events(const FlickerRegion& region,
                                                  const SensorGeometry& geometry,
                                                  double duration, std::uint64_t seed);

/// All sources merged by (t, label, source, emission index); ground truth sampled at 1 kHz.
Scene generate_scene(const SceneConfig& config);

std::vector<GroundTruthRow> sample_ground_truth(const SceneConfig& config,
                                                TimeUs period_us = 1000);

void write_ground_truth_csv(std::ostream& out, const std::vector<GroundTruthRow>& rows);
void write_ground_truth_csv(const std::filesystem::path& path,
                            const std::vector<GroundTruthRow>& rows);
std::vector<GroundTruthRow> read_ground_truth_csv(const std::filesystem::path& path);

SceneConfig scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneConfig& config);
SceneConfig load_scene(const std::filesystem::path& path);

/// Canned scenes used by the tests, the acceptance suite and `aemot simulate --preset`.
namespace scenarios {

/// One blob moving in a straight line, aligned with its heading.
SceneConfig single_blob(std::uint64_t seed, double speed = 500.0, double heading_deg = 0.0,
                        Eigen::Vector2d lambda = {3.0, 1.5}, double rate = 10000.0,
                        double duration = 0.5);

/// Two blobs crossing at right angles at `cross_time` (s) in the sensor centre.
SceneConfig crossing_pair(std::uint64_t seed, double speed = 500.0, double cross_time = 0.3,
                          double rate = 10000.0);

/// Uniform noise only.
SceneConfig noise_only(std::uint64_t seed, double rate, double duration,
                       SensorGeometry geometry = {640, 480});

struct SwarmOptions {
  int blobs = 20;
  double duration = 5.0;
  SensorGeometry geometry{640, 480};
  int clutter_regions = 8;
  double noise_rate = 20000.0;
  double min_speed = 150.0;
  double max_speed = 500.0;
  double min_rate = 8000.0;
  double max_rate = 14000.0;
};

/// Meandering blobs that steer away from the borders plus swaying flicker clutter
/// concentrated in the lower part of the sensor.
SceneConfig swarm(std::uint64_t seed, const SwarmOptions& options = {});

}  // namespace scenarios

}  // namespace aemot
