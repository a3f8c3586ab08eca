#pragma once

// Surface of Active Events and Field of Active Flow Directions.
//
// For each event the local line direction is regressed from the recency-weighted patch of
// the surface: M = sum_i exp(-2 alpha delta_i) a_i a_i^T with a_i the pixel offsets, and the
// line normal is the eigenvector of M with the smallest eigenvalue.

#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "aemot/events.hpp"

namespace aemot {

struct FlowParams {
  int patch_radius = 3;          // 7x7 window
  double alpha = 70.0;           // recency rate, 1/s
  double max_staleness = 0.05;   // s
  int min_neighbors = 4;
  bool per_polarity = false;     // separate surfaces for ON and OFF events

  void validate() const;
};

class SurfaceOfActiveEvents {
 public:
  SurfaceOfActiveEvents(SensorGeometry geometry, bool per_polarity = false);

  /// Records the event time at its pixel. Throws std::out_of_range off-sensor.
  void update(const Event& e);

  /// Last timestamp at (x, y) on the channel used for `polarity`; nullopt if never fired.
  std::optional<TimeUs> at(int x, int y, int polarity = 1) const;

  const SensorGeometry& geometry() const { return geometry_; }
  bool per_polarity() const { return channels_ == 2; }

  static constexpr TimeUs kNever = std::numeric_limits<TimeUs>::min();
  TimeUs raw(int x, int y, int polarity) const {
    return times_[index(x, y, polarity)];
  }

 private:
  std::size_t index(int x, int y, int polarity) const {
    const std::size_t channel = (channels_ == 2 && polarity < 0) ? 1 : 0;
    return channel * plane_ + static_cast<std::size_t>(y) * geometry_.width + x;
  }

  SensorGeometry geometry_;
  int channels_;
  std::size_t plane_;
  std::vector<TimeUs> times_;
};

struct FlowSample {
  Eigen::Vector2d direction;
  TimeUs t;
};

class FlowDirectionField {
 public:
  explicit FlowDirectionField(SensorGeometry geometry);

  /// Stores a unit, sign-normalised direction. Throws std::out_of_range off-sensor and
  /// std::invalid_argument for directions that are not unit length or not normalised.
  void update(int x, int y, const Eigen::Vector2d& direction, TimeUs t);
  std::optional<FlowSample> at(int x, int y) const;

  const SensorGeometry& geometry() const { return geometry_; }

 private:
  struct Cell {
    double dx = 0.0;
    double dy = 0.0;
    TimeUs t = SurfaceOfActiveEvents::kNever;
  };
  SensorGeometry geometry_;
  std::vector<Cell> cells_;
};

/// Sign rule on directions modulo sign: second component positive, or zero with the first
/// positive.
Eigen::Vector2d sign_normalize(const Eigen::Vector2d& v);
bool is_sign_normalized(const Eigen::Vector2d& v);

/// Unit eigenvector of a symmetric 2x2 matrix for its smallest eigenvalue (closed form).
/// Equal eigenvalues resolve to (1, 0).
Eigen::Vector2d smallest_eigenvector(double a, double b, double c);

/// Recency-weighted neighbourhood of an event on the surface (centre pixel excluded).
struct PatchSamples {
  std::vector<double> ax;       // pixel offset x
  std::vector<double> ay;       // pixel offset y
  std::vector<double> age;      // t_k - T(xi_i), s
  std::vector<double> weight;   // exp(-2 alpha age)

  std::size_t size() const { return weight.size(); }
  void clear() {
    ax.clear();
    ay.clear();
    age.clear();
    weight.clear();
  }
};

/// Fills `out` with fresh (age <= max_staleness) fired pixels around `e`.
void collect_patch(const SurfaceOfActiveEvents& surface, const Event& e, const FlowParams& params,
                   PatchSamples& out);

/// Local flow direction at `e` (sign-normalised unit vector) or nullopt when fewer than
/// min_neighbors pixels contribute. The event must already be on the surface.
std::optional<Eigen::Vector2d> estimate_flow_direction(const SurfaceOfActiveEvents& surface,
                                                       const Event& e, const FlowParams& params);

/// Unit normal to the dominant stored flow direction around `e` (centre excluded), or nullopt
/// when fewer than min_neighbors fresh entries exist.
std::optional<Eigen::Vector2d> estimate_dominant_direction(const FlowDirectionField& field,
                                                           const Event& e,
                                                           const FlowParams& params);

/// Same computations with caller-owned scratch space, for the per-event hot path.
class FlowEstimator {
 public:
  explicit FlowEstimator(FlowParams params);

  std::optional<Eigen::Vector2d> flow_direction(const SurfaceOfActiveEvents& surface,
                                                const Event& e);
  std::optional<Eigen::Vector2d> dominant_normal(const FlowDirectionField& field, const Event& e);

  const FlowParams& params() const { return params_; }
  /// Samples gathered by the last flow_direction call.
  const PatchSamples& last_patch() const { return patch_; }

 private:
  FlowParams params_;
  PatchSamples patch_;
  std::vector<double> vx_, vy_, w_;
};

/// Debug dumps: surface recency exp(-alpha (t_now - T)) as 8-bit PGM, flow field as CSV.
void write_surface_pgm(const SurfaceOfActiveEvents& surface, TimeUs t_now, double alpha,
                       const std::filesystem::path& path);
void write_flow_csv(const FlowDirectionField& field, const std::filesystem::path& path);

}  // namespace aemot
