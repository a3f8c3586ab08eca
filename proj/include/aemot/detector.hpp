#pragma once

// Flow-consistency blob detector. An unassociated event becomes a detection when its local
// flow direction is nearly orthogonal to the normal of the dominant surrounding flow:
// C = |<V(xi_k), Vbar_perp>| < gamma.

#include <optional>

#include <Eigen/Core>

#include "aemot/events.hpp"
#include "aemot/flowfield.hpp"

namespace aemot {

struct Detection {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d direction = Eigen::Vector2d::UnitX();  // points along the motion
  double speed = 0.0;                                     // px/s
  TimeUs t = 0;
  double correlation = 0.0;                               // C
};

struct DetectorParams {
  double gamma = 0.3;
  double default_speed = 500.0;
  double min_speed = 50.0;
  double max_speed = 5000.0;
  double suppression_radius = 10.0;
  /// Window radius for the speed fit. A blob's surface only ramps across its whole extent,
  /// so this is wider than the flow window.
  int speed_radius = 8;

  void validate() const;
};

struct SpeedEstimate {
  Eigen::Vector2d direction;
  double speed;
};

/// Resolves the sign of `direction` and estimates speed from the surface time gradient: a
/// weighted fit of the offset a_i . direction against pixel age over `patch`. Offsets that
/// shrink with age (newer along +direction) keep the direction, the reverse flips it; speed =
/// clamp(|d offset / d age|). A flat or degenerate fit gives the default speed.
///
/// Offset on age rather than age on offset: inside a blob the ages scatter widely at every
/// offset, and that scatter would flatten the age-on-offset slope and inflate the speed.
SpeedEstimate estimate_initial_speed(const PatchSamples& patch, const Eigen::Vector2d& direction,
                                     const DetectorParams& params);

/// Convenience form that gathers the patch itself (radius `params.speed_radius`).
SpeedEstimate estimate_initial_speed(const SurfaceOfActiveEvents& surface, const Event& e,
                                     const Eigen::Vector2d& direction, const FlowParams& flow,
                                     const DetectorParams& params);

/// C = |<a, b>| for unit vectors, clamped to [0, 1].
double detection_correlation(const Eigen::Vector2d& flow, const Eigen::Vector2d& dominant_normal);

/// Owns the surface, the flow field and scratch space. `observe` must see every event;
/// `process_unassociated` only those no track claimed.
class Detector {
 public:
  Detector(SensorGeometry geometry, FlowParams flow, DetectorParams params);

  void observe(const Event& e) { surface_.update(e); }
  std::optional<Detection> process_unassociated(const Event& e);

  const SurfaceOfActiveEvents& surface() const { return surface_; }
  const FlowDirectionField& field() const { return field_; }
  const DetectorParams& params() const { return params_; }

  std::size_t attempts() const { return attempts_; }
  std::size_t detections() const { return detections_; }

 private:
  SurfaceOfActiveEvents surface_;
  FlowDirectionField field_;
  FlowEstimator estimator_;
  DetectorParams params_;
  std::size_t attempts_ = 0;
  std::size_t detections_ = 0;
};

/// Stateless form over caller-owned structures: estimates the flow at `e`, stores it in
/// `field`, then applies the correlation criterion.
std::optional<Detection> process_unassociated_event(const Event& e,
                                                    const SurfaceOfActiveEvents& surface,
                                                    FlowDirectionField& field,
                                                    const FlowParams& flow,
                                                    const DetectorParams& params);

}  // namespace aemot
