#include "aemot/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aemot {

void DetectorParams::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("detector.gamma must lie in (0, 1)");
  if (!(min_speed > 0.0)) throw std::invalid_argument("detector.min_speed must be > 0");
  if (!(max_speed >= min_speed)) {
    throw std::invalid_argument("detector.max_speed must be >= detector.min_speed");
  }
  if (!(default_speed >= min_speed && default_speed <= max_speed)) {
    throw std::invalid_argument("detector.default_speed must lie in [min_speed, max_speed]");
  }
  if (!(suppression_radius >= 0.0)) {
    throw std::invalid_argument("detector.suppression_radius must be >= 0");
  }
  if (speed_radius < 1) throw std::invalid_argument("detector.speed_radius must be >= 1");
}

SpeedEstimate estimate_initial_speed(const PatchSamples& patch, const Eigen::Vector2d& direction,
                                     const DetectorParams& params) {
  double sw = 0.0, ss = 0.0, sa = 0.0, saa = 0.0, ssa = 0.0;
  for (std::size_t i = 0; i < patch.size(); ++i) {
    const double w = patch.weight[i];
    const double s = patch.ax[i] * direction.x() + patch.ay[i] * direction.y();
    const double a = patch.age[i];
    sw += w;
    ss += w * s;
    sa += w * a;
    saa += w * a * a;
    ssa += w * s * a;
  }
  const double denom = sw * saa - sa * sa;
  if (!(sw > 0.0) || !(denom > 1e-18 * std::max(1.0, sw * sw))) {
    return {direction, params.default_speed};
  }
  const double slope = (sw * ssa - ss * sa) / denom;  // px per second of age
  if (std::abs(slope) < 1e-9) return {direction, params.default_speed};
  const Eigen::Vector2d signed_dir = slope < 0.0 ? direction : Eigen::Vector2d(-direction);
  const double speed = std::clamp(std::abs(slope), params.min_speed, params.max_speed);
  return {signed_dir, speed};
}

SpeedEstimate estimate_initial_speed(const SurfaceOfActiveEvents& surface, const Event& e,
                                     const Eigen::Vector2d& direction, const FlowParams& flow,
                                     const DetectorParams& params) {
  FlowParams wide = flow;
  wide.patch_radius = params.speed_radius;
  PatchSamples patch;
  collect_patch(surface, e, wide, patch);
  return estimate_initial_speed(patch, direction, params);
}

double detection_correlation(const Eigen::Vector2d& flow, const Eigen::Vector2d& dominant_normal) {
  return std::min(1.0, std::abs(flow.dot(dominant_normal)));
}

Detector::Detector(SensorGeometry geometry, FlowParams flow, DetectorParams params)
    : surface_(geometry, flow.per_polarity), field_(geometry), estimator_(flow), params_(params) {
  params_.validate();
}

std::optional<Detection> Detector::process_unassociated(const Event& e) {
  ++attempts_;
  const auto flow = estimator_.flow_direction(surface_, e);
  if (!flow) return std::nullopt;
  field_.update(e.x, e.y, *flow, e.t);
  const auto normal = estimator_.dominant_normal(field_, e);
  if (!normal) return std::nullopt;
  const double c = detection_correlation(*flow, *normal);
  if (!(c < params_.gamma)) return std::nullopt;
  const SpeedEstimate speed =
      estimate_initial_speed(surface_, e, *flow, estimator_.params(), params_);
  ++detections_;
  return Detection{{static_cast<double>(e.x), static_cast<double>(e.y)},
                   speed.direction,
                   speed.speed,
                   e.t,
                   c};
}

std::optional<Detection> process_unassociated_event(const Event& e,
                                                    const SurfaceOfActiveEvents& surface,
                                                    FlowDirectionField& field,
                                                    const FlowParams& flow,
                                                    const DetectorParams& params) {
  FlowEstimator estimator(flow);
  const auto v = estimator.flow_direction(surface, e);
  if (!v) return std::nullopt;
  field.update(e.x, e.y, *v, e.t);
  const auto normal = estimator.dominant_normal(field, e);
  if (!normal) return std::nullopt;
  const double c = detection_correlation(*v, *normal);
  if (!(c < params.gamma)) return std::nullopt;
  const SpeedEstimate speed = estimate_initial_speed(surface, e, *v, flow, params);
  return Detection{{static_cast<double>(e.x), static_cast<double>(e.y)},
                   speed.direction,
                   speed.speed,
                   e.t,
                   c};
}

}  // namespace aemot
