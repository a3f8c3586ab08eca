#include "aemot/flowfield.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "aemot/simd/kernels.hpp"

namespace aemot {

void FlowParams::validate() const {
  if (patch_radius < 1) throw std::invalid_argument("flowfield.patch_radius must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("flowfield.alpha must be > 0");
  if (!(max_staleness > 0.0)) throw std::invalid_argument("flowfield.max_staleness must be > 0");
  if (min_neighbors < 2) throw std::invalid_argument("flowfield.min_neighbors must be >= 2");
}

SurfaceOfActiveEvents::SurfaceOfActiveEvents(SensorGeometry geometry, bool per_polarity)
    : geometry_(geometry),
      channels_(per_polarity ? 2 : 1),
      plane_(static_cast<std::size_t>(geometry.width) * geometry.height),
      times_(plane_ * channels_, kNever) {}

void SurfaceOfActiveEvents::update(const Event& e) {
  if (!geometry_.contains(e.x, e.y)) {
    throw std::out_of_range("event (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                            ") outside sensor");
  }
  TimeUs& cell = times_[index(e.x, e.y, e.polarity)];
  if (e.t > cell) cell = e.t;
}

std::optional<TimeUs> SurfaceOfActiveEvents::at(int x, int y, int polarity) const {
  if (!geometry_.contains(x, y)) return std::nullopt;
  const TimeUs t = times_[index(x, y, polarity)];
  if (t == kNever) return std::nullopt;
  return t;
}

FlowDirectionField::FlowDirectionField(SensorGeometry geometry)
    : geometry_(geometry), cells_(static_cast<std::size_t>(geometry.width) * geometry.height) {}

void FlowDirectionField::update(int x, int y, const Eigen::Vector2d& direction, TimeUs t) {
  if (!geometry_.contains(x, y)) {
    throw std::out_of_range("flow update (" + std::to_string(x) + "," + std::to_string(y) +
                            ") outside sensor");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("flow direction must have unit norm");
  }
  if (!is_sign_normalized(direction)) {
    throw std::invalid_argument("flow direction must be sign-normalised");
  }
  auto& c = cells_[static_cast<std::size_t>(y) * geometry_.width + x];
  c.dx = direction.x();
  c.dy = direction.y();
  c.t = t;
}

std::optional<FlowSample> FlowDirectionField::at(int x, int y) const {
  if (!geometry_.contains(x, y)) return std::nullopt;
  const auto& c = cells_[static_cast<std::size_t>(y) * geometry_.width + x];
  if (c.t == SurfaceOfActiveEvents::kNever) return std::nullopt;
  return FlowSample{{c.dx, c.dy}, c.t};
}

Eigen::Vector2d sign_normalize(const Eigen::Vector2d& v) {
  if (v.y() < 0.0 || (v.y() == 0.0 && v.x() < 0.0)) return -v;
  return v;
}

bool is_sign_normalized(const Eigen::Vector2d& v) {
  return v.y() > 0.0 || (v.y() == 0.0 && v.x() > 0.0);
}

Eigen::Vector2d smallest_eigenvector(double a, double b, double c) {
  const double half_diff = 0.5 * (a - c);
  const double radius = std::hypot(half_diff, b);
  const double lambda_min = 0.5 * (a + c) - radius;
  if (radius <= 1e-15 * (std::abs(a) + std::abs(c)) || radius == 0.0) {
    return {1.0, 0.0};
  }
  // Two algebraically equivalent candidates; keep the better conditioned one.
  const Eigen::Vector2d u1(b, lambda_min - a);
  const Eigen::Vector2d u2(lambda_min - c, b);
  const Eigen::Vector2d& u = u1.squaredNorm() >= u2.squaredNorm() ? u1 : u2;
  const double n = u.norm();
  if (n == 0.0) return a <= c ? Eigen::Vector2d(1.0, 0.0) : Eigen::Vector2d(0.0, 1.0);
  return u / n;
}

void collect_patch(const SurfaceOfActiveEvents& surface, const Event& e, const FlowParams& params,
                   PatchSamples& out) {
  out.clear();
  const auto& g = surface.geometry();
  const int r = params.patch_radius;
  const TimeUs max_age_us = to_micros(params.max_staleness);
  const double two_alpha = 2.0 * params.alpha;
  const int y0 = std::max(0, e.y - r);
  const int y1 = std::min(g.height - 1, e.y + r);
  const int x0 = std::max(0, e.x - r);
  const int x1 = std::min(g.width - 1, e.x + r);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (x == e.x && y == e.y) continue;
      const TimeUs t = surface.raw(x, y, e.polarity);
      if (t == SurfaceOfActiveEvents::kNever) continue;
      const TimeUs age_us = e.t - t;
      if (age_us > max_age_us || age_us < 0) continue;
      const double age = to_seconds(age_us);
      out.ax.push_back(static_cast<double>(x - e.x));
      out.ay.push_back(static_cast<double>(y - e.y));
      out.age.push_back(age);
      out.weight.push_back(std::exp(-two_alpha * age));
    }
  }
}

namespace {

Eigen::Vector2d rotate_quarter(const Eigen::Vector2d& u) { return {-u.y(), u.x()}; }

}  // namespace

FlowEstimator::FlowEstimator(FlowParams params) : params_(params) {
  params_.validate();
  const std::size_t cap = static_cast<std::size_t>((2 * params_.patch_radius + 1) *
                                                   (2 * params_.patch_radius + 1));
  patch_.ax.reserve(cap);
  patch_.ay.reserve(cap);
  patch_.age.reserve(cap);
  patch_.weight.reserve(cap);
  vx_.reserve(cap);
  vy_.reserve(cap);
  w_.reserve(cap);
}

std::optional<Eigen::Vector2d> FlowEstimator::flow_direction(const SurfaceOfActiveEvents& surface,
                                                             const Event& e) {
  collect_patch(surface, e, params_, patch_);
  if (static_cast<int>(patch_.size()) < params_.min_neighbors) return std::nullopt;
  const auto m = simd::kernels().weighted_moments(patch_.ax.data(), patch_.ay.data(),
                                                  patch_.weight.data(), patch_.size());
  const Eigen::Vector2d normal = smallest_eigenvector(m.xx, m.xy, m.yy);
  return sign_normalize(rotate_quarter(normal));
}

std::optional<Eigen::Vector2d> FlowEstimator::dominant_normal(const FlowDirectionField& field,
                                                              const Event& e) {
  vx_.clear();
  vy_.clear();
  w_.clear();
  const auto& g = field.geometry();
  const int r = params_.patch_radius;
  const TimeUs max_age_us = to_micros(params_.max_staleness);
  const double two_alpha = 2.0 * params_.alpha;
  for (int y = std::max(0, e.y - r); y <= std::min(g.height - 1, e.y + r); ++y) {
    for (int x = std::max(0, e.x - r); x <= std::min(g.width - 1, e.x + r); ++x) {
      if (x == e.x && y == e.y) continue;
      const auto s = field.at(x, y);
      if (!s) continue;
      const TimeUs age_us = e.t - s->t;
      if (age_us > max_age_us || age_us < 0) continue;
      vx_.push_back(s->direction.x());
      vy_.push_back(s->direction.y());
      w_.push_back(std::exp(-two_alpha * to_seconds(age_us)));
    }
  }
  if (static_cast<int>(w_.size()) < params_.min_neighbors) return std::nullopt;
  const auto m = simd::kernels().weighted_moments(vx_.data(), vy_.data(), w_.data(), w_.size());
  return sign_normalize(smallest_eigenvector(m.xx, m.xy, m.yy));
}

std::optional<Eigen::Vector2d> estimate_flow_direction(const SurfaceOfActiveEvents& surface,
                                                       const Event& e, const FlowParams& params) {
  FlowEstimator est(params);
  return est.flow_direction(surface, e);
}

std::optional<Eigen::Vector2d> estimate_dominant_direction(const FlowDirectionField& field,
                                                           const Event& e,
                                                           const FlowParams& params) {
  FlowEstimator est(params);
  return est.dominant_normal(field, e);
}

void write_surface_pgm(const SurfaceOfActiveEvents& surface, TimeUs t_now, double alpha,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& g = surface.geometry();
  out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const auto t = surface.at(x, y);
      double v = 0.0;
      if (t) v = std::exp(-alpha * to_seconds(t_now - *t));
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  }
}

void write_flow_csv(const FlowDirectionField& field, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x,y,dx,dy,t_us\n";
  const auto& g = field.geometry();
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (const auto s = field.at(x, y)) {
        out << x << ',' << y << ',' << s->direction.x() << ',' << s->direction.y() << ','
            << s->t << '\n';
      }
    }
  }
}

}  // namespace aemot
