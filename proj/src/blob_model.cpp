#include "aemot/blob_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aemot {

Vector10d BlobState::to_vector() const {
  Vector10d x;
  x << p.x(), p.y(), v.x(), v.y(), theta, q, lambda.x(), lambda.y(), delta.x(), delta.y();
  return x;
}

BlobState BlobState::from_vector(const Vector10d& x) {
  namespace si = state_index;
  BlobState s;
  s.p = {x[si::px], x[si::py]};
  s.v = {x[si::vx], x[si::vy]};
  s.theta = x[si::theta];
  s.q = x[si::q];
  s.lambda = {x[si::lambda1], x[si::lambda2]};
  s.delta = {x[si::delta1], x[si::delta2]};
  return s;
}

double wrap_half_turn(double angle) {
  constexpr double pi = std::numbers::pi;
  double a = std::fmod(angle, pi);  // (-pi, pi)
  if (a <= -pi / 2) a += pi;
  if (a > pi / 2) a -= pi;
  return a;
}

namespace {
void check_lambda(const Eigen::Vector2d& lambda) {
  if (!(lambda.x() > 0.0) || !(lambda.y() > 0.0)) {
    throw std::invalid_argument("shape axes must be positive");
  }
}
}  // namespace

Eigen::Matrix2d shape_matrix(double theta, const Eigen::Vector2d& lambda) {
  check_lambda(lambda);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double l1 = lambda.x();
  const double l2 = lambda.y();
  Eigen::Matrix2d m;
  m(0, 0) = l1 * c * c + l2 * s * s;
  m(1, 1) = l1 * s * s + l2 * c * c;
  m(0, 1) = m(1, 0) = (l1 - l2) * c * s;
  return m;
}

Eigen::Matrix2d shape_matrix_inverse(double theta, const Eigen::Vector2d& lambda) {
  check_lambda(lambda);
  return shape_matrix(theta, Eigen::Vector2d(1.0 / lambda.x(), 1.0 / lambda.y()));
}

Eigen::Vector2d blob_residual(const BlobState& s, const Eigen::Vector2d& xi, int polarity) {
  return xi - s.p - static_cast<double>(polarity) * s.delta;
}

double mahalanobis_sq(const BlobState& s, const Eigen::Vector2d& xi, int polarity) {
  const Eigen::Vector2d h = shape_matrix_inverse(s.theta, s.lambda) * blob_residual(s, xi, polarity);
  return h.squaredNorm();
}

double event_density(const BlobState& s, const Eigen::Vector2d& xi, int polarity) {
  const double det = s.lambda.x() * s.lambda.y();
  const double d2 = mahalanobis_sq(s, xi, polarity);
  return std::exp(-0.5 * d2) / (2.0 * std::numbers::pi * det);
}

double chi2_2dof_critical(double significance) {
  if (!(significance > 0.0 && significance < 1.0)) {
    throw std::invalid_argument("significance must lie in (0, 1)");
  }
  return -2.0 * std::log1p(-significance);
}

bool gate(double d2, double significance) { return d2 <= chi2_2dof_critical(significance); }

}  // namespace aemot
