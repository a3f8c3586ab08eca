#pragma once

// Gaussian event-blob model: state vector, shape matrix, event likelihood and
// chi-squared gating. Lambda^2 is the event-position covariance throughout.

#include <Eigen/Core>

namespace aemot {

using Vector10d = Eigen::Matrix<double, 10, 1>;
using Matrix10d = Eigen::Matrix<double, 10, 10>;

/// Index of each blob-state component in the canonical 10-vector.
namespace state_index {
inline constexpr int px = 0;
inline constexpr int py = 1;
inline constexpr int vx = 2;
inline constexpr int vy = 3;
inline constexpr int theta = 4;
inline constexpr int q = 5;
inline constexpr int lambda1 = 6;
inline constexpr int lambda2 = 7;
inline constexpr int delta1 = 8;
inline constexpr int delta2 = 9;
}  // namespace state_index

/// Smallest admissible principal axis (px).
inline constexpr double kLambdaFloor = 0.5;

struct BlobState {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();       // centre (px)
  Eigen::Vector2d v = Eigen::Vector2d::Zero();       // velocity (px/s)
  double theta = 0.0;                                 // orientation (rad)
  double q = 0.0;                                     // angular rate (rad/s)
  Eigen::Vector2d lambda = Eigen::Vector2d::Ones();   // principal axes (px)
  Eigen::Vector2d delta = Eigen::Vector2d::Zero();    // polarity offset (px)

  Vector10d to_vector() const;
  static BlobState from_vector(const Vector10d& x);
};

/// Wraps an angle to (-pi/2, pi/2].
double wrap_half_turn(double angle);

/// Lambda = R(theta) diag(lambda) R(theta)^T. Throws std::invalid_argument for lambda <= 0.
Eigen::Matrix2d shape_matrix(double theta, const Eigen::Vector2d& lambda);

/// Lambda^-1 in closed form (same preconditions as shape_matrix).
Eigen::Matrix2d shape_matrix_inverse(double theta, const Eigen::Vector2d& lambda);

/// xi - p - sigma * Delta
Eigen::Vector2d blob_residual(const BlobState& s, const Eigen::Vector2d& xi, int polarity);

/// Event likelihood (1 / (2 pi det Lambda)) exp(-0.5 r^T Lambda^-2 r).
double event_density(const BlobState& s, const Eigen::Vector2d& xi, int polarity);

/// Squared Mahalanobis distance r^T Lambda^-2 r.
double mahalanobis_sq(const BlobState& s, const Eigen::Vector2d& xi, int polarity);

/// Critical value of chi-squared with two degrees of freedom: -2 ln(1 - significance).
double chi2_2dof_critical(double significance);

/// true iff d2 lies inside the gate at the given significance.
bool gate(double d2, double significance);

}  // namespace aemot
