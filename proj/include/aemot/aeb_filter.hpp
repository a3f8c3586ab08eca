#pragma once

// Asynchronous event-blob EKF.
//
// Each associated event contributes two pseudo-measurements:
//   H = Lambda^-1 (xi - sigma Delta - p),      observed as 0   with noise I_2
//   G = sum_j |(1/(1+beta)) Lambda^-1 (xi_j - sigma_j Delta - p_j^-)|^2
//                                              observed as 2n  with noise 4n
// G runs over the n most recent (prediction, event) pairs and keeps the shape observable.
// The process model is constant velocity and constant angular rate.

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "aemot/blob_model.hpp"
#include "aemot/detector.hpp"
#include "aemot/events.hpp"

namespace aemot {

/// Spectral densities of the process noise per state block (units per second).
struct ProcessNoise {
  double position = 0.0;        // px^2/s
  double velocity = 5000.0;     // (px/s)^2/s
  double theta = 0.0;           // rad^2/s
  double angular_rate = 5.0;    // (rad/s)^2/s
  double shape = 0.5;           // px^2/s
  double offset = 0.1;          // px^2/s
};

struct InitialCovariance {
  double position = 4.0;
  double velocity = 1e4;
  double theta = 0.5;
  double angular_rate = 10.0;
  double shape = 4.0;
  double offset = 2.0;
};

struct FilterConfig {
  std::size_t buffer_length = 20;  // n
  ProcessNoise process_noise;
  InitialCovariance initial_covariance;
  Eigen::Vector2d spawn_lambda{3.0, 1.5};
  double spawn_offset = 1.5;
  /// Multiplies the pseudo-measurement noise; 1 is the nominal model.
  double measurement_noise_scale = 1.0;
  /// The G row joins the update only while beta (px^2) is at most this. Right after spawn
  /// the position covariance is large and 1/(1+beta) would crush G, collapsing lambda.
  double g_beta_limit = 0.1;
  /// Fuse G as two per-axis sums (each observed as n with noise 2n) instead of one. The
  /// scalar G fixes only the overall size, leaving the ratio lambda1/lambda2 free to drift.
  bool split_g = true;
  /// Extra factor on the G noise. Consecutive G values share n - 1 of their n events, so
  /// fusing every one as independent overstates what is known about the shape.
  double g_noise_inflation = 5.0;
  /// Let H update lambda. Its linearisation raises lambda on every event whatever the
  /// residual, so by default the shape is left to G alone.
  bool h_updates_shape = false;

  void validate() const;
};

/// One (prediction, event) pair retained for the G pseudo-measurement.
struct BufferEntry {
  Eigen::Vector2d predicted_position = Eigen::Vector2d::Zero();
  Eigen::Matrix2d shape_inverse = Eigen::Matrix2d::Identity();
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  double covariance_norm = 0.0;  // 2-norm of the predicted position covariance
  Eigen::Vector2d event_position = Eigen::Vector2d::Zero();
  int polarity = 1;
};

/// Fixed-capacity ring of the most recent entries, oldest evicted first.
class FilterBuffers {
 public:
  explicit FilterBuffers(std::size_t capacity = 20);

  void push(const BufferEntry& entry);
  void clear();

  std::size_t size() const { return count_; }
  std::size_t capacity() const { return ring_.size(); }
  bool full() const { return count_ == ring_.size(); }

  /// Upper bound on the stored covariance norms (their maximum).
  double beta() const { return beta_; }

  /// i = 0 is the oldest retained entry.
  const BufferEntry& operator[](std::size_t i) const;

 private:
  std::vector<BufferEntry> ring_;
  std::size_t head_ = 0;  // next slot to write
  std::size_t count_ = 0;
  double beta_ = 0.0;
};

using Matrix2x10 = Eigen::Matrix<double, 2, 10>;
using Matrix3x10 = Eigen::Matrix<double, 3, 10>;
using Matrix4x10 = Eigen::Matrix<double, 4, 10>;
using RowVector10d = Eigen::Matrix<double, 1, 10>;

/// Linear state transition for an elapsed time dt (s).
Matrix10d transition_matrix(double dt);

/// Constant-velocity prediction; covariance F P F^T + Q dt. Throws on dt < 0.
std::pair<BlobState, Matrix10d> predict(const BlobState& state, const Matrix10d& covariance,
                                        double dt, const FilterConfig& config);

Eigen::Vector2d measurement_h(const BlobState& state, const Event& e);

/// G from the buffered shapes and offsets.
double measurement_g(const FilterBuffers& buffers);

/// G with the shape and offset taken from `state`; buffered predictions and events fixed.
/// This is the function the filter linearises.
double measurement_g_at(const BlobState& state, const FilterBuffers& buffers);

/// Analytic dH/dzeta.
Matrix2x10 jacobian_h(const BlobState& state, const Event& e);

/// Analytic dG/dzeta through the current theta, lambda and Delta.
RowVector10d jacobian_g(const BlobState& state, const FilterBuffers& buffers);

/// G split along the current principal axes: (G1, G2) with G1 + G2 = measurement_g_at.
Eigen::Vector2d measurement_g_axes_at(const BlobState& state, const FilterBuffers& buffers);

/// d(G1, G2)/dzeta.
Matrix2x10 jacobian_g_axes(const BlobState& state, const FilterBuffers& buffers);

/// Stacked [dH/dzeta; dG/dzeta].
Matrix3x10 jacobians(const BlobState& state, const Event& e, const FilterBuffers& buffers);

/// 2-norm of the position block of a covariance.
double position_covariance_norm(const Matrix10d& covariance);

enum class UpdateStatus { ok, diverged };

class AebFilter {
 public:
  AebFilter(BlobState state, Matrix10d covariance, TimeUs time, FilterConfig config);

  /// p = xi, v = speed * direction, theta along the direction, q = 0,
  /// lambda and Delta from the configured spawn values.
  static AebFilter spawn(const Detection& detection, const FilterConfig& config);

  /// Propagates to `t`. Throws std::invalid_argument when `t` precedes the filter time.
  void predict_to(TimeUs t);

  /// Fuses one event; predict_to(e.t) must have been called. G is used once the buffer is
  /// full and beta <= g_beta_limit. The (prediction, event) pair is then pushed into the
  /// buffer.
  UpdateStatus update(const Event& e);

  /// Mean state extrapolated to `t` without touching the filter.
  BlobState extrapolate(TimeUs t) const;
  /// Position part of extrapolate(t).
  Eigen::Vector2d extrapolate_position(TimeUs t) const {
    return state_.p + state_.v * to_seconds(t - time_);
  }

  const BlobState& state() const { return state_; }
  const Matrix10d& covariance() const { return covariance_; }
  const FilterBuffers& buffers() const { return buffers_; }
  const FilterConfig& config() const { return config_; }
  TimeUs time() const { return time_; }
  std::size_t updates() const { return updates_; }
  /// Whether the next update would include the G row.
  bool g_active() const { return buffers_.full() && buffers_.beta() <= config_.g_beta_limit; }

 private:
  BlobState state_;
  Matrix10d covariance_;
  TimeUs time_;
  FilterConfig config_;
  FilterBuffers buffers_;
  std::size_t updates_ = 0;
};

}  // namespace aemot
