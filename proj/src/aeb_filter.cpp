#include "aemot/aeb_filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/LU>

namespace aemot {

namespace si = state_index;

void FilterConfig::validate() const {
  if (buffer_length < 2) throw std::invalid_argument("filter.buffer_length must be >= 2");
  const auto& q = process_noise;
  for (double v : {q.position, q.velocity, q.theta, q.angular_rate, q.shape, q.offset}) {
    if (!(v >= 0.0)) throw std::invalid_argument("filter.process_noise entries must be >= 0");
  }
  const auto& p = initial_covariance;
  for (double v : {p.position, p.velocity, p.theta, p.angular_rate, p.shape, p.offset}) {
    if (!(v > 0.0)) throw std::invalid_argument("filter.initial_covariance entries must be > 0");
  }
  if (!(spawn_lambda.x() >= kLambdaFloor) || !(spawn_lambda.y() >= kLambdaFloor)) {
    throw std::invalid_argument("filter.spawn_lambda must be >= 0.5");
  }
  if (!(measurement_noise_scale > 0.0)) {
    throw std::invalid_argument("filter.measurement_noise_scale must be > 0");
  }
  if (!(g_beta_limit > 0.0)) throw std::invalid_argument("filter.g_beta_limit must be > 0");
  if (!(g_noise_inflation >= 1.0)) {
    throw std::invalid_argument("filter.g_noise_inflation must be >= 1");
  }
}

// ---------------------------------------------------------------------------

FilterBuffers::FilterBuffers(std::size_t capacity) : ring_(capacity) {
  if (capacity == 0) throw std::invalid_argument("filter buffer capacity must be > 0");
}

void FilterBuffers::push(const BufferEntry& entry) {
  ring_[head_] = entry;
  head_ = (head_ + 1) % ring_.size();
  count_ = std::min(count_ + 1, ring_.size());
  beta_ = 0.0;
  for (std::size_t i = 0; i < count_; ++i) beta_ = std::max(beta_, (*this)[i].covariance_norm);
}

void FilterBuffers::clear() {
  head_ = 0;
  count_ = 0;
  beta_ = 0.0;
}

const BufferEntry& FilterBuffers::operator[](std::size_t i) const {
  const std::size_t oldest = (head_ + ring_.size() - count_) % ring_.size();
  return ring_[(oldest + i) % ring_.size()];
}

// ---------------------------------------------------------------------------

Matrix10d transition_matrix(double dt) {
  Matrix10d f = Matrix10d::Identity();
  f(si::px, si::vx) = dt;
  f(si::py, si::vy) = dt;
  f(si::theta, si::q) = dt;
  return f;
}

namespace {

Vector10d process_noise_diagonal(const ProcessNoise& q) {
  Vector10d d;
  d << q.position, q.position, q.velocity, q.velocity, q.theta, q.angular_rate, q.shape, q.shape,
      q.offset, q.offset;
  return d;
}

Vector10d initial_covariance_diagonal(const InitialCovariance& p) {
  Vector10d d;
  d << p.position, p.position, p.velocity, p.velocity, p.theta, p.angular_rate, p.shape, p.shape,
      p.offset, p.offset;
  return d;
}

void symmetrize(Matrix10d& p) { p = 0.5 * (p + p.transpose()).eval(); }

BlobState advance_mean(const BlobState& s, double dt) {
  BlobState out = s;
  out.p += s.v * dt;
  out.theta = wrap_half_turn(s.theta + s.q * dt);
  return out;
}

// d(Lambda^-1)/d theta for Lambda^-1 = R diag(1/l1, 1/l2) R^T.
Eigen::Matrix2d shape_inverse_dtheta(double theta, const Eigen::Vector2d& lambda) {
  const double k = 1.0 / lambda.x() - 1.0 / lambda.y();
  const double s2 = std::sin(2.0 * theta);
  const double c2 = std::cos(2.0 * theta);
  Eigen::Matrix2d d;
  d(0, 0) = -s2 * k;
  d(1, 1) = s2 * k;
  d(0, 1) = d(1, 0) = c2 * k;
  return d;
}

double g_sum(const FilterBuffers& buffers, const Eigen::Matrix2d* shape_inverse,
             const Eigen::Vector2d* offset) {
  const double scale = 1.0 / (1.0 + buffers.beta());
  double g = 0.0;
  for (std::size_t j = 0; j < buffers.size(); ++j) {
    const BufferEntry& b = buffers[j];
    const Eigen::Matrix2d& li = shape_inverse ? *shape_inverse : b.shape_inverse;
    const Eigen::Vector2d& d = offset ? *offset : b.offset;
    const Eigen::Vector2d r =
        b.event_position - static_cast<double>(b.polarity) * d - b.predicted_position;
    g += (scale * (li * r)).squaredNorm();
  }
  return g;
}

}  // namespace

std::pair<BlobState, Matrix10d> predict(const BlobState& state, const Matrix10d& covariance,
                                        double dt, const FilterConfig& config) {
  if (dt < 0.0) throw std::invalid_argument("negative prediction interval (event time regression)");
  if (dt == 0.0) return {state, covariance};
  // F is the identity plus dt couplings, so F P F^T is a few row and column updates.
  constexpr std::array<std::pair<int, int>, 3> kCoupled{
      {{si::px, si::vx}, {si::py, si::vy}, {si::theta, si::q}}};
  Matrix10d p = covariance;
  for (auto [a, b] : kCoupled) p.row(a) += dt * p.row(b);
  for (auto [a, b] : kCoupled) p.col(a) += dt * p.col(b);
  p.diagonal() += process_noise_diagonal(config.process_noise) * dt;
  symmetrize(p);
  return {advance_mean(state, dt), p};
}

Eigen::Vector2d measurement_h(const BlobState& state, const Event& e) {
  const Eigen::Vector2d xi(e.x, e.y);
  return shape_matrix_inverse(state.theta, state.lambda) * blob_residual(state, xi, e.polarity);
}

double measurement_g(const FilterBuffers& buffers) { return g_sum(buffers, nullptr, nullptr); }

double measurement_g_at(const BlobState& state, const FilterBuffers& buffers) {
  const Eigen::Matrix2d li = shape_matrix_inverse(state.theta, state.lambda);
  return g_sum(buffers, &li, &state.delta);
}

Matrix2x10 jacobian_h(const BlobState& state, const Event& e) {
  const Eigen::Vector2d xi(e.x, e.y);
  const Eigen::Vector2d r = blob_residual(state, xi, e.polarity);
  const Eigen::Matrix2d li = shape_matrix_inverse(state.theta, state.lambda);
  const double c = std::cos(state.theta);
  const double s = std::sin(state.theta);
  const Eigen::Vector2d axis1(c, s);
  const Eigen::Vector2d axis2(-s, c);
  const double l1 = state.lambda.x();
  const double l2 = state.lambda.y();

  Matrix2x10 j = Matrix2x10::Zero();
  j.block<2, 2>(0, si::px) = -li;
  j.col(si::theta) = shape_inverse_dtheta(state.theta, state.lambda) * r;
  j.col(si::lambda1) = -(axis1.dot(r) / (l1 * l1)) * axis1;
  j.col(si::lambda2) = -(axis2.dot(r) / (l2 * l2)) * axis2;
  j.block<2, 2>(0, si::delta1) = -static_cast<double>(e.polarity) * li;
  return j;
}

RowVector10d jacobian_g(const BlobState& state, const FilterBuffers& buffers) {
  // G = s^2 sum |L r_j|^2 with L = Lambda^-1 and r_j = xi_j - p_j Delta - p_j^-, so every
  // derivative reduces to the moments M = sum r r^T and m = sum p_j r_j.
  const double scale = 1.0 / (1.0 + buffers.beta());
  Eigen::Matrix2d moment = Eigen::Matrix2d::Zero();
  Eigen::Vector2d signed_sum = Eigen::Vector2d::Zero();
  for (std::size_t j = 0; j < buffers.size(); ++j) {
    const BufferEntry& b = buffers[j];
    const double pol = static_cast<double>(b.polarity);
    const Eigen::Vector2d r = b.event_position - pol * state.delta - b.predicted_position;
    moment.noalias() += r * r.transpose();
    signed_sum += pol * r;
  }
  const Eigen::Matrix2d li = shape_matrix_inverse(state.theta, state.lambda);
  const double c = std::cos(state.theta);
  const double s = std::sin(state.theta);
  const Eigen::Vector2d axis1(c, s);
  const Eigen::Vector2d axis2(-s, c);
  const double l1 = state.lambda.x();
  const double l2 = state.lambda.y();
  const double k = 2.0 * scale * scale;
  const Eigen::Matrix2d lm = li * moment;

  RowVector10d row = RowVector10d::Zero();
  row[si::theta] = k * (lm * shape_inverse_dtheta(state.theta, state.lambda)).trace();
  row[si::lambda1] = -k * axis1.dot(lm * axis1) / (l1 * l1);
  row[si::lambda2] = -k * axis2.dot(lm * axis2) / (l2 * l2);
  row.segment<2>(si::delta1) = (-k * (li * li) * signed_sum).transpose();
  return row;
}

namespace {

struct AxisMoments {
  double scale2 = 0.0;       // (1 / (1 + beta))^2
  Eigen::Matrix2d moment;    // sum r r^T
  Eigen::Vector2d signed_sum;  // sum p_j r_j
};

AxisMoments axis_moments(const BlobState& state, const FilterBuffers& buffers) {
  AxisMoments m;
  const double scale = 1.0 / (1.0 + buffers.beta());
  m.scale2 = scale * scale;
  m.moment.setZero();
  m.signed_sum.setZero();
  for (std::size_t j = 0; j < buffers.size(); ++j) {
    const BufferEntry& b = buffers[j];
    const double pol = static_cast<double>(b.polarity);
    const Eigen::Vector2d r = b.event_position - pol * state.delta - b.predicted_position;
    m.moment.noalias() += r * r.transpose();
    m.signed_sum += pol * r;
  }
  return m;
}

}  // namespace

Eigen::Vector2d measurement_g_axes_at(const BlobState& state, const FilterBuffers& buffers) {
  const AxisMoments m = axis_moments(state, buffers);
  const Eigen::Vector2d a1(std::cos(state.theta), std::sin(state.theta));
  const Eigen::Vector2d a2(-a1.y(), a1.x());
  const double l1 = state.lambda.x();
  const double l2 = state.lambda.y();
  return {m.scale2 * a1.dot(m.moment * a1) / (l1 * l1),
          m.scale2 * a2.dot(m.moment * a2) / (l2 * l2)};
}

Matrix2x10 jacobian_g_axes(const BlobState& state, const FilterBuffers& buffers) {
  const AxisMoments m = axis_moments(state, buffers);
  const Eigen::Vector2d a1(std::cos(state.theta), std::sin(state.theta));
  const Eigen::Vector2d a2(-a1.y(), a1.x());
  const double l1 = state.lambda.x();
  const double l2 = state.lambda.y();
  const double s11 = a1.dot(m.moment * a1);
  const double s22 = a2.dot(m.moment * a2);
  const double s12 = a1.dot(m.moment * a2);
  const double k = m.scale2;
  // da1/dtheta = a2 and da2/dtheta = -a1.
  Matrix2x10 j = Matrix2x10::Zero();
  j(0, si::theta) = 2.0 * k * s12 / (l1 * l1);
  j(1, si::theta) = -2.0 * k * s12 / (l2 * l2);
  j(0, si::lambda1) = -2.0 * k * s11 / (l1 * l1 * l1);
  j(1, si::lambda2) = -2.0 * k * s22 / (l2 * l2 * l2);
  j.block<1, 2>(0, si::delta1) = (-2.0 * k * a1.dot(m.signed_sum) / (l1 * l1)) * a1.transpose();
  j.block<1, 2>(1, si::delta1) = (-2.0 * k * a2.dot(m.signed_sum) / (l2 * l2)) * a2.transpose();
  return j;
}

Matrix3x10 jacobians(const BlobState& state, const Event& e, const FilterBuffers& buffers) {
  Matrix3x10 c;
  c.topRows<2>() = jacobian_h(state, e);
  c.row(2) = jacobian_g(state, buffers);
  return c;
}

double position_covariance_norm(const Matrix10d& covariance) {
  const double a = covariance(si::px, si::px);
  const double b = covariance(si::px, si::py);
  const double d = covariance(si::py, si::py);
  return 0.5 * (a + d) + std::hypot(0.5 * (a - d), b);
}

// ---------------------------------------------------------------------------

AebFilter::AebFilter(BlobState state, Matrix10d covariance, TimeUs time, FilterConfig config)
    : state_(std::move(state)),
      covariance_(std::move(covariance)),
      time_(time),
      config_(std::move(config)),
      buffers_(config_.buffer_length) {
  config_.validate();
}

AebFilter AebFilter::spawn(const Detection& detection, const FilterConfig& config) {
  BlobState s;
  const Eigen::Vector2d dir = detection.direction.normalized();
  s.p = detection.position;
  s.v = detection.speed * dir;
  s.theta = wrap_half_turn(std::atan2(dir.y(), dir.x()));
  s.q = 0.0;
  s.lambda = config.spawn_lambda;
  s.delta = config.spawn_offset * dir;
  Matrix10d p = Matrix10d::Zero();
  p.diagonal() = initial_covariance_diagonal(config.initial_covariance);
  return AebFilter(s, p, detection.t, config);
}

void AebFilter::predict_to(TimeUs t) {
  if (t < time_) throw std::invalid_argument("filter prediction into the past");
  if (t == time_) return;
  auto [s, p] = predict(state_, covariance_, to_seconds(t - time_), config_);
  state_ = s;
  covariance_ = p;
  time_ = t;
}

BlobState AebFilter::extrapolate(TimeUs t) const {
  return advance_mean(state_, to_seconds(t - time_));
}

namespace {

template <int M>
bool fuse(Vector10d& x, Matrix10d& p, const Eigen::Matrix<double, M, 10>& c,
          const Eigen::Matrix<double, M, 1>& innovation,
          const Eigen::Matrix<double, M, M>& r) {
  // Fixed 10x10 products are faster coefficient-wise than through the blocked GEMM path.
  const Eigen::Matrix<double, 10, M> pct = p.lazyProduct(c.transpose());
  const Eigen::Matrix<double, M, M> s = c.lazyProduct(pct) + r;
  const Eigen::Matrix<double, M, M> s_inv = s.inverse();
  const Eigen::Matrix<double, 10, M> k = pct * s_inv;
  x += k * innovation;
  const Matrix10d i_kc = Matrix10d::Identity() - k.lazyProduct(c);
  const Matrix10d left = i_kc.lazyProduct(p);
  p = left.lazyProduct(i_kc.transpose()) + (k * r).lazyProduct(k.transpose());
  symmetrize(p);
  return x.allFinite() && p.allFinite();
}

}  // namespace

UpdateStatus AebFilter::update(const Event& e) {
  if (e.t != time_) predict_to(e.t);
  const BlobState prior = state_;
  const Matrix10d prior_cov = covariance_;
  Vector10d x = state_.to_vector();
  const double noise = config_.measurement_noise_scale;
  const Eigen::Vector2d h = measurement_h(state_, e);
  bool finite = false;
  Matrix2x10 ch = jacobian_h(state_, e);
  // H's linearisation always pushes lambda up; G (when active) is what holds it down.
  if (!g_active() || !config_.h_updates_shape) {
    ch.col(si::lambda1).setZero();
    ch.col(si::lambda2).setZero();
  }
  if (g_active() && config_.split_g) {
    const double n = static_cast<double>(buffers_.size());
    const Eigen::Vector2d g = measurement_g_axes_at(state_, buffers_);
    Matrix4x10 c;
    c.topRows<2>() = ch;
    c.bottomRows<2>() = jacobian_g_axes(state_, buffers_);
    const Eigen::Vector4d innovation(-h.x(), -h.y(), n - g.x(), n - g.y());
    const double rg = 2.0 * n * noise * config_.g_noise_inflation;
    const Eigen::Vector4d r_diag(noise, noise, rg, rg);
    finite = fuse<4>(x, covariance_, c, innovation, r_diag.asDiagonal().toDenseMatrix());
  } else if (g_active()) {
    const double n = static_cast<double>(buffers_.size());
    const double g = measurement_g_at(state_, buffers_);
    Matrix3x10 c;
    c.topRows<2>() = ch;
    c.row(2) = jacobian_g(state_, buffers_);
    const Eigen::Vector3d innovation(-h.x(), -h.y(), 2.0 * n - g);
    const Eigen::Vector3d r_diag(noise, noise, 4.0 * n * noise * config_.g_noise_inflation);
    finite = fuse<3>(x, covariance_, c, innovation, r_diag.asDiagonal().toDenseMatrix());
  } else {
    const Eigen::Matrix2d r = noise * Eigen::Matrix2d::Identity();
    finite = fuse<2>(x, covariance_, ch, Eigen::Vector2d(-h), r);
  }
  if (!finite || !h.allFinite()) return UpdateStatus::diverged;

  state_ = BlobState::from_vector(x);
  state_.lambda = state_.lambda.cwiseMax(kLambdaFloor);
  state_.theta = wrap_half_turn(state_.theta);

  BufferEntry entry;
  entry.predicted_position = prior.p;
  entry.shape_inverse = shape_matrix_inverse(prior.theta, prior.lambda);
  entry.offset = prior.delta;
  entry.covariance_norm = position_covariance_norm(prior_cov);
  entry.event_position = {static_cast<double>(e.x), static_cast<double>(e.y)};
  entry.polarity = e.polarity;
  buffers_.push(entry);
  ++updates_;
  return UpdateStatus::ok;
}

}  // namespace aemot
