#include "aemot/simd/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace aemot::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double max_abs_scalar(const double* x, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

void normalize_signed_scalar(const double* x, double inv_norm, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::clamp(x[i] * inv_norm, -1.0, 1.0);
    out[i] = 0.5 + 0.5 * r;
  }
}

void adam_step_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoefficients& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

WeightedMoments weighted_moments_scalar(const double* x, const double* y, const double* w,
                                        std::size_t n) {
  WeightedMoments s;
  for (std::size_t i = 0; i < n; ++i) {
    const double wx = w[i] * x[i];
    s.xx += wx * x[i];
    s.xy += wx * y[i];
    s.yy += w[i] * y[i] * y[i];
    s.weight += w[i];
  }
  return s;
}

constexpr KernelTable kScalarTable{
    Isa::scalar,          dot_scalar,           axpy_scalar,
    scale_scalar,         max_abs_scalar,       normalize_signed_scalar,
    adam_step_scalar,     weighted_moments_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace aemot::simd
