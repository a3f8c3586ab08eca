// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.
#include "aemot/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace aemot::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(s, s);
  return _mm_cvtsd_f64(_mm_add_sd(s, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

double max_abs_avx2(const double* x, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    m = _mm256_max_pd(m, _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(x + i)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  double r = lanes[0];
  for (int k = 1; k < 4; ++k) r = lanes[k] > r ? lanes[k] : r;
  for (; i < n; ++i) {
    const double a = std::abs(x[i]);
    r = a > r ? a : r;
  }
  return r;
}

void normalize_signed_avx2(const double* x, double inv_norm, double* out, std::size_t n) {
  const __m256d vinv = _mm256_set1_pd(inv_norm);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d neg_one = _mm256_set1_pd(-1.0);
  const __m256d half = _mm256_set1_pd(0.5);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = _mm256_mul_pd(_mm256_loadu_pd(x + i), vinv);
    r = _mm256_min_pd(_mm256_max_pd(r, neg_one), one);
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(half, r, half));
  }
  for (; i < n; ++i) {
    double r = x[i] * inv_norm;
    r = r < -1.0 ? -1.0 : (r > 1.0 ? 1.0 : r);
    out[i] = 0.5 + 0.5 * r;
  }
}

void adam_step_avx2(double* param, const double* grad, double* m, double* v, std::size_t n,
                    const AdamCoefficients& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d inv_c1 = _mm256_set1_pd(1.0 / c.bias_correction1);
  const __m256d inv_c2 = _mm256_set1_pd(1.0 / c.bias_correction2);
  const __m256d lr = _mm256_set1_pd(c.learning_rate);
  const __m256d eps = _mm256_set1_pd(c.epsilon);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(omb1, g));
    const __m256d vi = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i),
                                       _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, inv_c2)), eps);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, _mm256_mul_pd(mi, inv_c1)), denom);
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    const double gi = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * (gi * gi);
    param[i] -= c.learning_rate * (m[i] / c.bias_correction1) /
                (std::sqrt(v[i] / c.bias_correction2) + c.epsilon);
  }
}

WeightedMoments weighted_moments_avx2(const double* x, const double* y, const double* w,
                                      std::size_t n) {
  __m256d sxx = _mm256_setzero_pd();
  __m256d sxy = _mm256_setzero_pd();
  __m256d syy = _mm256_setzero_pd();
  __m256d sw = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    const __m256d vw = _mm256_loadu_pd(w + i);
    const __m256d wx = _mm256_mul_pd(vw, vx);
    sxx = _mm256_fmadd_pd(wx, vx, sxx);
    sxy = _mm256_fmadd_pd(wx, vy, sxy);
    syy = _mm256_fmadd_pd(_mm256_mul_pd(vw, vy), vy, syy);
    sw = _mm256_add_pd(sw, vw);
  }
  WeightedMoments s{hsum(sxx), hsum(sxy), hsum(syy), hsum(sw)};
  for (; i < n; ++i) {
    const double wx = w[i] * x[i];
    s.xx += wx * x[i];
    s.xy += wx * y[i];
    s.yy += w[i] * y[i] * y[i];
    s.weight += w[i];
  }
  return s;
}

constexpr KernelTable kAvx2Table{
    Isa::avx2,          dot_avx2,           axpy_avx2,
    scale_avx2,         max_abs_avx2,       normalize_signed_avx2,
    adam_step_avx2,     weighted_moments_avx2,
};

}  // namespace

const KernelTable& avx2_kernels() { return kAvx2Table; }

}  // namespace aemot::simd
