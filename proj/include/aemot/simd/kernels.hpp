#pragma once

// Data-parallel inner loops used by the classifier, the intensity patch and the
// flow regressions. Every kernel has a scalar reference implementation; wider
// variants are selected once at runtime from what the CPU reports.
//
// Set AEMOT_SIMD=scalar (or avx2) in the environment to force a variant.

#include <cstddef>
#include <string_view>
#include <vector>

namespace aemot::simd {

enum class Isa { scalar, avx2 };

struct AdamCoefficients {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

/// Second moments of weighted 2-vectors: sum w*x*x, sum w*x*y, sum w*y*y, sum w.
struct WeightedMoments {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;
  double weight = 0.0;
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  double (*max_abs)(const double* x, std::size_t n);
  // out = 0.5 + 0.5 * clamp(x * inv_norm, -1, 1)
  void (*normalize_signed)(const double* x, double inv_norm, double* out, std::size_t n);
  void (*adam_step)(double* param, const double* grad, double* m, double* v, std::size_t n,
                    const AdamCoefficients& c);
  WeightedMoments (*weighted_moments)(const double* x, const double* y, const double* w,
                                      std::size_t n);
};

const KernelTable& scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_kernels();
#endif

bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);
std::vector<Isa> supported_isas();

/// Kernel table for a specific ISA; throws std::invalid_argument if the CPU lacks it.
const KernelTable& kernels_for(Isa isa);

/// Active kernel table. Chosen on first call (environment override, else widest supported).
const KernelTable& kernels();
Isa active_isa();
void set_active_isa(Isa isa);

}  // namespace aemot::simd
