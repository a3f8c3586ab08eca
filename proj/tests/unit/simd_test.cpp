#include <doctest.h>

#include <random>
#include <stdexcept>

#include "aemot/simd/kernels.hpp"

using namespace aemot::simd;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -2, double hi = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void check_close(double a, double b, double scale) {
  CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, scale));
}

void compare(const KernelTable& ref, const KernelTable& wide) {
  std::mt19937_64 rng(42);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 31u, 64u, 129u, 784u}) {
    CAPTURE(n);
    const auto a = random_vector(n, rng), b = random_vector(n, rng);
    check_close(ref.dot(a.data(), b.data(), n), wide.dot(a.data(), b.data(), n), static_cast<double>(n));
    check_close(ref.max_abs(a.data(), n), wide.max_abs(a.data(), n), 1.0);

    auto y1 = b, y2 = b;
    ref.axpy(0.37, a.data(), y1.data(), n);
    wide.axpy(0.37, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) check_close(y1[i], y2[i], 1.0);

    auto s1 = a, s2 = a;
    ref.scale(-1.7, s1.data(), n);
    wide.scale(-1.7, s2.data(), n);
    CHECK(s1 == s2);

    std::vector<double> o1(n), o2(n);
    ref.normalize_signed(a.data(), 0.8, o1.data(), n);
    wide.normalize_signed(a.data(), 0.8, o2.data(), n);
    for (std::size_t i = 0; i < n; ++i) check_close(o1[i], o2[i], 1.0);

    const auto w = random_vector(n, rng, 0, 1);
    const auto m1 = ref.weighted_moments(a.data(), b.data(), w.data(), n);
    const auto m2 = wide.weighted_moments(a.data(), b.data(), w.data(), n);
    check_close(m1.xx, m2.xx, static_cast<double>(n));
    check_close(m1.xy, m2.xy, static_cast<double>(n));
    check_close(m1.yy, m2.yy, static_cast<double>(n));
    check_close(m1.weight, m2.weight, static_cast<double>(n));

    auto p1 = a, p2 = a, mm1 = b, mm2 = b;
    auto v1 = random_vector(n, rng, 0, 1);
    auto v2 = v1;
    const AdamCoefficients c{1e-3, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
    ref.adam_step(p1.data(), w.data(), mm1.data(), v1.data(), n, c);
    wide.adam_step(p2.data(), w.data(), mm2.data(), v2.data(), n, c);
    for (std::size_t i = 0; i < n; ++i) {
      check_close(p1[i], p2[i], 1.0);
      check_close(mm1[i], mm2[i], 1.0);
      check_close(v1[i], v2[i], 1.0);
    }
  }
}

}  // namespace

TEST_CASE("scalar kernels behave as written") {
  const auto& k = scalar_kernels();
  const double a[] = {1, -2, 3}, b[] = {4, 5, -6};
  CHECK(k.dot(a, b, 3) == -24);
  CHECK(k.max_abs(a, 3) == 3);
  double out[3];
  k.normalize_signed(a, 0.5, out, 3);
  CHECK(out[0] == 0.75);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 1.0);
  const double w[] = {1, 1, 2};
  const auto m = k.weighted_moments(a, b, w, 3);
  CHECK(m.xx == 1 + 4 + 18);
  CHECK(m.xy == 4 - 10 - 36);
  CHECK(m.weight == 4);
}

TEST_CASE("every supported variant agrees with the scalar reference") {
  const auto isas = supported_isas();
  REQUIRE_FALSE(isas.empty());
  CHECK(isas.front() == Isa::scalar);
  for (Isa isa : isas) {
    CAPTURE(isa_name(isa));
    compare(scalar_kernels(), kernels_for(isa));
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (!isa_supported(Isa::avx2)) {
    MESSAGE("AVX2 not available on this CPU; only the scalar table was exercised");
  }
#endif
}

TEST_CASE("variant selection") {
  const Isa before = active_isa();
  set_active_isa(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(&kernels() == &scalar_kernels());
  set_active_isa(before);
  CHECK(isa_name(Isa::scalar) == "scalar");
  CHECK(isa_name(Isa::avx2) == "avx2");
  if (!isa_supported(Isa::avx2)) CHECK_THROWS_AS(kernels_for(Isa::avx2), std::invalid_argument);
}
