#include <doctest.h>

#include <random>

#include "aemot/flowfield.hpp"
#include "oracles.hpp"

using namespace aemot;

TEST_CASE("surface keeps the latest time per pixel") {
  SurfaceOfActiveEvents s({8, 8});
  s.update({10, 3, 3, 1});
  CHECK(s.at(3, 3) == 10);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      if (x != 3 || y != 3) CHECK_FALSE(s.at(x, y).has_value());
    }
  }
  s.update({20, 3, 3, -1});
  CHECK(s.at(3, 3) == 20);
  s.update({25, 4, 3, 1});
  CHECK(s.at(3, 3) == 20);
  CHECK(s.at(4, 3) == 25);
  CHECK_THROWS_AS(s.update({30, 8, 0, 1}), std::out_of_range);
}

TEST_CASE("per-polarity surfaces are separate") {
  SurfaceOfActiveEvents s({8, 8}, true);
  s.update({10, 1, 1, 1});
  s.update({12, 1, 1, -1});
  CHECK(s.at(1, 1, 1) == 10);
  CHECK(s.at(1, 1, -1) == 12);
}

TEST_CASE("flow field store and overwrite") {
  FlowDirectionField f({8, 8});
  const Eigen::Vector2d d = Eigen::Vector2d(1, 1).normalized();
  f.update(2, 2, d, 5);
  REQUIRE(f.at(2, 2).has_value());
  CHECK(f.at(2, 2)->direction == d);
  CHECK(f.at(2, 2)->t == 5);
  f.update(2, 2, {1, 0}, 9);
  CHECK(f.at(2, 2)->direction == Eigen::Vector2d(1, 0));
  CHECK(f.at(2, 2)->t == 9);
  CHECK_FALSE(f.at(3, 2).has_value());
  CHECK_THROWS_AS(f.update(1, 1, {2, 0}, 10), std::invalid_argument);
  CHECK_THROWS_AS(f.update(1, 1, {0, -1}, 10), std::invalid_argument);
}

TEST_CASE("sign rule") {
  CHECK(sign_normalize({0.6, -0.8}) == Eigen::Vector2d(-0.6, 0.8));
  CHECK(sign_normalize({-1, 0}) == Eigen::Vector2d(1, 0));
  CHECK(is_sign_normalized({1, 0}));
  CHECK_FALSE(is_sign_normalized({-1, 0}));
  CHECK(smallest_eigenvector(1, 0, 1) == Eigen::Vector2d(1, 0));
}

namespace {

Event paint_line(SurfaceOfActiveEvents& s, const std::vector<std::pair<int, int>>& px) {
  for (auto [x, y] : px) s.update({1000, x, y, 1});
  const Event e{1000, 10, 10, 1};
  s.update(e);
  return e;
}

}  // namespace

TEST_CASE("collinear pixels give the line direction") {
  FlowParams p;
  SurfaceOfActiveEvents diag({20, 20});
  const Event e = paint_line(diag, {{7, 7}, {8, 8}, {9, 9}, {11, 11}, {12, 12}});
  const auto d = estimate_flow_direction(diag, e, p);
  REQUIRE(d.has_value());
  CHECK(d->x() == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(d->y() == doctest::Approx(1 / std::sqrt(2.0)));

  SurfaceOfActiveEvents horiz({20, 20});
  const Event h = paint_line(horiz, {{7, 10}, {8, 10}, {9, 10}, {11, 10}, {13, 10}});
  const auto dh = estimate_flow_direction(horiz, h, p);
  REQUIRE(dh.has_value());
  CHECK(dh->x() == doctest::Approx(1.0));
  CHECK(dh->y() == 0.0);
}

TEST_CASE("too few neighbours and stale pixels give nothing") {
  FlowParams p;
  SurfaceOfActiveEvents s({20, 20});
  const Event e = paint_line(s, {{8, 8}, {9, 9}, {11, 11}});
  CHECK_FALSE(estimate_flow_direction(s, e, p).has_value());
  const Event late{1000 + to_micros(p.max_staleness) + 1, 10, 10, 1};
  s.update({1000, 12, 12, 1});
  s.update(late);
  CHECK_FALSE(estimate_flow_direction(s, late, p).has_value());
}

TEST_CASE("flow direction matches the exhaustive-angle oracle") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ang(0, oracle::kPi), age(0, 0.05), u(0, 1);
  std::normal_distribution<double> jitter(0, 0.8);
  FlowParams p;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    SurfaceOfActiveEvents s({21, 21});
    const TimeUs now = 100000;
    const double a = ang(rng);
    for (int k = -3; k <= 3; ++k) {
      for (int rep = 0; rep < 2; ++rep) {
        const int x = 10 + static_cast<int>(std::lround(k * std::cos(a) + jitter(rng) * 0.5));
        const int y = 10 + static_cast<int>(std::lround(k * std::sin(a) + jitter(rng) * 0.5));
        if (std::abs(x - 10) > 3 || std::abs(y - 10) > 3) continue;
        s.update({now - to_micros(age(rng)), x, y, 1});
      }
    }
    const Event e{now, 10, 10, 1};
    s.update(e);
    PatchSamples patch;
    collect_patch(s, e, p, patch);
    if (patch.size() < 4) continue;
    for (std::size_t i = 0; i < patch.size(); ++i) {
      CHECK(patch.weight[i] == doctest::Approx(std::exp(-2 * p.alpha * patch.age[i])));
    }
    const auto d = estimate_flow_direction(s, e, p);
    REQUIRE(d.has_value());
    const double normal = oracle::brute_force_normal_angle(patch.ax, patch.ay, patch.weight);
    const Eigen::Vector2d line(-std::sin(normal), std::cos(normal));
    worst = std::max(worst, oracle::axis_angle_deg(line, *d));
  }
  CHECK(worst < 0.1);
}

TEST_CASE("dominant normal of a uniform field is orthogonal to it") {
  FlowParams p;
  FlowDirectionField f({20, 20});
  const Eigen::Vector2d d = sign_normalize(Eigen::Vector2d(0.6, -0.8));
  for (int y = 8; y <= 12; ++y) {
    for (int x = 8; x <= 12; ++x) f.update(x, y, d, 500);
  }
  const auto n = estimate_dominant_direction(f, {500, 10, 10, 1}, p);
  REQUIRE(n.has_value());
  CHECK(std::abs(n->dot(d)) < 1e-12);
  CHECK(is_sign_normalized(*n));
}

TEST_CASE("two orthogonal populations of equal weight tie deterministically") {
  FlowParams p;
  FlowDirectionField f({20, 20});
  f.update(9, 10, {1, 0}, 500);
  f.update(11, 10, {0, 1}, 500);
  f.update(10, 9, {1, 0}, 500);
  f.update(10, 11, {0, 1}, 500);
  const auto n = estimate_dominant_direction(f, {500, 10, 10, 1}, p);
  REQUIRE(n.has_value());
  CHECK(*n == Eigen::Vector2d(1, 0));
}

TEST_CASE("dominant normal matches the exhaustive-angle oracle") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> ang(0, oracle::kPi), age(0, 0.05);
  std::normal_distribution<double> spread(0, 0.3);
  FlowParams p;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    FlowDirectionField f({21, 21});
    const TimeUs now = 100000;
    const double a = ang(rng);
    std::vector<double> vx, vy, w;
    for (int y = 7; y <= 13; ++y) {
      for (int x = 7; x <= 13; ++x) {
        if (x == 10 && y == 10) continue;
        const double b = a + spread(rng);
        const Eigen::Vector2d d = sign_normalize(Eigen::Vector2d(std::cos(b), std::sin(b)));
        const TimeUs t = now - to_micros(age(rng));
        f.update(x, y, d, t);
        vx.push_back(d.x());
        vy.push_back(d.y());
        w.push_back(std::exp(-2 * p.alpha * to_seconds(now - t)));
      }
    }
    const auto n = estimate_dominant_direction(f, {now, 10, 10, 1}, p);
    REQUIRE(n.has_value());
    worst = std::max(worst, oracle::axis_angle_deg(oracle::brute_force_normal_angle(vx, vy, w), *n));
  }
  CHECK(worst < 0.1);
}

TEST_CASE("closed-form eigenvector agrees with the oracle on random matrices") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> ax, ay, w;
    double a = 0, b = 0, c = 0;
    for (int k = 0; k < 6; ++k) {
      ax.push_back(n(rng));
      ay.push_back(n(rng));
      w.push_back(std::abs(n(rng)));
      a += w.back() * ax.back() * ax.back();
      b += w.back() * ax.back() * ay.back();
      c += w.back() * ay.back() * ay.back();
    }
    const double gap = std::sqrt((a - c) * (a - c) + 4 * b * b);
    if (gap < 0.05 * (a + c)) continue;  // nearly isotropic: the direction is ill-defined
    const auto u = smallest_eigenvector(a, b, c);
    CHECK(u.norm() == doctest::Approx(1.0));
    CHECK(oracle::axis_angle_deg(oracle::brute_force_normal_angle(ax, ay, w), u) < 0.1);
  }
}
