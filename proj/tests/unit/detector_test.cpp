#include <doctest.h>

#include "aemot/detector.hpp"
#include "aemot/scene.hpp"
#include "oracles.hpp"

using namespace aemot;

namespace {

// Horizontal streak through (10, 10) so the local flow at the centre is (1, 0).
SurfaceOfActiveEvents streak() {
  SurfaceOfActiveEvents s({21, 21});
  for (int x = 7; x <= 13; ++x) s.update({1000, x, 10, 1});
  return s;
}

void fill_field(FlowDirectionField& f, const Eigen::Vector2d& d) {
  for (int y = 7; y <= 13; ++y) {
    for (int x = 7; x <= 13; ++x) f.update(x, y, d, 1000);
  }
}

}  // namespace

TEST_CASE("flow parallel to the surrounding field is a detection") {
  const auto s = streak();
  FlowDirectionField f({21, 21});
  fill_field(f, {1, 0});
  const auto d = process_unassociated_event({1000, 10, 10, 1}, s, f, FlowParams{}, DetectorParams{});
  REQUIRE(d.has_value());
  CHECK(d->correlation == doctest::Approx(0.0));
  CHECK(d->position == Eigen::Vector2d(10, 10));
  CHECK(std::abs(d->direction.y()) < 1e-12);
}

TEST_CASE("flow across the surrounding field is not") {
  const auto s = streak();
  FlowDirectionField f({21, 21});
  fill_field(f, {0, 1});
  CHECK_FALSE(process_unassociated_event({1000, 10, 10, 1}, s, f, FlowParams{}, DetectorParams{}));
  CHECK(detection_correlation({1, 0}, {1, 0}) == 1.0);
}

TEST_CASE("speed sign follows the time gradient") {
  PatchSamples p;
  for (int k = -3; k <= 3; ++k) {
    if (k == 0) continue;
    p.ax.push_back(k);
    p.ay.push_back(0);
    p.age.push_back((3 - k) * 0.002);  // newer along +x
    p.weight.push_back(1.0);
  }
  DetectorParams params;
  const auto fwd = estimate_initial_speed(p, {1, 0}, params);
  CHECK(fwd.direction == Eigen::Vector2d(1, 0));
  CHECK(fwd.speed == doctest::Approx(500.0));

  for (auto& a : p.age) a = 0.012 - a;  // newer along -x
  const auto back = estimate_initial_speed(p, {1, 0}, params);
  CHECK(back.direction == Eigen::Vector2d(-1, 0));
  CHECK(back.speed == doctest::Approx(500.0));

  for (auto& a : p.age) a = 0.004;  // flat: default speed
  CHECK(estimate_initial_speed(p, {1, 0}, params).speed == params.default_speed);
}

TEST_CASE("speed is clamped to the configured range") {
  PatchSamples p;
  for (int k = 1; k <= 4; ++k) {
    p.ax.push_back(k);
    p.ay.push_back(0);
    p.age.push_back((4 - k) * 1e-5);
    p.weight.push_back(1.0);
  }
  DetectorParams params;
  CHECK(estimate_initial_speed(p, {1, 0}, params).speed == params.max_speed);
}

TEST_CASE("uniform noise rarely triggers the detector") {
  const Scene s = generate_scene(scenarios::noise_only(31, 20000.0, 5.0));
  REQUIRE(s.stream.events.size() > 95000);
  Detector d(s.stream.geometry, FlowParams{}, DetectorParams{});
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.stream.events.size() && n < 100000; ++i, ++n) {
    d.observe(s.stream.events[i].event);
    d.process_unassociated(s.stream.events[i].event);
  }
  MESSAGE("detections on 1e5 noise events: " << d.detections());
  CHECK(d.detections() < 10);
}

TEST_CASE("initial speed on a synthetic blob") {
  const Scene s = generate_scene(scenarios::single_blob(32, 500.0, 30.0));
  Detector d(s.stream.geometry, FlowParams{}, DetectorParams{});
  std::size_t total = 0, good = 0;
  for (const auto& e : s.stream.events) {
    d.observe(e.event);
    if (auto det = d.process_unassociated(e.event)) {
      ++total;
      good += std::abs(det->speed - 500.0) <= 200.0;
    }
  }
  MESSAGE("detections " << total << ", speed within 40%: " << good);
  REQUIRE(total > 10);
  CHECK(static_cast<double>(good) >= 0.7 * static_cast<double>(total));
}

TEST_CASE("first detection on a clean blob comes early") {
  const Scene s = generate_scene(scenarios::single_blob(33));
  Detector d(s.stream.geometry, FlowParams{}, DetectorParams{});
  std::size_t index = 0;
  bool found = false;
  for (const auto& e : s.stream.events) {
    ++index;
    d.observe(e.event);
    if (d.process_unassociated(e.event)) {
      found = true;
      break;
    }
  }
  CHECK(found);
  CHECK(index <= 200);
}

TEST_CASE("detector parameters are validated") {
  DetectorParams p;
  p.gamma = 1.5;
  CHECK_THROWS(p.validate());
  p = {};
  p.min_speed = 600;
  p.max_speed = 100;
  CHECK_THROWS(p.validate());
}
