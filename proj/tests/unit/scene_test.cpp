#include <doctest.h>

#include <cmath>
#include <sstream>

#include "aemot/scene.hpp"
#include "oracles.hpp"

using namespace aemot;

namespace {

ObjectSpec static_object(Eigen::Vector2d p, Eigen::Vector2d lambda, Eigen::Vector2d delta,
                         double theta = 0.0, double rate = 1e5) {
  ObjectSpec o;
  o.initial.p = p;
  o.initial.lambda = lambda;
  o.initial.delta = delta;
  o.initial.theta = theta;
  o.rate = rate;
  return o;
}

}  // namespace

TEST_CASE("vanishing shape puts every event on the centre pixel") {
  const auto o = static_object({10, 10}, {1e-4, 1e-4}, {0, 0});
  const auto ev = generate_blob_events(o, {32, 32}, 0.01, 3);
  REQUIRE(ev.size() > 100);
  for (const auto& e : ev) {
    CHECK(e.event.x == 10);
    CHECK(e.event.y == 10);
    CHECK(e.label == 1);
  }
}

TEST_CASE("polarity offset shifts the two clusters apart") {
  const auto o = static_object({10, 10}, {1e-4, 1e-4}, {3, 0});
  const auto ev = generate_blob_events(o, {32, 32}, 0.01, 4);
  int pos = 0, neg = 0;
  for (const auto& e : ev) {
    if (e.event.polarity > 0) {
      CHECK(e.event.x == 13);
      ++pos;
    } else {
      CHECK(e.event.x == 7);
      ++neg;
    }
    CHECK(e.event.y == 10);
  }
  CHECK(pos > 0);
  CHECK(neg > 0);
}

TEST_CASE("per-polarity sample covariance matches the squared shape") {
  const auto o = static_object({200, 200}, {4, 2}, {1, -2}, 0.0, 1e5);
  const auto ev = generate_blob_events(o, {400, 400}, 1.0, 5);
  REQUIRE(ev.size() > 90000);
  for (int pol : {1, -1}) {
    std::vector<Eigen::Vector2d> xs;
    for (const auto& e : ev) {
      if (e.event.polarity == pol) xs.emplace_back(e.event.x, e.event.y);
    }
    const auto [m, c] = oracle::mean_cov(xs);
    CHECK(c(0, 0) == doctest::Approx(16.0).epsilon(0.05));
    CHECK(c(1, 1) == doctest::Approx(4.0).epsilon(0.05));
    CHECK(std::abs(c(0, 1)) < 0.2);
    const Eigen::Vector2d expect = Eigen::Vector2d(200, 200) + pol * Eigen::Vector2d(1, -2);
    CHECK((m - expect).norm() < 0.1);
  }
}

TEST_CASE("events arrive at the requested rate and in order") {
  const auto o = static_object({50, 50}, {2, 2}, {0, 0}, 0.0, 20000);
  const auto ev = generate_blob_events(o, {100, 100}, 0.5, 6);
  CHECK(static_cast<double>(ev.size()) == doctest::Approx(10000).epsilon(0.05));
  for (std::size_t i = 1; i < ev.size(); ++i) CHECK(ev[i - 1].event.t <= ev[i].event.t);
}

TEST_CASE("noise-only scene is Poisson background") {
  const SceneConfig c = scenarios::noise_only(9, 50000.0, 0.4, {64, 48});
  const Scene s = generate_scene(c);
  const double expected = 50000.0 * 0.4;
  CHECK(std::abs(static_cast<double>(s.stream.events.size()) - expected) < 5 * std::sqrt(expected));
  for (const auto& e : s.stream.events) CHECK(e.label == 0);
  CHECK(s.ground_truth.empty());
}

TEST_CASE("merged stream is sorted with label tie-break and is reproducible") {
  SceneConfig c = scenarios::crossing_pair(11);
  c.noise_rate = 5000;
  const Scene a = generate_scene(c);
  for (std::size_t i = 1; i < a.stream.events.size(); ++i) {
    const auto& p = a.stream.events[i - 1];
    const auto& q = a.stream.events[i];
    CHECK((p.event.t < q.event.t || (p.event.t == q.event.t && p.label <= q.label)));
  }
  const Scene b = generate_scene(c);
  CHECK(a.stream.events == b.stream.events);
  c.seed = 12;
  const Scene d = generate_scene(c);
  CHECK_FALSE(a.stream.events == d.stream.events);
}

TEST_CASE("ground truth follows waypoints and heading") {
  ObjectSpec o;
  o.initial.p = {0, 0};
  o.align_to_heading = true;
  o.waypoints = {{1.0, {10, 0}}, {2.0, {10, 10}}};
  const BlobState a = o.state_at(0.5);
  CHECK(a.p.x() == doctest::Approx(5));
  CHECK(a.v.x() == doctest::Approx(10));
  CHECK(a.theta == doctest::Approx(0));
  const BlobState b = o.state_at(1.5);
  CHECK(b.p.y() == doctest::Approx(5));
  CHECK(std::abs(b.theta) == doctest::Approx(oracle::kPi / 2));
  const BlobState c = o.state_at(3.0);  // keeps the last velocity
  CHECK(c.p.y() == doctest::Approx(20));
}

TEST_CASE("scene validation names the field") {
  SceneConfig c;
  c.objects.push_back(ObjectSpec{});
  c.objects[0].label = 0;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("objects[0].label") != std::string::npos);
  }
}

TEST_CASE("scene json and ground-truth csv round trip") {
  const SceneConfig c = scenarios::crossing_pair(2);
  const SceneConfig r = scene_from_json(scene_to_json(c));
  CHECK(scene_to_json(r) == scene_to_json(c));

  const auto rows = sample_ground_truth(c);
  CHECK(rows.size() == 2 * 451);
  std::ostringstream out;
  write_ground_truth_csv(out, rows);
  CHECK(out.str().rfind("t_us,label,px,py,vx,vy,theta,q,l1,l2,dx,dy\n", 0) == 0);
}
