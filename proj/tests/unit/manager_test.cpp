#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "aemot/manager.hpp"
#include "aemot/scene.hpp"

using namespace aemot;

namespace {

Detection still_detection(Eigen::Vector2d p, TimeUs t = 0) {
  Detection d;
  d.position = p;
  d.direction = {1, 0};
  d.speed = 0.0;
  d.t = t;
  return d;
}

PipelineConfig threshold_config() {
  PipelineConfig c;
  c.mode = ValidationMode::thresholds;
  return c;
}

// Sigmoid output pinned near 1 or 0 whatever the patch.
void pin_model(Mlp& m, bool positive) {
  for (auto& p : m.parameters()) p = 0.0;
  m.biases(kLayerCount - 1)[0] = positive ? 50.0 : -50.0;
}

// Alternating-polarity events on the two modes of a still track at (50, 50).
Event mode_event(std::size_t i, TimeUs t) {
  return i % 2 ? Event{t, 51, 50, 1} : Event{t, 49, 50, -1};
}

}  // namespace

TEST_CASE("event inside one valid track updates only that track") {
  Pipeline pl({100, 100}, threshold_config());
  const auto id = pl.spawn(still_detection({50, 50}));
  pl.promote(*pl.find(id), 0);
  const auto cand = pl.spawn(still_detection({52, 50}));
  const EventOutcome o = pl.process_event({10, 51, 50, 1});
  CHECK(o.kind == EventOutcome::Kind::single);
  CHECK(o.matched_valid);
  CHECK(o.track_ids == std::vector<std::uint32_t>{id});
  CHECK(pl.find(id)->filter.updates() == 1);
  CHECK(pl.find(id)->patch.event_count() == 1);
  CHECK(pl.find(cand)->filter.updates() == 0);
  CHECK(pl.find(cand)->patch.event_count() == 0);
  CHECK(pl.detector().attempts() == 0);
}

TEST_CASE("event inside two tracks only predicts them") {
  Pipeline pl({100, 100}, threshold_config());
  const auto a = pl.spawn(still_detection({50, 50}));
  const auto b = pl.spawn(still_detection({51, 50}));
  const EventOutcome o = pl.process_event({10, 51, 50, 1});
  CHECK(o.kind == EventOutcome::Kind::multiple);
  CHECK(o.track_ids.size() == 2);
  for (auto id : {a, b}) {
    const Track* t = pl.find(id);
    CHECK(t->filter.updates() == 0);
    CHECK(t->filter.time() == 10);
    CHECK(t->patch.event_count() == 0);
    CHECK(t->shared_events == 1);
  }
  CHECK(pl.detector().attempts() == 0);
}

TEST_CASE("unclaimed event reaches the detector") {
  Pipeline pl({100, 100}, threshold_config());
  const EventOutcome o = pl.process_event({10, 20, 20, 1});
  CHECK(o.kind == EventOutcome::Kind::undetected);
  CHECK(pl.detector().attempts() == 1);
  pl.spawn(still_detection({80, 80}));
  pl.process_event({11, 20, 20, 1});
  CHECK(pl.detector().attempts() == 2);
}

TEST_CASE("bad events are refused") {
  Pipeline pl({100, 100}, threshold_config());
  pl.process_event({10, 1, 1, 1});
  CHECK_THROWS_AS(pl.process_event({9, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(pl.process_event({11, 100, 1, 1}), std::invalid_argument);
}

TEST_CASE("classifier mode needs a model") {
  CHECK_THROWS_AS(Pipeline({10, 10}, PipelineConfig{}), std::invalid_argument);
}

TEST_CASE("housekeeping removes tracks off the image") {
  Pipeline pl({100, 100}, threshold_config());
  const auto id = pl.spawn(still_detection({-5, 10}));
  const auto removed = pl.housekeeping(1);
  CHECK(removed == std::vector<std::uint32_t>{id});
  CHECK(pl.tracks().empty());
  CHECK(pl.stats().terminated_off_image == 1);
}

TEST_CASE("housekeeping removes silent tracks") {
  auto cfg = threshold_config();
  cfg.manager.initial_interval_us = 1000;
  cfg.manager.kappa = 20;
  Pipeline pl({100, 100}, cfg);
  pl.spawn(still_detection({50, 50}));
  CHECK(pl.housekeeping(15000).empty());
  CHECK(pl.housekeeping(25000).size() == 1);
  CHECK(pl.stats().terminated_stale == 1);
  REQUIRE(pl.lifetimes_ms().size() == 1);
  CHECK(pl.lifetimes_ms()[0] == doctest::Approx(25.0));
}

TEST_CASE("busy tracks are retained") {
  auto cfg = threshold_config();
  cfg.thresholds.min_speed = 0.0;  // the track is still
  Pipeline pl({100, 100}, cfg);
  const auto id = pl.spawn(still_detection({50, 50}));
  for (std::size_t i = 0; i < 400; ++i) pl.process_event(mode_event(i, 200 * static_cast<TimeUs>(i + 1)));
  REQUIRE(pl.find(id) != nullptr);
  CHECK(pl.find(id)->event_count > 300);
  CHECK(pl.find(id)->mean_interval_us < 1000.0);
}

TEST_CASE("unanimous positive verdicts promote, unanimous negatives terminate") {
  Mlp model = Mlp::zeros();
  pin_model(model, true);
  Pipeline pl({100, 100}, PipelineConfig{}, &model);
  const auto id = pl.spawn(still_detection({50, 50}));
  std::size_t i = 0;
  TimeUs t = 0;
  const std::size_t batch = pl.config().manager.batch_size;
  for (; i < batch * 14; ++i) pl.process_event(mode_event(i, t += 100));
  REQUIRE(pl.find(id) != nullptr);
  CHECK(pl.find(id)->status == TrackStatus::candidate);
  CHECK(pl.find(id)->evaluations.size() == 14);
  for (; i < batch * 15; ++i) pl.process_event(mode_event(i, t += 100));
  REQUIRE(pl.find(id) != nullptr);
  CHECK(pl.find(id)->status == TrackStatus::valid);
  CHECK(pl.find(id)->id == id);
  CHECK(pl.stats().promoted == 1);

  pl.promote(*pl.find(id), t);
  CHECK(pl.stats().promoted == 1);

  pin_model(model, false);
  for (; i < batch * 29; ++i) pl.process_event(mode_event(i, t += 100));
  REQUIRE(pl.find(id) != nullptr);
  CHECK(pl.find(id)->status == TrackStatus::valid);
  for (; i < batch * 30; ++i) pl.process_event(mode_event(i, t += 100));
  CHECK(pl.find(id) == nullptr);
  CHECK(pl.stats().terminated_classifier == 1);
}

TEST_CASE("candidates failing every batch are dropped") {
  Mlp model = Mlp::zeros();
  pin_model(model, false);
  Pipeline pl({100, 100}, PipelineConfig{}, &model);
  pl.spawn(still_detection({50, 50}));
  TimeUs t = 0;
  for (std::size_t i = 0; i < 50 * 15; ++i) pl.process_event(mode_event(i, t += 100));
  CHECK(pl.tracks().empty());
  CHECK(pl.stats().promoted == 0);
}

TEST_CASE("empty stream yields nothing") {
  EventStream s;
  s.geometry = {64, 64};
  std::vector<TrackRecord> rec;
  const RunSummary r = run_pipeline(s, threshold_config(), nullptr, [&](const TrackRecord& x) { rec.push_back(x); });
  CHECK(rec.empty());
  CHECK(r.stats.events == 0);
  CHECK(r.tracks_alive == 0);
}

TEST_CASE("single blob scene gives one lasting valid track") {
  const Scene scene = generate_scene(scenarios::single_blob(5));
  std::vector<TrackRecord> rec;
  const RunSummary r = run_pipeline(scene.stream, threshold_config(), nullptr,
                                    [&](const TrackRecord& x) { rec.push_back(x); });
  std::set<std::uint32_t> valid;
  std::map<std::uint32_t, std::pair<TimeUs, TimeUs>> span;
  for (const auto& x : rec) {
    if (x.status != TrackStatus::valid) continue;
    valid.insert(x.track_id);
  }
  for (const auto& x : rec) {
    if (!valid.count(x.track_id)) continue;
    auto [it, fresh] = span.try_emplace(x.track_id, x.t, x.t);
    it->second.second = x.t;
  }
  MESSAGE("spawned " << r.stats.spawned << ", promoted " << r.stats.promoted);
  REQUIRE(valid.size() == 1);
  const auto [a, b] = span.begin()->second;
  const TimeUs life = scene.stream.events.back().event.t - scene.stream.events.front().event.t;
  // the track is tracked from its spawn, promotion follows a few batches later
  TimeUs created = 0;
  for (const auto& x : rec) {
    if (x.track_id == *valid.begin()) {
      created = x.t;
      break;
    }
  }
  CHECK(static_cast<double>(b - created) >= 0.9 * static_cast<double>(life));
  CHECK(a >= created);
}

TEST_CASE("records, ids and determinism") {
  SceneConfig c = scenarios::crossing_pair(6);
  c.noise_rate = 20000;
  const Scene scene = generate_scene(c);
  auto run = [&] {
    std::ostringstream out;
    TrackCsvWriter w(out);
    run_pipeline(scene.stream, threshold_config(), nullptr, [&](const TrackRecord& x) { w.write(x); });
    return out.str();
  };
  const std::string a = run();
  CHECK(a == run());
  std::istringstream in(a);
  const auto rec = read_track_csv(in);
  REQUIRE_FALSE(rec.empty());
  // ids are handed out in creation order and never come back after termination
  std::map<std::uint32_t, TrackStatus> last;
  std::uint32_t highest = 0;
  for (const auto& r : rec) {
    if (!last.count(r.track_id)) {
      CHECK(r.track_id > highest);
      highest = r.track_id;
    } else {
      CHECK(last[r.track_id] != TrackStatus::terminated);
    }
    last[r.track_id] = r.status;
  }
}

TEST_CASE("track csv round trip") {
  TrackRecord r;
  r.t = 123456;
  r.track_id = 7;
  r.status = TrackStatus::valid;
  r.state.p = {1.25, -2.5};
  r.state.v = {300.125, 0};
  r.state.theta = 0.5;
  r.state.q = -0.25;
  r.state.lambda = {3, 1.5};
  r.state.delta = {1.5, 0.75};
  r.cov_trace = 0.0625;
  r.event_count = 999;
  std::ostringstream out;
  TrackCsvWriter w(out);
  w.write(r);
  CHECK(out.str().rfind(std::string(kTrackCsvHeader) + "\n123456,7,valid,1.250000,", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_track_csv(in);
  REQUIRE(back.size() == 1);
  CHECK(back[0].t == r.t);
  CHECK(back[0].track_id == r.track_id);
  CHECK(back[0].status == r.status);
  CHECK(back[0].state.to_vector() == r.state.to_vector());
  CHECK(back[0].cov_trace == r.cov_trace);
  CHECK(back[0].event_count == r.event_count);
  std::istringstream bad("1,2,valid,3\n");
  CHECK_THROWS(read_track_csv(bad));
  CHECK_THROWS(parse_status("zombie"));
}

TEST_CASE("associated events touch at most one patch") {
  SceneConfig c = scenarios::crossing_pair(7);
  const Scene scene = generate_scene(c);
  Pipeline pl(scene.stream.geometry, threshold_config());
  std::size_t patched = 0, single = 0;
  for (const auto& e : scene.stream.events) {
    std::size_t before = 0;
    for (const auto& t : pl.tracks()) before += t.patch.event_count();
    const auto o = pl.process_event(e.event);
    std::size_t after = 0;
    for (const auto& t : pl.tracks()) after += t.patch.event_count();
    if (after > before) {
      CHECK(after - before == 1);
      ++patched;
    }
    single += o.kind == EventOutcome::Kind::single;
  }
  CHECK(patched > 0);
  CHECK(patched <= single);
}
