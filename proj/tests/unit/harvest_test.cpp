#include <doctest.h>

#include <filesystem>

#include "aemot/harvest.hpp"

using namespace aemot;

TEST_CASE("clean object scene harvests positives only") {
  const Scene s = generate_scene(scenarios::crossing_pair(3));
  RunConfig cfg;
  cfg.harvest.min_track_events = 0;
  const HarvestSet h = harvest_patches(s.stream, cfg, &s.ground_truth);
  CHECK(h.positives.size() > 10);
  CHECK(h.negatives.empty());
  RunConfig strict = cfg;
  strict.harvest.min_track_events = 1000000;
  const HarvestSet none = harvest_patches(s.stream, strict, &s.ground_truth);
  CHECK(none.positives.empty());
  CHECK(none.immature > 0);
}

TEST_CASE("clutter produces negatives") {
  const Scene s = generate_scene(scenarios::swarm(4, {.blobs = 4, .duration = 1.0}));
  RunConfig cfg;
  cfg.harvest.min_track_events = 0;
  const HarvestSet h = harvest_patches(s.stream, cfg, &s.ground_truth);
  MESSAGE("pos " << h.positives.size() << " neg " << h.negatives.size() << " impure " << h.impure
                 << " misplaced " << h.misplaced);
  CHECK(h.positives.size() > 0);
  CHECK(h.negatives.size() > 0);
}

TEST_CASE("unlabelled streams are refused") {
  EventStream s;
  s.geometry = {10, 10};
  CHECK_THROWS_AS(harvest_patches(s, RunConfig{}, nullptr), std::invalid_argument);
}

TEST_CASE("balanced subsampling and pooling") {
  HarvestSet a, b;
  PatchVector v{};
  for (int i = 0; i < 7; ++i) {
    v[0] = i;
    a.positives.push_back(v);
  }
  for (int i = 0; i < 3; ++i) {
    v[0] = -i;
    b.negatives.push_back(v);
  }
  b.impure = 2;
  append(a, std::move(b));
  CHECK(a.positives.size() == 7);
  CHECK(a.negatives.size() == 3);
  CHECK(a.impure == 2);

  const auto s = to_samples(a, 5, 1);
  std::size_t pos = 0;
  for (const auto& x : s) pos += x.positive;
  CHECK(pos == 5);
  CHECK(s.size() == 8);
  CHECK(to_samples(a, 5, 1).size() == s.size());

  const auto dir = std::filesystem::temp_directory_path() / "aemot_harvest_test";
  std::filesystem::remove_all(dir);
  const auto [np, nn] = write_patch_dataset(a, dir, 0, 1);
  CHECK(np == 7);
  CHECK(nn == 3);
  CHECK(load_patch_dataset(dir).size() == 10);
  std::filesystem::remove_all(dir);
}
