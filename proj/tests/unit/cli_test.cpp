#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "aemot");
  std::ostringstream out, err;
  const int code = aemot::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace

TEST_CASE("version and config dump") {
  const auto v = run({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.rfind("aemot ", 0) == 0);
  const auto d = run({"--dump-config", "--manager.kappa=7"});
  REQUIRE(d.code == 0);
  const auto j = nlohmann::json::parse(d.out);
  CHECK(j["manager"]["kappa"] == 7.0);
  CHECK(run({"--dump-config", "--seed", "5"}).out.find("\"seed\": 5") != std::string::npos);
}

TEST_CASE("bad input gives a diagnostic and a nonzero code") {
  const auto a = run({"--dump-config", "--manager.bogus=1"});
  CHECK(a.code != 0);
  CHECK(a.err.find("manager.bogus") != std::string::npos);
  const auto b = run({"track", "--events", "/nonexistent/events.csv", "--out", "x"});
  CHECK(b.code != 0);
  CHECK(b.err.find("/nonexistent/events.csv") != std::string::npos);
  CHECK(run({"frobnicate"}).code != 0);
}

TEST_CASE("track needs a model unless told otherwise") {
  TempDir dir("aemot_cli_model");
  REQUIRE(run({"simulate", "--out", dir / "s"}).code == 0);
  const auto r = run({"track", "--events", dir / "s.events.csv", "--out", dir / "t"});
  CHECK(r.code != 0);
  CHECK(r.err.find("--model") != std::string::npos);
}

TEST_CASE("simulate is reproducible per seed") {
  TempDir dir("aemot_cli_sim");
  REQUIRE(run({"--seed", "3", "simulate", "--preset", "crossing", "--out", dir / "a"}).code == 0);
  REQUIRE(run({"--seed", "3", "simulate", "--preset", "crossing", "--out", dir / "b"}).code == 0);
  REQUIRE(run({"--seed", "4", "simulate", "--preset", "crossing", "--out", dir / "c"}).code == 0);
  CHECK(slurp(dir / "a.events.csv") == slurp(dir / "b.events.csv"));
  CHECK(slurp(dir / "a.gt.csv") == slurp(dir / "b.gt.csv"));
  CHECK(slurp(dir / "a.events.csv") != slurp(dir / "c.events.csv"));
  REQUIRE(run({"--seed", "3", "simulate", "--preset", "crossing", "--format", "binary", "--out", dir / "d"}).code == 0);
  CHECK(slurp(dir / "d.events.bin").substr(0, 4) == "AEVT");
}

TEST_CASE("simulate, track, evaluate and render on one blob") {
  TempDir dir("aemot_cli_pipeline");
  REQUIRE(run({"simulate", "--preset", "single", "--out", dir / "s"}).code == 0);
  const auto t = run({"track", "--events", dir / "s.events.csv", "--no-classifier", "--out", dir / "t"});
  REQUIRE(t.code == 0);
  CHECK(fs::exists(dir / "t.tracks.csv"));
  const auto summary = nlohmann::json::parse(slurp(dir / "t.summary.json"));
  CHECK(summary["validation"] == "thresholds");
  CHECK(summary.contains("lifetime_histogram_ms"));
  CHECK(summary["events_per_second"].get<double>() > 0);

  const auto e = run({"evaluate", "--tracks", dir / "t.tracks.csv", "--gt", dir / "s.gt.csv", "--out", dir / "m"});
  REQUIRE(e.code == 0);
  const auto metrics = nlohmann::json::parse(slurp(dir / "m.metrics.json"));
  const double recall = metrics["recall"]["mean"].get<double>();
  MESSAGE("single-blob recall " << recall);
  CHECK(recall > 0.9);
  CHECK(fs::exists(dir / "m.metrics.csv"));

  // labelled events work as ground truth too
  CHECK(run({"evaluate", "--tracks", dir / "t.tracks.csv", "--gt", dir / "s.events.csv"}).code == 0);

  const auto r = run({"render", "--events", dir / "s.events.csv", "--tracks", dir / "t.tracks.csv",
                      "--out", dir / "frames", "--begin-ms", "100", "--end-ms", "150"});
  REQUIRE(r.code == 0);
  std::size_t frames = 0;
  for ([[maybe_unused]] const auto& f : fs::directory_iterator(dir / "frames")) ++frames;
  CHECK(frames == 5);
}

TEST_CASE("harvest and train from the command line") {
  TempDir dir("aemot_cli_train");
  REQUIRE(run({"simulate", "--preset", "crossing", "--out", dir / "s"}).code == 0);
  const auto h = run({"harvest-patches", "--events", dir / "s.events.csv", "--gt", dir / "s.gt.csv",
                      "--out", dir / "data", "--harvest.min_track_events=0"});
  REQUIRE(h.code == 0);
  CHECK(fs::exists(dir / "data/pos"));
  CHECK(fs::exists(dir / "data/neg"));
  // add a few negatives by hand in case the clean scene produced none
  for (int i = 0; i < 3; ++i) {
    std::ofstream f(dir / ("data/neg/extra" + std::to_string(i) + ".csv"));
    for (int r = 0; r < 28; ++r) {
      for (int c = 0; c < 28; ++c) f << (c ? "," : "") << ((r * 7 + c * 3 + i) % 5 == 0 ? 1 : 0);
      f << '\n';
    }
  }
  const auto t = run({"train", "--data", dir / "data", "--out", dir / "m.aemlp", "--report",
                      dir / "report.csv", "--classifier.epochs=2"});
  REQUIRE(t.code == 0);
  CHECK(slurp(dir / "m.aemlp").substr(0, 5) == "AEMLP");
  CHECK(fs::exists(dir / "report.csv"));
  const auto k = run({"track", "--events", dir / "s.events.csv", "--model", dir / "m.aemlp", "--out", dir / "t"});
  CHECK(k.code == 0);
}
