#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "aemot/config.hpp"

using namespace aemot;
using nlohmann::json;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults survive a json round trip") {
  const json d = config_to_json(RunConfig{});
  CHECK(config_to_json(config_from_json(d)) == d);
  CHECK(config_to_json(config_from_json(json::object())) == d);
}

TEST_CASE("documented defaults are in the dump") {
  const json d = config_to_json(RunConfig{});
  CHECK(d["manager"]["significance"] == 0.95);
  CHECK(d["manager"]["kappa"] == 20.0);
  CHECK(d["manager"]["batch_size"] == 50);
  CHECK(d["manager"]["evaluation_length"] == 15);
  CHECK(d["manager"]["max_tracks"] == 0);
  CHECK(d["filter"]["buffer_length"] == 20);
  CHECK(d["flowfield"]["patch_radius"] == 3);
  CHECK(d["detector"]["gamma"] == 0.3);
  CHECK(d["patch"]["decay_rate"] == 100.0);
  CHECK(d["evaluation"]["match_radius"] == 5.0);
  CHECK(d["evaluation"]["cadence_us"] == 5000);
  CHECK(d["classifier"]["learning_rate"] == 0.001);
  CHECK(d["classifier"]["epochs"] == 30);
  CHECK(d["render"]["frame_period_us"] == 10000);
}

TEST_CASE("unknown keys and wrong types are rejected by path") {
  CHECK(error_of([] { config_from_json(json{{"manager", {{"kapa", 3}}}}); }).find("manager.kapa") !=
        std::string::npos);
  CHECK(error_of([] { config_from_json(json{{"nonsense", 1}}); }).find("nonsense") != std::string::npos);
  CHECK(error_of([] { config_from_json(json{{"manager", {{"kappa", "big"}}}}); })
            .find("manager.kappa") != std::string::npos);
  CHECK(error_of([] { config_from_json(json{{"manager", {{"batch_size", 2.5}}}}); })
            .find("manager.batch_size") != std::string::npos);
  CHECK(error_of([] { config_from_json(json{{"filter", {{"spawn_lambda", {1, 2, 3}}}}}); })
            .find("filter.spawn_lambda") != std::string::npos);
  CHECK_FALSE(error_of([] { config_from_json(json{{"manager", {{"validation", "maybe"}}}}); }).empty());
}

TEST_CASE("out-of-range values fail validation") {
  CHECK_THROWS(config_from_json(json{{"manager", {{"significance", 1.5}}}}));
  CHECK_THROWS(config_from_json(json{{"flowfield", {{"patch_radius", 0}}}}));
}

TEST_CASE("dotted overrides") {
  const RunConfig c = apply_overrides(RunConfig{}, {"manager.kappa=30", "filter.process_noise.velocity=100",
                                                    "manager.validation=thresholds", "seed=9",
                                                    "filter.spawn_lambda=[2,1]"});
  CHECK(c.pipeline.manager.kappa == 30.0);
  CHECK(c.pipeline.filter.process_noise.velocity == 100.0);
  CHECK(c.pipeline.mode == ValidationMode::thresholds);
  CHECK(c.seed == 9);
  CHECK(c.pipeline.filter.spawn_lambda == Eigen::Vector2d(2, 1));
  CHECK_THROWS_AS(apply_overrides(RunConfig{}, {"manager.nope=1"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(RunConfig{}, {"manager.kappa"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(RunConfig{}, {"manager.kappa=abc"}), ConfigError);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "aemot_config_test.json";
  std::ofstream(path) << R"({"manager": {"kappa": 12}, "seed": 4})";
  const RunConfig c = load_config(path);
  CHECK(c.pipeline.manager.kappa == 12.0);
  CHECK(c.seed == 4);
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_config(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}
