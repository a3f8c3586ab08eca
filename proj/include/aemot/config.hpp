#pragma once

// Run configuration: every tunable parameter, its JSON form, and command-line overrides.
// Unknown keys and wrongly typed values are rejected with the offending dotted path.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aemot/classifier.hpp"
#include "aemot/evaluation.hpp"
#include "aemot/events.hpp"
#include "aemot/manager.hpp"

namespace aemot {

struct HarvestParams {
  std::size_t per_class = 2000;       // balanced count written per class (0 = keep all)
  double min_purity = 0.8;            // label share of a batch's events
  double max_position_error = 3.0;    // px, positives only: track vs labelled-event mean
  std::size_t min_track_events = 300; // younger tracks have sparse, ambiguous patches
  std::uint64_t seed = 1;             // subsampling seed

  void validate() const;
};

struct Paths {
  std::string model;
  std::string output_prefix;
};

struct RunConfig {
  ReadOptions events;
  PipelineConfig pipeline;
  TrainConfig classifier;
  HarvestParams harvest;
  ScoreParams evaluation;
  RenderParams render;
  Paths paths;
  std::uint64_t seed = 1;

  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json config_to_json(const RunConfig& config);

/// Overlays `j` on the defaults. Every key must exist in the default schema with a
/// compatible type. Throws ConfigError naming the dotted path.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" overrides. The value is parsed as JSON when possible,
/// otherwise taken as a string.
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides);

}  // namespace aemot
