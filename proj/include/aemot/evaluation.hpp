#pragma once

// Precision/recall against labelled ground truth at a fixed cadence, and frame rendering.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aemot/events.hpp"
#include "aemot/manager.hpp"
#include "aemot/scene.hpp"

namespace aemot {

/// One labelled position observation: a labelled event or a ground-truth sample.
struct GroundTruthPoint {
  TimeUs t = 0;
  std::uint32_t label = 0;
  double x = 0.0;
  double y = 0.0;
};

/// Labelled (label != 0) events of a stream.
std::vector<GroundTruthPoint> ground_truth_from_events(const EventStream& stream);
std::vector<GroundTruthPoint> ground_truth_from_rows(const std::vector<GroundTruthRow>& rows);
/// Reads either a ground-truth CSV (header "t_us,label,px,...") or a labelled event file.
std::vector<GroundTruthPoint> load_ground_truth(const std::filesystem::path& path);

struct ScoreParams {
  double match_radius = 5.0;     // px
  TimeUs cadence_us = 5000;      // 200 Hz
  TimeUs half_window_us = 2500;  // GT position = mean of labelled points in [t - w, t + w)
  TimeUs live_tolerance_us = 2000;  // a track counts while its latest record is this recent

  void validate() const;
};

struct MetricsSample {
  TimeUs t = 0;
  std::size_t true_tracks = 0;
  std::size_t false_tracks = 0;
  std::size_t matched_gt = 0;
  std::size_t total_gt = 0;
  std::optional<double> precision;  // empty when skipped
  std::optional<double> recall;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  std::vector<MetricsSample> samples;
  MeanStd true_tracks;
  MeanStd false_tracks;
  MeanStd matched_gt;
  MeanStd total_gt;
  MeanStd precision;
  MeanStd recall;
  ScoreParams params;

  nlohmann::json to_json(const std::string& method = "AEMOT") const;
};

MeanStd mean_std(std::span<const double> values);

/// Position of every live valid track at `t`, extrapolated from its latest record.
struct IdentifiedTrack {
  std::uint32_t id;
  Eigen::Vector2d position;
};

/// Greedy one-to-one matching by ascending distance; pairs farther than `radius` never match.
/// Returns (gt index, track index) pairs.
std::vector<std::pair<std::size_t, std::size_t>> greedy_match(
    const std::vector<Eigen::Vector2d>& gt, const std::vector<Eigen::Vector2d>& tracks,
    double radius);

/// Samples every multiple of the cadence within the ground-truth span. Throws
/// std::invalid_argument when the record span and the ground-truth span are disjoint.
MetricsReport score(const std::vector<TrackRecord>& records,
                    const std::vector<GroundTruthPoint>& ground_truth, const ScoreParams& params);

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

// --- rendering --------------------------------------------------------------

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

struct RenderParams {
  TimeUs frame_period_us = 10000;
  double ellipse_sigma = 2.0;
  bool draw_ids = true;
};

inline constexpr std::array<std::uint8_t, 3> kPositiveColour{80, 160, 255};
inline constexpr std::array<std::uint8_t, 3> kNegativeColour{255, 90, 60};
inline constexpr std::array<std::uint8_t, 3> kValidColour{0, 255, 0};
inline constexpr std::array<std::uint8_t, 3> kCandidateColour{255, 220, 0};

/// Frames covering [t_begin, t_end): ceil((t_end - t_begin) / period) of them. Events are
/// painted by polarity; each track alive at a frame's end gets an ellipse with semi-axes
/// sigma * lambda and its id.
std::vector<Image> render(const SensorGeometry& geometry, std::span<const LabeledEvent> events,
                          const std::vector<TrackRecord>& records, TimeUs t_begin, TimeUs t_end,
                          const RenderParams& params = {});

void draw_ellipse(Image& image, const Eigen::Vector2d& centre, double theta,
                  const Eigen::Vector2d& semi_axes, std::array<std::uint8_t, 3> colour);

void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace aemot
