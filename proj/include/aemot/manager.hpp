#pragma once

// Track pool and event pipeline. Each event is gated against valid tracks first, then
// candidates, and only reaches the detector when nothing claims it. Candidate validation runs
// every `batch_size` associated events, either through the classifier or through fixed
// plausibility thresholds.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aemot/aeb_filter.hpp"
#include "aemot/classifier.hpp"
#include "aemot/detector.hpp"
#include "aemot/events.hpp"
#include "aemot/flowfield.hpp"
#include "aemot/patch.hpp"

namespace aemot {

enum class TrackStatus { candidate, valid, terminated };

const char* status_name(TrackStatus status);
TrackStatus parse_status(std::string_view name);

enum class TerminationReason { none, classifier, off_image, stale, diverged };

const char* reason_name(TerminationReason reason);

enum class ValidationMode { classifier, thresholds };

/// Plausibility checks used instead of the classifier. A batch passes when the position
/// covariance trace, the speed and both axis lengths lie inside these bounds.
struct ThresholdValidation {
  double max_position_cov_trace = 0.5;
  double min_speed = 50.0;
  double max_speed = 5000.0;
  double min_lambda = 0.5;
  double max_lambda = 6.0;
  std::size_t window = 3;  // verdict buffer length in this mode

  void validate() const;
};

struct ManagerParams {
  double significance = 0.95;
  double kappa = 20.0;
  std::size_t batch_size = 50;
  std::size_t evaluation_length = 15;
  std::size_t max_tracks = 0;  // 0 = unlimited
  double border_margin = 2.0;
  double interval_smoothing = 0.05;
  double initial_interval_us = 1000.0;
  TimeUs sample_period_us = 1000;  // 0 disables periodic samples
  double classifier_threshold = 0.5;

  void validate() const;
};

struct PipelineConfig {
  FlowParams flow;
  DetectorParams detector;
  FilterConfig filter;
  double patch_decay = 100.0;
  ManagerParams manager;
  ValidationMode mode = ValidationMode::classifier;
  ThresholdValidation thresholds;

  void validate() const;
};

struct Track {
  Track(std::uint32_t id, AebFilter filter, double patch_decay, std::size_t evaluation_length,
        TimeUs created, double initial_interval_us);

  std::uint32_t id = 0;
  TrackStatus status = TrackStatus::candidate;
  AebFilter filter;
  IntensityPatch patch;
  EvaluationBuffer evaluations;
  TimeUs created = 0;
  TimeUs last_associated = 0;
  std::size_t event_count = 0;      // EKF updates
  std::size_t shared_events = 0;    // events also claimed by another track
  std::size_t batch_counter = 0;
  double mean_interval_us = 0.0;    // EMA of the gap between associated events
  TerminationReason reason = TerminationReason::none;
};

struct TrackRecord {
  TimeUs t = 0;
  std::uint32_t track_id = 0;
  TrackStatus status = TrackStatus::candidate;
  BlobState state;
  double cov_trace = 0.0;  // trace of the position covariance
  std::size_t event_count = 0;
};

/// What happened to one event.
struct EventOutcome {
  enum class Kind { single, multiple, spawned, suppressed, rejected, undetected };
  Kind kind = Kind::undetected;
  std::vector<std::uint32_t> track_ids;  // tracks that claimed (or were spawned by) the event
  bool matched_valid = false;            // the claiming tier was the valid tier
};

struct PipelineStats {
  std::size_t events = 0;
  std::size_t single_associations = 0;
  std::size_t multiple_associations = 0;
  std::size_t detector_events = 0;
  std::size_t detections = 0;
  std::size_t suppressed = 0;
  std::size_t spawned = 0;
  std::size_t promoted = 0;
  std::size_t terminated_classifier = 0;
  std::size_t terminated_off_image = 0;
  std::size_t terminated_stale = 0;
  std::size_t terminated_diverged = 0;
  std::size_t batches = 0;
};

struct PipelineHooks {
  /// An event fused into exactly one track.
  std::function<void(const Track&, const Event&)> on_associated;
  /// Batch boundary, before the verdict is applied: raw patch values and the batch verdict.
  std::function<void(const Track&, const PatchVector&, bool passed)> on_batch;
  std::function<void(const Track&)> on_terminated;
};

class Pipeline {
 public:
  /// `model` may be null only in threshold mode; it must outlive the pipeline.
  Pipeline(SensorGeometry geometry, PipelineConfig config, const Mlp* model = nullptr,
           PipelineHooks hooks = {});

  /// Rejects events out of time order (std::invalid_argument) and off-sensor pixels.
  EventOutcome process_event(const Event& e);

  /// Terminates tracks that left the image or fell silent. Returns their ids.
  std::vector<std::uint32_t> housekeeping(TimeUs t);

  /// candidate -> valid; a no-op for valid tracks.
  void promote(Track& track, TimeUs t);

  /// Records are appended here unless a sink is set.
  void set_record_sink(std::function<void(const TrackRecord&)> sink) { sink_ = std::move(sink); }
  const std::vector<TrackRecord>& records() const { return records_; }
  std::vector<TrackRecord> take_records();

  const std::vector<Track>& tracks() const { return tracks_; }
  Track* find(std::uint32_t id);
  const PipelineStats& stats() const { return stats_; }
  const PipelineConfig& config() const { return config_; }
  const Detector& detector() const { return detector_; }
  /// Lifetimes (ms) of every terminated track.
  const std::vector<double>& lifetimes_ms() const { return lifetimes_ms_; }
  std::optional<TimeUs> last_time() const { return last_t_; }

  /// Spawns a candidate directly (tests and tools). Returns its id.
  std::uint32_t spawn(const Detection& detection);

 private:
  void emit(const Track& track, TimeUs t, TrackStatus status);
  void emit_samples_until(TimeUs t);
  void terminate(std::size_t index, TimeUs t, TerminationReason reason);
  void note_association(Track& track, TimeUs t);
  void run_batch(Track& track, TimeUs t);
  bool passes_thresholds(const Track& track) const;
  void gate_tier(const Event& e, TrackStatus tier, std::vector<std::size_t>& out) const;

  SensorGeometry geometry_;
  PipelineConfig config_;
  const Mlp* model_;
  PipelineHooks hooks_;
  Detector detector_;
  double gate_threshold_;
  double gate_radius_factor_;
  std::vector<Track> tracks_;
  std::uint32_t next_id_ = 1;
  std::optional<TimeUs> last_t_;
  std::optional<TimeUs> last_housekeeping_;
  static constexpr TimeUs kHousekeepingPeriodUs = 100;
  std::optional<TimeUs> next_sample_;
  std::vector<TrackRecord> records_;
  std::function<void(const TrackRecord&)> sink_;
  PipelineStats stats_;
  std::vector<double> lifetimes_ms_;
  std::vector<std::size_t> scratch_;
};

// --- track output ----------------------------------------------------------

inline constexpr const char* kTrackCsvHeader =
    "t_us,track_id,status,px,py,vx,vy,theta,q,l1,l2,dx,dy,cov_trace,event_count";

/// Streams records as CSV, header first.
class TrackCsvWriter {
 public:
  explicit TrackCsvWriter(std::ostream& out);
  void write(const TrackRecord& r);

 private:
  std::ostream& out_;
  std::string line_;
};

void write_track_csv(const std::filesystem::path& path, const std::vector<TrackRecord>& records);
std::vector<TrackRecord> read_track_csv(const std::filesystem::path& path);
std::vector<TrackRecord> read_track_csv(std::istream& in);

// --- whole-stream run ------------------------------------------------------

struct RunSummary {
  PipelineStats stats;
  std::size_t tracks_alive = 0;
  std::size_t valid_alive = 0;
  std::vector<double> lifetimes_ms;
  double wall_seconds = 0.0;
  double stream_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Feeds every event of `reader` through a pipeline, streaming records to `sink`.
RunSummary run_pipeline(EventReader& reader, const PipelineConfig& config, const Mlp* model,
                        const std::function<void(const TrackRecord&)>& sink,
                        PipelineHooks hooks = {});
RunSummary run_pipeline(const EventStream& stream, const PipelineConfig& config,
                        const Mlp* model, const std::function<void(const TrackRecord&)>& sink,
                        PipelineHooks hooks = {});

}  // namespace aemot
