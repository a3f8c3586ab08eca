#include "aemot/manager.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aemot {

const char* status_name(TrackStatus status) {
  switch (status) {
    case TrackStatus::candidate: return "candidate";
    case TrackStatus::valid: return "valid";
    case TrackStatus::terminated: return "terminated";
  }
  return "?";
}

TrackStatus parse_status(std::string_view name) {
  if (name == "candidate") return TrackStatus::candidate;
  if (name == "valid") return TrackStatus::valid;
  if (name == "terminated") return TrackStatus::terminated;
  throw std::invalid_argument("unknown track status '" + std::string(name) + "'");
}

const char* reason_name(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::none: return "none";
    case TerminationReason::classifier: return "classifier";
    case TerminationReason::off_image: return "off_image";
    case TerminationReason::stale: return "stale";
    case TerminationReason::diverged: return "diverged";
  }
  return "?";
}

void ThresholdValidation::validate() const {
  if (!(max_position_cov_trace > 0.0)) {
    throw std::invalid_argument("thresholds.max_position_cov_trace must be > 0");
  }
  if (!(min_speed >= 0.0 && max_speed >= min_speed)) {
    throw std::invalid_argument("thresholds.min_speed/max_speed must satisfy 0 <= min <= max");
  }
  if (!(min_lambda > 0.0 && max_lambda >= min_lambda)) {
    throw std::invalid_argument("thresholds.min_lambda/max_lambda must satisfy 0 < min <= max");
  }
  if (window == 0) throw std::invalid_argument("thresholds.window must be > 0");
}

void ManagerParams::validate() const {
  if (!(significance > 0.0 && significance < 1.0)) {
    throw std::invalid_argument("manager.significance must lie in (0, 1)");
  }
  if (!(kappa > 1.0)) throw std::invalid_argument("manager.kappa must be > 1");
  if (batch_size == 0) throw std::invalid_argument("manager.batch_size must be > 0");
  if (evaluation_length == 0) throw std::invalid_argument("manager.evaluation_length must be > 0");
  if (!(border_margin >= 0.0)) throw std::invalid_argument("manager.border_margin must be >= 0");
  if (!(interval_smoothing > 0.0 && interval_smoothing <= 1.0)) {
    throw std::invalid_argument("manager.interval_smoothing must lie in (0, 1]");
  }
  if (!(initial_interval_us > 0.0)) {
    throw std::invalid_argument("manager.initial_interval_us must be > 0");
  }
  if (sample_period_us < 0) throw std::invalid_argument("manager.sample_period_us must be >= 0");
  if (!(classifier_threshold > 0.0 && classifier_threshold < 1.0)) {
    throw std::invalid_argument("manager.classifier_threshold must lie in (0, 1)");
  }
}

void PipelineConfig::validate() const {
  flow.validate();
  detector.validate();
  filter.validate();
  if (!(patch_decay >= 0.0)) throw std::invalid_argument("patch.decay_rate must be >= 0");
  manager.validate();
  thresholds.validate();
}

Track::Track(std::uint32_t id_, AebFilter filter_, double patch_decay,
             std::size_t evaluation_length, TimeUs created_, double initial_interval_us)
    : id(id_),
      filter(std::move(filter_)),
      patch(patch_decay),
      evaluations(evaluation_length),
      created(created_),
      last_associated(created_),
      mean_interval_us(initial_interval_us) {}

// ---------------------------------------------------------------------------

namespace {

double position_cov_trace(const Matrix10d& p) {
  return p(state_index::px, state_index::px) + p(state_index::py, state_index::py);
}

}  // namespace

Pipeline::Pipeline(SensorGeometry geometry, PipelineConfig config, const Mlp* model,
                   PipelineHooks hooks)
    : geometry_(geometry),
      config_(std::move(config)),
      model_(model),
      hooks_(std::move(hooks)),
      detector_(geometry, config_.flow, config_.detector) {
  config_.validate();
  if (config_.mode == ValidationMode::classifier && model_ == nullptr) {
    throw std::invalid_argument("classifier validation needs a model (or use threshold mode)");
  }
  gate_threshold_ = chi2_2dof_critical(config_.manager.significance);
  gate_radius_factor_ = std::sqrt(gate_threshold_);
}

Track* Pipeline::find(std::uint32_t id) {
  for (auto& t : tracks_) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

std::vector<TrackRecord> Pipeline::take_records() {
  std::vector<TrackRecord> out;
  out.swap(records_);
  return out;
}

void Pipeline::emit(const Track& track, TimeUs t, TrackStatus status) {
  TrackRecord r;
  r.t = t;
  r.track_id = track.id;
  r.status = status;
  r.state = track.filter.time() == t ? track.filter.state() : track.filter.extrapolate(t);
  r.cov_trace = position_cov_trace(track.filter.covariance());
  r.event_count = track.event_count;
  if (sink_) {
    sink_(r);
  } else {
    records_.push_back(r);
  }
}

void Pipeline::emit_samples_until(TimeUs t) {
  const TimeUs period = config_.manager.sample_period_us;
  if (period <= 0) return;
  if (!next_sample_) next_sample_ = ((t + period - 1) / period) * period;
  while (*next_sample_ <= t) {
    for (const auto& track : tracks_) {
      if (track.status != TrackStatus::terminated) emit(track, *next_sample_, track.status);
    }
    *next_sample_ += period;
  }
}

std::uint32_t Pipeline::spawn(const Detection& detection) {
  const std::uint32_t id = next_id_++;
  const std::size_t eval_len = config_.mode == ValidationMode::classifier
                                   ? config_.manager.evaluation_length
                                   : config_.thresholds.window;
  tracks_.emplace_back(id, AebFilter::spawn(detection, config_.filter), config_.patch_decay,
                       eval_len, detection.t, config_.manager.initial_interval_us);
  ++stats_.spawned;
  emit(tracks_.back(), detection.t, TrackStatus::candidate);
  return id;
}

void Pipeline::promote(Track& track, TimeUs t) {
  if (track.status != TrackStatus::candidate) return;
  track.status = TrackStatus::valid;
  ++stats_.promoted;
  emit(track, t, TrackStatus::valid);
}

void Pipeline::terminate(std::size_t index, TimeUs t, TerminationReason reason) {
  Track& track = tracks_[index];
  track.reason = reason;
  switch (reason) {
    case TerminationReason::classifier: ++stats_.terminated_classifier; break;
    case TerminationReason::off_image: ++stats_.terminated_off_image; break;
    case TerminationReason::stale: ++stats_.terminated_stale; break;
    case TerminationReason::diverged: ++stats_.terminated_diverged; break;
    case TerminationReason::none: break;
  }
  emit(track, std::max(t, track.filter.time()), TrackStatus::terminated);
  track.status = TrackStatus::terminated;
  lifetimes_ms_.push_back(static_cast<double>(t - track.created) * 1e-3);
  if (hooks_.on_terminated) hooks_.on_terminated(track);
}

void Pipeline::note_association(Track& track, TimeUs t) {
  const double gap = static_cast<double>(t - track.last_associated);
  const double a = config_.manager.interval_smoothing;
  track.mean_interval_us = (1.0 - a) * track.mean_interval_us + a * gap;
  track.last_associated = t;
}

bool Pipeline::passes_thresholds(const Track& track) const {
  const auto& th = config_.thresholds;
  const BlobState& s = track.filter.state();
  const double speed = s.v.norm();
  return position_cov_trace(track.filter.covariance()) <= th.max_position_cov_trace &&
         speed >= th.min_speed && speed <= th.max_speed && s.lambda.minCoeff() >= th.min_lambda &&
         s.lambda.maxCoeff() <= th.max_lambda;
}

void Pipeline::run_batch(Track& track, TimeUs t) {
  ++stats_.batches;
  track.batch_counter = 0;
  const PatchVector raw = track.patch.values();
  bool passed = false;
  if (config_.mode == ValidationMode::classifier) {
    passed = model_->forward(patch_to_classifier_input(raw)) >= config_.manager.classifier_threshold;
  } else {
    passed = passes_thresholds(track);
  }
  if (hooks_.on_batch) hooks_.on_batch(track, raw, passed);
  track.evaluations.push(passed);
  switch (verdict(track.evaluations)) {
    case Verdict::promote: promote(track, t); break;
    case Verdict::terminate: {
      const auto index = static_cast<std::size_t>(&track - tracks_.data());
      terminate(index, t, TerminationReason::classifier);
      break;
    }
    case Verdict::undecided: break;
  }
}

void Pipeline::gate_tier(const Event& e, TrackStatus tier, std::vector<std::size_t>& out) const {
  out.clear();
  const Eigen::Vector2d xi(e.x, e.y);
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const Track& track = tracks_[i];
    if (track.status != tier) continue;
    // d^2 <= c implies |xi - p - sigma Delta| <= sqrt(c) max(lambda).
    const BlobState& now = track.filter.state();
    const double reach = gate_radius_factor_ * now.lambda.maxCoeff() + now.delta.norm();
    const Eigen::Vector2d d = xi - track.filter.extrapolate_position(e.t);
    if (d.squaredNorm() > reach * reach) continue;
    if (mahalanobis_sq(track.filter.extrapolate(e.t), xi, e.polarity) <= gate_threshold_) {
      out.push_back(i);
    }
  }
}

EventOutcome Pipeline::process_event(const Event& e) {
  if (last_t_ && e.t < *last_t_) {
    throw std::invalid_argument("event at t=" + std::to_string(e.t) +
                                " precedes the previous event at t=" + std::to_string(*last_t_));
  }
  if (!geometry_.contains(e.x, e.y)) {
    throw std::invalid_argument("event pixel (" + std::to_string(e.x) + ", " +
                                std::to_string(e.y) + ") lies outside the sensor");
  }
  emit_samples_until(e.t);
  last_t_ = e.t;
  ++stats_.events;
  detector_.observe(e);

  EventOutcome outcome;
  gate_tier(e, TrackStatus::valid, scratch_);
  outcome.matched_valid = !scratch_.empty();
  if (scratch_.empty()) gate_tier(e, TrackStatus::candidate, scratch_);

  if (scratch_.size() == 1) {
    Track& track = tracks_[scratch_.front()];
    outcome.kind = EventOutcome::Kind::single;
    outcome.track_ids.push_back(track.id);
    ++stats_.single_associations;
    note_association(track, e.t);
    if (track.filter.update(e) == UpdateStatus::diverged) {
      terminate(scratch_.front(), e.t, TerminationReason::diverged);
    } else {
      ++track.event_count;
      track.patch.add_event(e, track.filter.state().p);
      if (hooks_.on_associated) hooks_.on_associated(track, e);
      if (++track.batch_counter >= config_.manager.batch_size) run_batch(track, e.t);
    }
  } else if (scratch_.size() > 1) {
    outcome.kind = EventOutcome::Kind::multiple;
    ++stats_.multiple_associations;
    for (std::size_t i : scratch_) {
      Track& track = tracks_[i];
      outcome.track_ids.push_back(track.id);
      track.filter.predict_to(e.t);
      note_association(track, e.t);
      ++track.shared_events;
    }
  } else {
    ++stats_.detector_events;
    const auto detection = detector_.process_unassociated(e);
    if (detection) {
      ++stats_.detections;
      const double r2 = config_.detector.suppression_radius * config_.detector.suppression_radius;
      bool crowded = false;
      for (const auto& track : tracks_) {
        if (track.status == TrackStatus::terminated) continue;
        if ((track.filter.extrapolate_position(e.t) - detection->position).squaredNorm() <= r2) {
          crowded = true;
          break;
        }
      }
      const std::size_t cap = config_.manager.max_tracks;
      if (crowded) {
        outcome.kind = EventOutcome::Kind::suppressed;
        ++stats_.suppressed;
      } else if (cap != 0 && tracks_.size() >= cap) {
        outcome.kind = EventOutcome::Kind::rejected;
      } else {
        outcome.kind = EventOutcome::Kind::spawned;
        outcome.track_ids.push_back(spawn(*detection));
      }
    }
  }

  // Staleness and border exits act on millisecond scales, so a coarser sweep loses nothing.
  if (!last_housekeeping_ || e.t - *last_housekeeping_ >= kHousekeepingPeriodUs) {
    housekeeping(e.t);
    last_housekeeping_ = e.t;
  }
  return outcome;
}

std::vector<std::uint32_t> Pipeline::housekeeping(TimeUs t) {
  std::vector<std::uint32_t> removed;
  const double margin = config_.manager.border_margin;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    Track& track = tracks_[i];
    if (track.status == TrackStatus::terminated) {
      removed.push_back(track.id);
      continue;
    }
    const Eigen::Vector2d p = track.filter.extrapolate_position(std::max(t, track.filter.time()));
    const bool off_image = !(p.x() >= -margin && p.y() >= -margin &&
                             p.x() <= geometry_.width - 1 + margin &&
                             p.y() <= geometry_.height - 1 + margin);
    if (off_image) {
      terminate(i, t, TerminationReason::off_image);
      removed.push_back(track.id);
      continue;
    }
    const double silent = static_cast<double>(t - track.last_associated);
    if (silent > config_.manager.kappa * track.mean_interval_us) {
      terminate(i, t, TerminationReason::stale);
      removed.push_back(track.id);
    }
  }
  std::erase_if(tracks_, [](const Track& tr) { return tr.status == TrackStatus::terminated; });
  return removed;
}

// --- track output ----------------------------------------------------------

TrackCsvWriter::TrackCsvWriter(std::ostream& out) : out_(out) { out_ << kTrackCsvHeader << '\n'; }

namespace {

void append_number(std::string& s, double v) {
  std::array<char, 32> buf;
  // Fixed precision keeps the files diff-friendly and byte-stable.
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::fixed, 6);
  s.append(buf.data(), res.ptr);
}

template <typename I>
void append_int(std::string& s, I v) {
  std::array<char, 24> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  s.append(buf.data(), res.ptr);
}

}  // namespace

void TrackCsvWriter::write(const TrackRecord& r) {
  line_.clear();
  append_int(line_, r.t);
  line_ += ',';
  append_int(line_, r.track_id);
  line_ += ',';
  line_ += status_name(r.status);
  for (double v : {r.state.p.x(), r.state.p.y(), r.state.v.x(), r.state.v.y(), r.state.theta,
                   r.state.q, r.state.lambda.x(), r.state.lambda.y(), r.state.delta.x(),
                   r.state.delta.y(), r.cov_trace}) {
    line_ += ',';
    append_number(line_, v);
  }
  line_ += ',';
  append_int(line_, r.event_count);
  line_ += '\n';
  out_.write(line_.data(), static_cast<std::streamsize>(line_.size()));
}

void write_track_csv(const std::filesystem::path& path, const std::vector<TrackRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  TrackCsvWriter w(out);
  for (const auto& r : records) w.write(r);
}

std::vector<TrackRecord> read_track_csv(std::istream& in) {
  std::vector<TrackRecord> out;
  std::string line;
  std::uint64_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#' || line.front() == 't') continue;
    std::array<std::string_view, 15> f;
    std::size_t count = 0;
    std::string_view rest(line);
    while (count < f.size()) {
      const auto comma = rest.find(',');
      f[count++] = rest.substr(0, comma);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (count != f.size()) {
      throw std::runtime_error("track CSV line " + std::to_string(n) + ": expected 15 fields");
    }
    auto num = [&](std::string_view s) {
      double v = 0.0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("track CSV line " + std::to_string(n) + ": bad number '" +
                                 std::string(s) + "'");
      }
      return v;
    };
    TrackRecord r;
    r.t = static_cast<TimeUs>(num(f[0]));
    r.track_id = static_cast<std::uint32_t>(num(f[1]));
    r.status = parse_status(f[2]);
    r.state.p = {num(f[3]), num(f[4])};
    r.state.v = {num(f[5]), num(f[6])};
    r.state.theta = num(f[7]);
    r.state.q = num(f[8]);
    r.state.lambda = {num(f[9]), num(f[10])};
    r.state.delta = {num(f[11]), num(f[12])};
    r.cov_trace = num(f[13]);
    r.event_count = static_cast<std::size_t>(num(f[14]));
    out.push_back(r);
  }
  return out;
}

std::vector<TrackRecord> read_track_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open track file " + path.string());
  return read_track_csv(in);
}

// --- whole-stream run ------------------------------------------------------

nlohmann::json RunSummary::to_json() const {
  nlohmann::json j;
  j["events"] = stats.events;
  j["stream_seconds"] = stream_seconds;
  j["wall_seconds"] = wall_seconds;
  j["events_per_second"] = wall_seconds > 0.0 ? static_cast<double>(stats.events) / wall_seconds : 0.0;
  j["associations"] = {{"single", stats.single_associations},
                       {"multiple", stats.multiple_associations},
                       {"unassociated", stats.detector_events}};
  j["detections"] = {{"total", stats.detections}, {"suppressed", stats.suppressed}};
  j["tracks"] = {{"spawned", stats.spawned},
                 {"promoted", stats.promoted},
                 {"alive_at_end", tracks_alive},
                 {"valid_at_end", valid_alive},
                 {"terminated",
                  {{"classifier", stats.terminated_classifier},
                   {"off_image", stats.terminated_off_image},
                   {"stale", stats.terminated_stale},
                   {"diverged", stats.terminated_diverged}}}};
  j["batches"] = stats.batches;
  // Lifetime histogram with edges in ms; the last bin is open-ended.
  const std::array<double, 8> edges{0, 10, 30, 100, 300, 1000, 3000, 10000};
  nlohmann::json hist = nlohmann::json::array();
  for (std::size_t b = 0; b < edges.size(); ++b) {
    const double lo = edges[b];
    const double hi = b + 1 < edges.size() ? edges[b + 1] : INFINITY;
    const auto n = std::count_if(lifetimes_ms.begin(), lifetimes_ms.end(),
                                 [&](double v) { return v >= lo && v < hi; });
    nlohmann::json bin = {{"min_ms", lo}, {"count", n}};
    if (std::isfinite(hi)) bin["max_ms"] = hi;
    hist.push_back(bin);
  }
  j["lifetime_histogram_ms"] = hist;
  return j;
}

namespace {

template <typename Next>
RunSummary run_impl(const SensorGeometry& geometry, Next&& next, const PipelineConfig& config,
                    const Mlp* model, const std::function<void(const TrackRecord&)>& sink,
                    PipelineHooks hooks) {
  const auto start = std::chrono::steady_clock::now();
  Pipeline pipeline(geometry, config, model, std::move(hooks));
  if (sink) pipeline.set_record_sink(sink);
  std::optional<TimeUs> first;
  while (const Event* e = next()) {
    if (!first) first = e->t;
    pipeline.process_event(*e);
  }
  RunSummary s;
  s.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  s.stats = pipeline.stats();
  s.lifetimes_ms = pipeline.lifetimes_ms();
  for (const auto& t : pipeline.tracks()) {
    ++s.tracks_alive;
    if (t.status == TrackStatus::valid) ++s.valid_alive;
    s.lifetimes_ms.push_back(static_cast<double>(*pipeline.last_time() - t.created) * 1e-3);
  }
  if (first) s.stream_seconds = to_seconds(*pipeline.last_time() - *first);
  return s;
}

}  // namespace

RunSummary run_pipeline(EventReader& reader, const PipelineConfig& config, const Mlp* model,
                        const std::function<void(const TrackRecord&)>& sink,
                        PipelineHooks hooks) {
  std::optional<LabeledEvent> current;
  auto next = [&]() -> const Event* {
    current = reader.next();
    return current ? &current->event : nullptr;
  };
  return run_impl(reader.geometry(), next, config, model, sink, std::move(hooks));
}

RunSummary run_pipeline(const EventStream& stream, const PipelineConfig& config,
                        const Mlp* model, const std::function<void(const TrackRecord&)>& sink,
                        PipelineHooks hooks) {
  std::size_t i = 0;
  auto next = [&]() -> const Event* {
    return i < stream.events.size() ? &stream.events[i++].event : nullptr;
  };
  return run_impl(stream.geometry, next, config, model, sink, std::move(hooks));
}

}  // namespace aemot
