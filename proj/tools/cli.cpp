#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>

#include "aemot/classifier.hpp"
#include "aemot/config.hpp"
#include "aemot/evaluation.hpp"
#include "aemot/harvest.hpp"
#include "aemot/manager.hpp"
#include "aemot/scene.hpp"
#include "aemot/simd/kernels.hpp"

namespace aemot::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool dump_config = false;
  bool version = false;

  // simulate
  std::string scene_path;
  std::string preset = "single";
  std::string format = "csv";
  // track
  std::string events_path;
  std::string model_path;
  bool no_classifier = false;
  // harvest / train / evaluate / render
  std::string gt_path;
  std::string data_dir;
  std::string tracks_path;
  std::string report_path;
  std::string out;
  std::optional<double> radius;
  std::optional<double> cadence_ms;
  std::optional<double> begin_ms;
  std::optional<double> end_ms;
  std::optional<double> period_ms;
};

fs::path with_suffix(const std::string& prefix, const std::string& suffix) {
  return fs::path(prefix + suffix);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw std::runtime_error(std::string("missing required ") + what);
  if (!fs::exists(path)) throw std::runtime_error(std::string(what) + " not found: " + path);
}

int cmd_simulate(const Options& o, const RunConfig&, std::ostream& out) {
  SceneConfig scene;
  const std::uint64_t seed = o.seed.value_or(1);
  if (!o.scene_path.empty()) {
    require_file(o.scene_path, "scene file");
    scene = load_scene(o.scene_path);
    if (o.seed) scene.seed = *o.seed;
  } else if (o.preset == "single") {
    scene = scenarios::single_blob(seed);
  } else if (o.preset == "crossing") {
    scene = scenarios::crossing_pair(seed);
  } else if (o.preset == "swarm") {
    scene = scenarios::swarm(seed);
  } else if (o.preset == "noise") {
    scene = scenarios::noise_only(seed, 20000.0, 1.0);
  } else {
    throw std::runtime_error("unknown preset '" + o.preset + "' (single, crossing, swarm, noise)");
  }
  if (o.out.empty()) throw std::runtime_error("missing required --out prefix");
  const Scene s = generate_scene(scene);
  const bool binary = o.format == "binary";
  if (!binary && o.format != "csv") throw std::runtime_error("--format must be csv or binary");
  const fs::path events = with_suffix(o.out, binary ? ".events.bin" : ".events.csv");
  const fs::path gt = with_suffix(o.out, ".gt.csv");
  ensure_parent(events);
  write_events(events, s.stream, binary ? EventFormat::binary : EventFormat::csv);
  write_ground_truth_csv(gt, s.ground_truth);
  out << "wrote " << s.stream.events.size() << " events to " << events.string() << " and "
      << s.ground_truth.size() << " ground-truth rows to " << gt.string() << '\n';
  return 0;
}

int cmd_track(const Options& o, RunConfig config, std::ostream& out) {
  require_file(o.events_path, "events file");
  if (o.out.empty() && config.paths.output_prefix.empty()) {
    throw std::runtime_error("missing required --out prefix");
  }
  const std::string prefix = o.out.empty() ? config.paths.output_prefix : o.out;
  std::optional<Mlp> model;
  if (o.no_classifier) {
    config.pipeline.mode = ValidationMode::thresholds;
  } else if (config.pipeline.mode == ValidationMode::classifier) {
    const std::string path = o.model_path.empty() ? config.paths.model : o.model_path;
    if (path.empty()) {
      throw std::runtime_error("track needs --model (or paths.model) unless --no-classifier is given");
    }
    require_file(path, "model file");
    model = load_model(fs::path(path));
  }
  auto reader = EventReader::open(o.events_path, config.events);
  const fs::path tracks = with_suffix(prefix, ".tracks.csv");
  const fs::path summary_path = with_suffix(prefix, ".summary.json");
  ensure_parent(tracks);
  std::ofstream tf(tracks, std::ios::binary);
  if (!tf) throw std::runtime_error("cannot write " + tracks.string());
  TrackCsvWriter writer(tf);
  const RunSummary summary = run_pipeline(reader, config.pipeline, model ? &*model : nullptr,
                                          [&](const TrackRecord& r) { writer.write(r); });
  nlohmann::json j = summary.to_json();
  j["validation"] = config.pipeline.mode == ValidationMode::classifier ? "classifier" : "thresholds";
  j["simd"] = simd::isa_name(simd::active_isa());
  std::ofstream(summary_path) << j.dump(2) << '\n';
  out << "processed " << summary.stats.events << " events in " << summary.wall_seconds << " s ("
      << j["events_per_second"].get<double>() << " ev/s); " << summary.stats.spawned
      << " tracks spawned, " << summary.stats.promoted << " promoted\n";
  return 0;
}

int cmd_harvest(const Options& o, const RunConfig& config, std::ostream& out) {
  require_file(o.events_path, "events file");
  if (o.out.empty()) throw std::runtime_error("missing required --out directory");
  const EventStream stream = read_events(o.events_path, config.events);
  std::vector<GroundTruthRow> gt;
  if (!o.gt_path.empty()) {
    require_file(o.gt_path, "ground-truth file");
    gt = read_ground_truth_csv(o.gt_path);
  }
  const HarvestSet set = harvest_patches(stream, config, o.gt_path.empty() ? nullptr : &gt);
  const auto [pos, neg] =
      write_patch_dataset(set, o.out, config.harvest.per_class, config.harvest.seed);
  out << "harvested " << set.positives.size() << " positive and " << set.negatives.size()
      << " negative patches (" << set.impure << " impure, " << set.misplaced
      << " misplaced, " << set.immature << " immature); wrote " << pos << " + " << neg << " to " << o.out << '\n';
  return 0;
}

int cmd_train(const Options& o, const RunConfig& config, std::ostream& out) {
  if (o.data_dir.empty()) throw std::runtime_error("missing required --data directory");
  if (o.out.empty()) throw std::runtime_error("missing required --out model path");
  const auto dataset = load_patch_dataset(o.data_dir);
  auto [model, report] = train(dataset, config.classifier);
  ensure_parent(o.out);
  save_model(model, fs::path(o.out));
  const std::string report_path = o.report_path.empty() ? o.out + ".report.csv" : o.report_path;
  write_training_report_csv(report, report_path);
  const auto& last = report.epochs.back();
  out << "trained on " << report.train_size << " samples (" << report.validation_size
      << " held out) in " << report.seconds << " s; validation accuracy "
      << last.validation_accuracy << ", loss " << last.validation_loss << '\n';
  return 0;
}

int cmd_evaluate(const Options& o, RunConfig config, std::ostream& out) {
  require_file(o.tracks_path, "track file");
  require_file(o.gt_path, "ground-truth file");
  if (o.radius) config.evaluation.match_radius = *o.radius;
  if (o.cadence_ms) config.evaluation.cadence_us = to_micros(*o.cadence_ms * 1e-3);
  const auto records = read_track_csv(fs::path(o.tracks_path));
  const auto gt = load_ground_truth(o.gt_path);
  const MetricsReport report = score(records, gt, config.evaluation);
  const nlohmann::json j = report.to_json();
  if (!o.out.empty()) {
    ensure_parent(with_suffix(o.out, ".metrics.csv"));
    write_metrics_csv(report, with_suffix(o.out, ".metrics.csv"));
    std::ofstream(with_suffix(o.out, ".metrics.json")) << j.dump(2) << '\n';
  }
  out << "Method | True detections | False detections | Precision | Recall\n"
      << j["table_row"].get<std::string>() << '\n';
  return 0;
}

int cmd_render(const Options& o, RunConfig config, std::ostream& out) {
  require_file(o.events_path, "events file");
  if (o.out.empty()) throw std::runtime_error("missing required --out directory");
  const EventStream stream = read_events(o.events_path, config.events);
  std::vector<TrackRecord> records;
  if (!o.tracks_path.empty()) {
    require_file(o.tracks_path, "track file");
    records = read_track_csv(fs::path(o.tracks_path));
  }
  if (o.period_ms) config.render.frame_period_us = to_micros(*o.period_ms * 1e-3);
  TimeUs begin = stream.events.empty() ? 0 : stream.events.front().event.t;
  TimeUs end = stream.events.empty() ? 0 : stream.events.back().event.t + 1;
  if (o.begin_ms) begin = to_micros(*o.begin_ms * 1e-3);
  if (o.end_ms) end = to_micros(*o.end_ms * 1e-3);
  const auto frames = render(stream.geometry, stream.events, records, begin, end, config.render);
  fs::create_directories(o.out);
  char name[32];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    write_png(frames[i], fs::path(o.out) / name);
  }
  out << "wrote " << frames.size() << " frames to " << o.out << '\n';
  return 0;
}

bool is_override(const std::string& arg) {
  static const std::regex pattern(R"(^--[A-Za-z_][A-Za-z0-9_]*\.[A-Za-z0-9_.]+=.*$)");
  return std::regex_match(arg, pattern);
}

}  // namespace

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> overrides;
  std::vector<std::string> args;
  for (std::size_t i = 0; i < args_in.size(); ++i) {
    if (i > 0 && is_override(args_in[i])) {
      overrides.push_back(args_in[i].substr(2));
    } else {
      args.push_back(args_in[i]);
    }
  }

  Options o;
  CLI::App app{"Asynchronous event-blob detection, validation and tracking", "aemot"};
  app.set_version_flag("--version", std::string("aemot ") + AEMOT_VERSION);
  app.add_option("--config", o.config_path, "JSON config file");
  app.add_option("--seed", o.seed, "RNG seed (scene generation, training, harvesting)");
  app.add_flag("--dump-config", o.dump_config, "Print the effective configuration and exit");
  app.footer("Any config key can be overridden with --section.key=value.");

  auto* sim = app.add_subcommand("simulate", "Generate a labelled synthetic event stream");
  sim->add_option("--scene", o.scene_path, "Scene JSON");
  sim->add_option("--preset", o.preset, "single | crossing | swarm | noise");
  sim->add_option("--format", o.format, "csv | binary");
  sim->add_option("--out", o.out, "Output prefix")->required();

  auto* trk = app.add_subcommand("track", "Run the tracker over an event file");
  trk->add_option("--events", o.events_path, "Event file (CSV or binary)")->required();
  trk->add_option("--model", o.model_path, "Classifier model file");
  trk->add_flag("--no-classifier", o.no_classifier, "Threshold validation instead of the classifier");
  trk->add_option("--out", o.out, "Output prefix");

  auto* hv = app.add_subcommand("harvest-patches", "Build a labelled patch dataset");
  hv->add_option("--events", o.events_path, "Labelled event file")->required();
  hv->add_option("--gt", o.gt_path, "Ground-truth CSV (optional)");
  hv->add_option("--out", o.out, "Dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train the patch classifier");
  tr->add_option("--data", o.data_dir, "Dataset directory with pos/ and neg/")->required();
  tr->add_option("--out", o.out, "Model output path")->required();
  tr->add_option("--report", o.report_path, "Training report CSV");

  auto* ev = app.add_subcommand("evaluate", "Precision and recall against ground truth");
  ev->add_option("--tracks", o.tracks_path, "Track CSV")->required();
  ev->add_option("--gt", o.gt_path, "Labelled events or ground-truth CSV")->required();
  ev->add_option("--radius", o.radius, "Match radius (px)");
  ev->add_option("--cadence-ms", o.cadence_ms, "Sampling period (ms)");
  ev->add_option("--out", o.out, "Output prefix for metrics CSV and JSON");

  auto* rd = app.add_subcommand("render", "Render frames as PNG");
  rd->add_option("--events", o.events_path, "Event file")->required();
  rd->add_option("--tracks", o.tracks_path, "Track CSV");
  rd->add_option("--out", o.out, "Frame directory")->required();
  rd->add_option("--begin-ms", o.begin_ms, "Start time (ms)");
  rd->add_option("--end-ms", o.end_ms, "End time (ms, exclusive)");
  rd->add_option("--period-ms", o.period_ms, "Frame period (ms)");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "aemot " << AEMOT_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "aemot: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    RunConfig config = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
    config = apply_overrides(config, overrides);
    if (o.dump_config) {
      out << config_to_json(config).dump(2) << '\n';
      return 0;
    }
    if (*sim) return cmd_simulate(o, config, out);
    if (*trk) return cmd_track(o, config, out);
    if (*hv) return cmd_harvest(o, config, out);
    if (*tr) return cmd_train(o, config, out);
    if (*ev) return cmd_evaluate(o, config, out);
    if (*rd) return cmd_render(o, config, out);
    err << "aemot: no subcommand given\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "aemot: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace aemot::cli
