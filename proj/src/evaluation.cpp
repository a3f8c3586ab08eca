#include "aemot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include <png.h>

namespace aemot {

std::vector<GroundTruthPoint> ground_truth_from_events(const EventStream& stream) {
  std::vector<GroundTruthPoint> out;
  for (const auto& le : stream.events) {
    if (le.label == 0) continue;
    out.push_back({le.event.t, le.label, static_cast<double>(le.event.x),
                   static_cast<double>(le.event.y)});
  }
  return out;
}

std::vector<GroundTruthPoint> ground_truth_from_rows(const std::vector<GroundTruthRow>& rows) {
  std::vector<GroundTruthPoint> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.t, r.label, r.state.p.x(), r.state.p.y()});
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

std::vector<GroundTruthPoint> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ground truth " + path.string());
  std::string first;
  std::getline(in, first);
  if (first.rfind("t_us,label,px", 0) == 0) return ground_truth_from_rows(read_ground_truth_csv(path));
  const EventStream stream = read_events(path);
  if (!stream.labelled) {
    throw std::runtime_error(path.string() + ": event file carries no labels to score against");
  }
  return ground_truth_from_events(stream);
}

void ScoreParams::validate() const {
  if (!(match_radius > 0.0)) throw std::invalid_argument("evaluation.match_radius must be > 0");
  if (cadence_us <= 0) throw std::invalid_argument("evaluation.cadence_us must be > 0");
  if (half_window_us < 0) throw std::invalid_argument("evaluation.half_window_us must be >= 0");
  if (live_tolerance_us < 0) {
    throw std::invalid_argument("evaluation.live_tolerance_us must be >= 0");
  }
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  m.count = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> greedy_match(
    const std::vector<Eigen::Vector2d>& gt, const std::vector<Eigen::Vector2d>& tracks,
    double radius) {
  struct Pair {
    double d;
    std::size_t g;
    std::size_t k;
  };
  std::vector<Pair> pairs;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    for (std::size_t k = 0; k < tracks.size(); ++k) {
      const double d = (gt[g] - tracks[k]).norm();
      if (d <= radius) pairs.push_back({d, g, k});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.g != b.g) return a.g < b.g;
    return a.k < b.k;
  });
  std::vector<bool> gt_used(gt.size(), false), tr_used(tracks.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& p : pairs) {
    if (gt_used[p.g] || tr_used[p.k]) continue;
    gt_used[p.g] = tr_used[p.k] = true;
    out.emplace_back(p.g, p.k);
  }
  return out;
}

MetricsReport score(const std::vector<TrackRecord>& records_in,
                    const std::vector<GroundTruthPoint>& gt_in, const ScoreParams& params) {
  params.validate();
  MetricsReport report;
  report.params = params;
  if (gt_in.empty()) return report;

  std::vector<GroundTruthPoint> gt = gt_in;
  std::stable_sort(gt.begin(), gt.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  std::vector<TrackRecord> records = records_in;
  std::stable_sort(records.begin(), records.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });

  const TimeUs gt_begin = gt.front().t;
  const TimeUs gt_end = gt.back().t;
  if (!records.empty() && (records.back().t < gt_begin || records.front().t > gt_end)) {
    throw std::invalid_argument("track output and ground truth cover disjoint time ranges");
  }

  const TimeUs cadence = params.cadence_us;
  TimeUs t = ((gt_begin + cadence - 1) / cadence) * cadence;
  std::size_t lo = 0, hi = 0;  // window [lo, hi) into gt
  std::size_t rec = 0;
  std::map<std::uint32_t, const TrackRecord*> latest;  // ordered for determinism

  std::vector<double> tt, ft, mg, tg, pr, rc;
  for (; t <= gt_end; t += cadence) {
    while (hi < gt.size() && gt[hi].t < t + params.half_window_us) ++hi;
    while (lo < hi && gt[lo].t < t - params.half_window_us) ++lo;
    std::map<std::uint32_t, std::pair<Eigen::Vector2d, std::size_t>> sums;
    for (std::size_t i = lo; i < hi; ++i) {
      auto& s = sums.try_emplace(gt[i].label, Eigen::Vector2d::Zero(), 0).first->second;
      s.first += Eigen::Vector2d(gt[i].x, gt[i].y);
      ++s.second;
    }
    std::vector<Eigen::Vector2d> gt_pos;
    for (const auto& [label, s] : sums) gt_pos.push_back(s.first / static_cast<double>(s.second));

    while (rec < records.size() && records[rec].t <= t) {
      latest[records[rec].track_id] = &records[rec];
      ++rec;
    }
    std::vector<Eigen::Vector2d> tr_pos;
    for (const auto& [id, r] : latest) {
      if (r->status != TrackStatus::valid) continue;
      if (t - r->t > params.live_tolerance_us) continue;
      tr_pos.push_back(r->state.p + r->state.v * to_seconds(t - r->t));
    }

    const auto matches = greedy_match(gt_pos, tr_pos, params.match_radius);
    MetricsSample s;
    s.t = t;
    s.true_tracks = matches.size();
    s.false_tracks = tr_pos.size() - matches.size();
    s.matched_gt = matches.size();
    s.total_gt = gt_pos.size();
    if (!tr_pos.empty()) {
      s.precision = static_cast<double>(matches.size()) / static_cast<double>(tr_pos.size());
    } else if (gt_pos.empty()) {
      s.precision = 1.0;
    }
    if (!gt_pos.empty()) {
      s.recall = static_cast<double>(matches.size()) / static_cast<double>(gt_pos.size());
    }
    tt.push_back(static_cast<double>(s.true_tracks));
    ft.push_back(static_cast<double>(s.false_tracks));
    mg.push_back(static_cast<double>(s.matched_gt));
    tg.push_back(static_cast<double>(s.total_gt));
    if (s.precision) pr.push_back(*s.precision);
    if (s.recall) rc.push_back(*s.recall);
    report.samples.push_back(s);
  }
  report.true_tracks = mean_std(tt);
  report.false_tracks = mean_std(ft);
  report.matched_gt = mean_std(mg);
  report.total_gt = mean_std(tg);
  report.precision = mean_std(pr);
  report.recall = mean_std(rc);
  return report;
}

nlohmann::json MetricsReport::to_json(const std::string& method) const {
  auto ms = [](const MeanStd& m) {
    return nlohmann::json{{"mean", m.mean}, {"std", m.stddev}, {"n", m.count}};
  };
  nlohmann::json j;
  j["method"] = method;
  j["true_detections"] = ms(true_tracks);
  j["false_detections"] = ms(false_tracks);
  j["precision"] = ms(precision);
  j["recall"] = ms(recall);
  j["ground_truth_objects"] = ms(total_gt);
  j["samples"] = samples.size();
  j["match_radius_px"] = params.match_radius;
  j["cadence_ms"] = static_cast<double>(params.cadence_us) * 1e-3;
  char row[256];
  std::snprintf(row, sizeof(row), "%s | %.2f (%.2f) | %.2f (%.2f) | %.2f (%.2f) | %.2f (%.2f)",
                method.c_str(), true_tracks.mean, true_tracks.stddev, false_tracks.mean,
                false_tracks.stddev, precision.mean, precision.stddev, recall.mean,
                recall.stddev);
  j["table_row"] = row;
  return j;
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t_us,true_tracks,false_tracks,matched_gt,total_gt,precision,recall\n";
  out.precision(6);
  for (const auto& s : report.samples) {
    out << s.t << ',' << s.true_tracks << ',' << s.false_tracks << ',' << s.matched_gt << ','
        << s.total_gt << ',';
    if (s.precision) out << *s.precision;
    out << ',';
    if (s.recall) out << *s.recall;
    out << '\n';
  }
}

// --- rendering --------------------------------------------------------------

namespace {

void put_pixel(Image& img, int x, int y, std::array<std::uint8_t, 3> c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  std::uint8_t* p = img.at(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

// 3x5 digits, one row per entry, bit 2 = leftmost column.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

void draw_number(Image& img, int x, int y, std::uint32_t value, std::array<std::uint8_t, 3> c) {
  const std::string s = std::to_string(value);
  for (char ch : s) {
    const auto& glyph = kDigits[static_cast<std::size_t>(ch - '0')];
    for (int r = 0; r < 5; ++r) {
      for (int col = 0; col < 3; ++col) {
        if (glyph[r] & (4 >> col)) put_pixel(img, x + col, y + r, c);
      }
    }
    x += 4;
  }
}

}  // namespace

void draw_ellipse(Image& image, const Eigen::Vector2d& centre, double theta,
                  const Eigen::Vector2d& semi_axes, std::array<std::uint8_t, 3> colour) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double perimeter = 2.0 * std::numbers::pi * std::max(semi_axes.x(), semi_axes.y());
  const int steps = std::max(16, static_cast<int>(std::ceil(perimeter * 2.0)));
  for (int i = 0; i < steps; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / steps;
    const double a = semi_axes.x() * std::cos(phi);
    const double b = semi_axes.y() * std::sin(phi);
    const double x = centre.x() + c * a - s * b;
    const double y = centre.y() + s * a + c * b;
    put_pixel(image, static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)), colour);
  }
}

std::vector<Image> render(const SensorGeometry& geometry, std::span<const LabeledEvent> events,
                          const std::vector<TrackRecord>& records_in, TimeUs t_begin,
                          TimeUs t_end, const RenderParams& params) {
  if (params.frame_period_us <= 0) throw std::invalid_argument("render frame period must be > 0");
  std::vector<Image> frames;
  if (t_end <= t_begin) return frames;
  const TimeUs period = params.frame_period_us;
  const auto count = static_cast<std::size_t>((t_end - t_begin + period - 1) / period);
  frames.assign(count, Image(geometry.width, geometry.height));

  for (const auto& le : events) {
    const Event& e = le.event;
    if (e.t < t_begin || e.t >= t_end) continue;
    Image& img = frames[static_cast<std::size_t>((e.t - t_begin) / period)];
    put_pixel(img, e.x, e.y, e.polarity > 0 ? kPositiveColour : kNegativeColour);
  }

  std::vector<TrackRecord> records = records_in;
  std::stable_sort(records.begin(), records.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  std::map<std::uint32_t, const TrackRecord*> latest;
  std::size_t rec = 0;
  for (std::size_t f = 0; f < count; ++f) {
    const TimeUs frame_end = std::min(t_end, t_begin + static_cast<TimeUs>(f + 1) * period);
    const TimeUs frame_start = t_begin + static_cast<TimeUs>(f) * period;
    while (rec < records.size() && records[rec].t < frame_end) {
      latest[records[rec].track_id] = &records[rec];
      ++rec;
    }
    for (const auto& [id, r] : latest) {
      if (r->status == TrackStatus::terminated || r->t < frame_start) continue;
      const auto colour = r->status == TrackStatus::valid ? kValidColour : kCandidateColour;
      draw_ellipse(frames[f], r->state.p, r->state.theta, params.ellipse_sigma * r->state.lambda,
                   colour);
      if (params.draw_ids) {
        const double reach = params.ellipse_sigma * r->state.lambda.maxCoeff();
        draw_number(frames[f], static_cast<int>(std::lround(r->state.p.x() + reach + 2)),
                    static_cast<int>(std::lround(r->state.p.y() - reach - 2)), id, colour);
      }
    }
  }
  return frames;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng failed while writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.at(0, y)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace aemot
