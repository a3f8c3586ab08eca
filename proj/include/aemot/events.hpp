#pragma once

// Event data model and stream I/O.
//
// CSV:    "# width=<w> height=<h>", optional column header, then "t_us,x,y,p[,label]".
// Binary: "AEVT", u16 version, u16 width, u16 height, then packed little-endian
//         records (u64 t_us, u16 x, u16 y, i8 p, u32 label).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aemot {

/// Microseconds since stream start.
using TimeUs = std::int64_t;

inline constexpr double to_seconds(TimeUs t) { return static_cast<double>(t) * 1e-6; }
inline constexpr TimeUs to_micros(double seconds) {
  return static_cast<TimeUs>(seconds * 1e6 + (seconds >= 0 ? 0.5 : -0.5));
}

struct SensorGeometry {
  int width = 0;
  int height = 0;

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

struct Event {
  TimeUs t = 0;
  int x = 0;
  int y = 0;
  int polarity = 1;  // +1 or -1

  friend bool operator==(const Event&, const Event&) = default;
};

struct LabeledEvent {
  Event event;
  std::uint32_t label = 0;  // 0 = background

  friend bool operator==(const LabeledEvent&, const LabeledEvent&) = default;
};

struct EventStream {
  SensorGeometry geometry;
  std::vector<LabeledEvent> events;
  bool labelled = false;
};

enum class EventFormat { csv, binary };

/// Guesses the format from the file extension (.bin/.aevt -> binary, else csv).
EventFormat format_from_path(const std::filesystem::path& path);

/// Raised for malformed input; carries the 1-based line (CSV) or byte offset (binary).
class EventFormatError : public std::runtime_error {
 public:
  EventFormatError(const std::string& what, std::uint64_t position)
      : std::runtime_error(what), position_(position) {}
  std::uint64_t position() const { return position_; }

 private:
  std::uint64_t position_;
};

struct ReadOptions {
  /// Timestamp regressions up to this many microseconds are clamped to the previous time;
  /// larger ones raise EventFormatError.
  TimeUs max_regression_us = 0;
};

/// Single-pass reader. The geometry header is parsed on construction.
class EventReader {
 public:
  EventReader(std::unique_ptr<std::istream> in, EventFormat format, ReadOptions options = {});
  static EventReader open(const std::filesystem::path& path, ReadOptions options = {});
  static EventReader open(const std::filesystem::path& path, EventFormat format,
                          ReadOptions options = {});

  const SensorGeometry& geometry() const { return geometry_; }
  /// True once a record carrying a label column has been seen (binary is always labelled).
  bool labelled() const { return labelled_; }

  std::optional<LabeledEvent> next();

 private:
  std::optional<LabeledEvent> next_csv();
  std::optional<LabeledEvent> next_binary();
  LabeledEvent check(LabeledEvent e, std::uint64_t position);

  std::unique_ptr<std::istream> in_;
  EventFormat format_;
  ReadOptions options_;
  SensorGeometry geometry_;
  bool labelled_ = false;
  std::uint64_t position_ = 0;
  std::optional<TimeUs> last_t_;
  std::string line_;
};

/// Parses one CSV record "t,x,y,p[,label]". Throws EventFormatError at `line`.
LabeledEvent parse_csv_record(std::string_view text, std::uint64_t line, bool* has_label = nullptr);

EventStream read_events(const std::filesystem::path& path, ReadOptions options = {});
EventStream read_events(std::istream& in, EventFormat format, ReadOptions options = {});

void write_events_csv(std::ostream& out, const SensorGeometry& geometry,
                      std::span<const LabeledEvent> events, bool labelled);
void write_events_binary(std::ostream& out, const SensorGeometry& geometry,
                         std::span<const LabeledEvent> events);
void write_events(const std::filesystem::path& path, const EventStream& stream);
void write_events(const std::filesystem::path& path, const EventStream& stream,
                  EventFormat format);

}  // namespace aemot
