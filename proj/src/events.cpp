#include "aemot/events.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace aemot {
namespace {

constexpr std::array<char, 4> kBinaryMagic{'A', 'E', 'V', 'T'};
constexpr std::uint16_t kBinaryVersion = 1;
constexpr std::size_t kRecordSize = 8 + 2 + 2 + 1 + 4;

template <typename T>
void put_le(char* dst, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    dst[i] = static_cast<char>(u & 0xFFu);
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(const char* src) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(src[i])) << (8 * i));
  }
  return static_cast<T>(u);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_field(std::string_view field, std::uint64_t line, const char* name) {
  field = trim(field);
  T value{};
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw EventFormatError("line " + std::to_string(line) + ": malformed " + name + " field '" +
                               std::string(field) + "'",
                           line);
  }
  return value;
}

SensorGeometry parse_csv_header(std::string_view text) {
  // "# width=<w> height=<h>"
  SensorGeometry g;
  bool have_w = false;
  bool have_h = false;
  text.remove_prefix(1);
  std::istringstream ss{std::string(text)};
  std::string token;
  while (ss >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string_view val = std::string_view(token).substr(eq + 1);
    if (key == "width") {
      g.width = parse_field<int>(val, 1, "width");
      have_w = true;
    } else if (key == "height") {
      g.height = parse_field<int>(val, 1, "height");
      have_h = true;
    }
  }
  if (!have_w || !have_h || g.width <= 0 || g.height <= 0) {
    throw EventFormatError("line 1: expected header '# width=<w> height=<h>'", 1);
  }
  return g;
}

}  // namespace

EventFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".bin" || ext == ".aevt") return EventFormat::binary;
  return EventFormat::csv;
}

LabeledEvent parse_csv_record(std::string_view text, std::uint64_t line, bool* has_label) {
  std::array<std::string_view, 6> fields{};
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    if (count == fields.size()) {
      throw EventFormatError("line " + std::to_string(line) + ": too many fields", line);
    }
    fields[count++] = text.substr(start, end - start);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (count != 4 && count != 5) {
    throw EventFormatError("line " + std::to_string(line) + ": expected 4 or 5 fields, got " +
                               std::to_string(count),
                           line);
  }
  LabeledEvent e;
  e.event.t = parse_field<TimeUs>(fields[0], line, "timestamp");
  e.event.x = parse_field<int>(fields[1], line, "x");
  e.event.y = parse_field<int>(fields[2], line, "y");
  const int p = parse_field<int>(fields[3], line, "polarity");
  if (p != 1 && p != -1) {
    throw EventFormatError("line " + std::to_string(line) + ": invalid polarity " +
                               std::to_string(p) + " (expected 1 or -1)",
                           line);
  }
  e.event.polarity = p;
  if (count == 5) e.label = parse_field<std::uint32_t>(fields[4], line, "label");
  if (has_label != nullptr) *has_label = count == 5;
  return e;
}

EventReader::EventReader(std::unique_ptr<std::istream> in, EventFormat format, ReadOptions options)
    : in_(std::move(in)), format_(format), options_(options) {
  if (!in_ || !*in_) throw EventFormatError("cannot read event source", 0);
  if (format_ == EventFormat::csv) {
    if (!std::getline(*in_, line_)) throw EventFormatError("empty event file", 1);
    position_ = 1;
    if (line_.empty() || line_[0] != '#') {
      throw EventFormatError("line 1: expected header '# width=<w> height=<h>'", 1);
    }
    geometry_ = parse_csv_header(line_);
  } else {
    std::array<char, 10> header{};
    in_->read(header.data(), header.size());
    if (in_->gcount() != static_cast<std::streamsize>(header.size())) {
      throw EventFormatError("truncated binary header", 0);
    }
    if (std::memcmp(header.data(), kBinaryMagic.data(), kBinaryMagic.size()) != 0) {
      throw EventFormatError("bad magic: not an AEVT event file", 0);
    }
    const auto version = get_le<std::uint16_t>(header.data() + 4);
    if (version != kBinaryVersion) {
      throw EventFormatError("unsupported AEVT version " + std::to_string(version), 4);
    }
    geometry_.width = get_le<std::uint16_t>(header.data() + 6);
    geometry_.height = get_le<std::uint16_t>(header.data() + 8);
    position_ = header.size();
    labelled_ = true;
  }
}

EventReader EventReader::open(const std::filesystem::path& path, ReadOptions options) {
  return open(path, format_from_path(path), options);
}

EventReader EventReader::open(const std::filesystem::path& path, EventFormat format,
                              ReadOptions options) {
  auto mode = std::ios::in;
  if (format == EventFormat::binary) mode |= std::ios::binary;
  auto f = std::make_unique<std::ifstream>(path, mode);
  if (!*f) throw std::runtime_error("cannot open event file: " + path.string());
  return EventReader(std::move(f), format, options);
}

LabeledEvent EventReader::check(LabeledEvent e, std::uint64_t position) {
  if (!geometry_.contains(e.event.x, e.event.y)) {
    throw EventFormatError("record " + std::to_string(position) + ": pixel (" +
                               std::to_string(e.event.x) + "," + std::to_string(e.event.y) +
                               ") outside sensor",
                           position);
  }
  if (last_t_ && e.event.t < *last_t_) {
    if (*last_t_ - e.event.t > options_.max_regression_us) {
      throw EventFormatError("record " + std::to_string(position) +
                                 ": non-monotonic timestamp " + std::to_string(e.event.t) +
                                 " after " + std::to_string(*last_t_),
                             position);
    }
    e.event.t = *last_t_;
  }
  last_t_ = e.event.t;
  return e;
}

std::optional<LabeledEvent> EventReader::next() {
  return format_ == EventFormat::csv ? next_csv() : next_binary();
}

std::optional<LabeledEvent> EventReader::next_csv() {
  while (std::getline(*in_, line_)) {
    ++position_;
    const std::string_view text = trim(line_);
    if (text.empty() || text.front() == '#') continue;
    if (text.front() == 't') continue;  // column header
    bool has_label = false;
    LabeledEvent e = parse_csv_record(text, position_, &has_label);
    labelled_ = labelled_ || has_label;
    return check(e, position_);
  }
  return std::nullopt;
}

std::optional<LabeledEvent> EventReader::next_binary() {
  std::array<char, kRecordSize> rec{};
  in_->read(rec.data(), rec.size());
  const auto got = in_->gcount();
  if (got == 0) return std::nullopt;
  if (got != static_cast<std::streamsize>(rec.size())) {
    throw EventFormatError("truncated record at byte offset " + std::to_string(position_),
                           position_);
  }
  const std::uint64_t offset = position_;
  position_ += rec.size();
  LabeledEvent e;
  e.event.t = static_cast<TimeUs>(get_le<std::uint64_t>(rec.data()));
  e.event.x = get_le<std::uint16_t>(rec.data() + 8);
  e.event.y = get_le<std::uint16_t>(rec.data() + 10);
  const auto p = static_cast<std::int8_t>(rec[12]);
  if (p != 1 && p != -1) {
    throw EventFormatError("byte offset " + std::to_string(offset) + ": invalid polarity " +
                               std::to_string(p),
                           offset);
  }
  e.event.polarity = p;
  e.label = get_le<std::uint32_t>(rec.data() + 13);
  return check(e, offset);
}

EventStream read_events(const std::filesystem::path& path, ReadOptions options) {
  EventReader reader = EventReader::open(path, options);
  EventStream s;
  s.geometry = reader.geometry();
  while (auto e = reader.next()) s.events.push_back(*e);
  s.labelled = reader.labelled();
  return s;
}

EventStream read_events(std::istream& in, EventFormat format, ReadOptions options) {
  // Borrow the caller's stream through a non-owning streambuf wrapper.
  auto view = std::make_unique<std::istream>(in.rdbuf());
  EventReader reader(std::move(view), format, options);
  EventStream s;
  s.geometry = reader.geometry();
  while (auto e = reader.next()) s.events.push_back(*e);
  s.labelled = reader.labelled();
  return s;
}

void write_events_csv(std::ostream& out, const SensorGeometry& geometry,
                      std::span<const LabeledEvent> events, bool labelled) {
  out << "# width=" << geometry.width << " height=" << geometry.height << '\n';
  out << (labelled ? "t_us,x,y,p,label\n" : "t_us,x,y,p\n");
  std::array<char, 96> buf{};
  for (const auto& le : events) {
    char* p = buf.data();
    char* end = buf.data() + buf.size();
    auto put = [&](auto v) {
      p = std::to_chars(p, end, v).ptr;
    };
    put(le.event.t);
    *p++ = ',';
    put(le.event.x);
    *p++ = ',';
    put(le.event.y);
    *p++ = ',';
    put(le.event.polarity);
    if (labelled) {
      *p++ = ',';
      put(le.label);
    }
    *p++ = '\n';
    out.write(buf.data(), p - buf.data());
  }
}

void write_events_binary(std::ostream& out, const SensorGeometry& geometry,
                         std::span<const LabeledEvent> events) {
  std::array<char, 10> header{};
  std::memcpy(header.data(), kBinaryMagic.data(), kBinaryMagic.size());
  put_le<std::uint16_t>(header.data() + 4, kBinaryVersion);
  put_le<std::uint16_t>(header.data() + 6, static_cast<std::uint16_t>(geometry.width));
  put_le<std::uint16_t>(header.data() + 8, static_cast<std::uint16_t>(geometry.height));
  out.write(header.data(), header.size());
  std::vector<char> chunk;
  chunk.reserve(kRecordSize * 4096);
  for (const auto& le : events) {
    std::array<char, kRecordSize> rec{};
    put_le<std::uint64_t>(rec.data(), static_cast<std::uint64_t>(le.event.t));
    put_le<std::uint16_t>(rec.data() + 8, static_cast<std::uint16_t>(le.event.x));
    put_le<std::uint16_t>(rec.data() + 10, static_cast<std::uint16_t>(le.event.y));
    rec[12] = static_cast<char>(static_cast<std::int8_t>(le.event.polarity));
    put_le<std::uint32_t>(rec.data() + 13, le.label);
    chunk.insert(chunk.end(), rec.begin(), rec.end());
    if (chunk.size() >= kRecordSize * 4096) {
      out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
      chunk.clear();
    }
  }
  out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
}

void write_events(const std::filesystem::path& path, const EventStream& stream) {
  write_events(path, stream, format_from_path(path));
}

void write_events(const std::filesystem::path& path, const EventStream& stream,
                  EventFormat format) {
  auto mode = std::ios::out | std::ios::trunc;
  if (format == EventFormat::binary) mode |= std::ios::binary;
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write event file: " + path.string());
  if (format == EventFormat::binary) {
    write_events_binary(out, stream.geometry, stream.events);
  } else {
    write_events_csv(out, stream.geometry, stream.events, stream.labelled);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace aemot
