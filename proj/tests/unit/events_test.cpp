#include <doctest.h>

#include <sstream>

#include "aemot/events.hpp"

using namespace aemot;

namespace {

EventStream parse(const std::string& text, ReadOptions opt = {}) {
  std::istringstream in(text);
  return read_events(in, EventFormat::csv, opt);
}

}  // namespace

TEST_CASE("csv record maps fields directly") {
  bool labelled = true;
  const LabeledEvent e = parse_csv_record("1000,5,7,1", 2, &labelled);
  CHECK(e.event == Event{1000, 5, 7, 1});
  CHECK(e.label == 0);
  CHECK_FALSE(labelled);

  const LabeledEvent l = parse_csv_record("12,3,4,-1,9", 2, &labelled);
  CHECK(l.event.polarity == -1);
  CHECK(l.label == 9);
  CHECK(labelled);
}

TEST_CASE("csv record rejects bad polarity and junk") {
  CHECK_THROWS_AS(parse_csv_record("1000,5,7,2", 3), EventFormatError);
  CHECK_THROWS_AS(parse_csv_record("1000,5,7,0", 3), EventFormatError);
  CHECK_THROWS_AS(parse_csv_record("1000,5,x,1", 3), EventFormatError);
  CHECK_THROWS_AS(parse_csv_record("1000,5,7", 3), EventFormatError);
  try {
    parse_csv_record("1000,5,7,2", 17);
  } catch (const EventFormatError& err) {
    CHECK(err.position() == 17);
  }
}

TEST_CASE("stream rejects time going backwards") {
  const std::string text = "# width=20 height=20\n500,1,1,1\n400,1,1,1\n";
  CHECK_THROWS_AS(parse(text), EventFormatError);
  // a tolerated jitter is clamped instead
  ReadOptions opt;
  opt.max_regression_us = 200;
  const EventStream s = parse(text, opt);
  REQUIRE(s.events.size() == 2);
  CHECK(s.events[1].event.t == 500);
}

TEST_CASE("stream header and off-sensor pixels") {
  const EventStream s = parse("# width=20 height=10\nt_us,x,y,p\n1,2,3,1\n2,19,9,-1\n");
  CHECK(s.geometry == SensorGeometry{20, 10});
  CHECK(s.events.size() == 2);
  CHECK_FALSE(s.labelled);
  CHECK_THROWS_AS(parse("# width=20 height=10\n1,20,3,1\n"), EventFormatError);
  CHECK_THROWS_AS(parse("1,2,3,1\n"), EventFormatError);
}

TEST_CASE("csv and binary round trips") {
  EventStream s;
  s.geometry = {640, 480};
  s.labelled = true;
  s.events = {{{0, 0, 0, 1}, 0}, {{7, 639, 479, -1}, 3}, {{7, 5, 5, 1}, 70000}, {{(1LL << 40), 1, 2, -1}, 1}};

  std::stringstream csv;
  write_events_csv(csv, s.geometry, s.events, true);
  const EventStream a = read_events(csv, EventFormat::csv);
  CHECK(a.geometry == s.geometry);
  CHECK(a.labelled);
  CHECK(a.events == s.events);

  std::stringstream bin;
  write_events_binary(bin, s.geometry, s.events);
  const std::string bytes = bin.str();
  CHECK(bytes.substr(0, 4) == "AEVT");
  CHECK(bytes.size() == 10 + 17 * s.events.size());
  // record layout: u64 t then u16 x, little-endian
  CHECK(static_cast<unsigned char>(bytes[10 + 17]) == 7);
  CHECK(static_cast<unsigned char>(bytes[10 + 17 + 8]) == (639 & 0xFF));
  const EventStream b = read_events(bin, EventFormat::binary);
  CHECK(b.geometry == s.geometry);
  CHECK(b.events == s.events);
}

TEST_CASE("binary errors") {
  EventStream s;
  s.geometry = {16, 16};
  s.events = {{{1, 2, 3, 1}, 0}, {{2, 2, 3, 1}, 0}};
  std::stringstream bin;
  write_events_binary(bin, s.geometry, s.events);
  std::string bytes = bin.str();

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_events(truncated, EventFormat::binary), EventFormatError);

  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream wrong(bad);
  CHECK_THROWS_AS(read_events(wrong, EventFormat::binary), EventFormatError);

  std::string pol = bytes;
  pol[10 + 12] = 5;
  std::istringstream wrong_pol(pol);
  CHECK_THROWS_AS(read_events(wrong_pol, EventFormat::binary), EventFormatError);
}

TEST_CASE("format from extension") {
  CHECK(format_from_path("a.bin") == EventFormat::binary);
  CHECK(format_from_path("a.aevt") == EventFormat::binary);
  CHECK(format_from_path("a.csv") == EventFormat::csv);
}

TEST_CASE("time conversions") {
  CHECK(to_micros(0.0015) == 1500);
  CHECK(to_seconds(2500) == doctest::Approx(0.0025));
}
