#include <doctest.h>

#include <cmath>
#include <set>

#include "charts.h"
#include "choreo/difficulty.h"
#include "choreo/error.h"
#include "choreo/simfile.h"

using namespace choreo;

namespace {

std::string one_chart(const std::string& notes, const std::string& bpms = "0=120", const std::string& offset = "0") {
  return "#TITLE:T;\n#ARTIST:A;\n#MUSIC:a.wav;\n#OFFSET:" + offset + ";\n#BPMS:" + bpms +
         ";\n#NOTES:\n dance-single:\n me:\n Hard:\n 9:\n 0,0,0,0,0:\n" + notes + "\n;\n";
}

}  // namespace

TEST_SUITE("simfile") {

TEST_CASE("combo index and digits") {
  CHECK(StepCombo::from_string("1000").index() == 64);
  CHECK(StepCombo::from_index(64).to_string() == "1000");
  for (int i = 0; i < kNumCombos; ++i) CHECK(StepCombo::from_index(i).index() == i);
  CHECK(StepCombo::from_string("0000").empty());
  CHECK(StepCombo::from_string("1203").count(ArrowState::Tap) == 1);
}

TEST_CASE("one tapped measure at 120 BPM") {
  const Simfile s = parse_simfile(one_chart("1000\n0000\n0000\n0000"));
  REQUIRE(s.charts.size() == 1);
  REQUIRE(s.charts[0].steps.size() == 1);
  CHECK(s.charts[0].steps[0].beat == 0.0);
  CHECK(s.charts[0].steps[0].combo == StepCombo::from_string("1000"));
  CHECK(s.charts[0].difficulty_name == "Hard");
  CHECK(s.charts[0].difficulty_rating == 9);
  CHECK(s.charts[0].author == "me");
  CHECK(s.audio_path == "a.wav");
}

TEST_CASE("row 3 of an 8-row measure sits at beat 1.5") {
  const Simfile s = parse_simfile(one_chart("0000\n0000\n0000\n0100\n0000\n0000\n0000\n0000"));
  REQUIRE(s.charts[0].steps.size() == 1);
  CHECK(s.charts[0].steps[0].beat == 1.5);
  CHECK(s.charts[0].steps[0].time == doctest::Approx(0.75));
}

TEST_CASE("second measure and comments") {
  const Simfile s = parse_simfile(one_chart("0000\n0000\n0000\n0000\n, // measure 2\n0001\n0000\n0000\n0000"));
  REQUIRE(s.charts[0].steps.size() == 1);
  CHECK(s.charts[0].steps[0].beat == 4.0);
}

TEST_CASE("parse errors carry the line") {
  CHECK_THROWS_AS(parse_simfile(one_chart("1000\n00M0\n0000\n0000")), ParseError);
  CHECK_THROWS_AS(parse_simfile(one_chart("4000\n0000\n0000\n0000")), ParseError);
  CHECK_THROWS_AS(parse_simfile(one_chart("1000\n0000\n0000\n0000", "0=-120")), ParseError);
  CHECK_THROWS_AS(parse_simfile(one_chart("1000\n0000\n0000")), ParseError);
  CHECK_THROWS_AS(parse_simfile(one_chart("3000\n0000\n0000\n0000")), ParseError);
  try {
    parse_simfile(one_chart("1000\n0000\n00x0\n0000"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 14);
  }
}

TEST_CASE("beat_to_time examples") {
  const std::vector<TempoChange> constant{{0.0, 120.0}};
  CHECK(beat_to_time(2.0, constant, 0.0) == doctest::Approx(1.0));
  const std::vector<TempoChange> change{{0.0, 60.0}, {4.0, 120.0}};
  CHECK(beat_to_time(6.0, change, 0.0) == doctest::Approx(5.0));
  CHECK(beat_to_time(0.0, constant, 0.5) == doctest::Approx(-0.5));
}

TEST_CASE("offset sign follows the file") {
  const Simfile s = parse_simfile(one_chart("0000\n1000\n0000\n0000", "0=60", "0.25"));
  CHECK(s.offset == 0.25);
  CHECK(s.charts[0].steps[0].time == doctest::Approx(1.0 - 0.25));
}

TEST_CASE("beat_to_time is increasing and continuous") {
  nn::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Simfile s = testing::random_simfile(rng, 0);
    double prev = beat_to_time(0.0, s.tempo_map, s.offset);
    for (double b = 0.01; b < 40.0; b += 0.01) {
      const double t = beat_to_time(b, s.tempo_map, s.offset);
      CHECK(t > prev);
      CHECK(t - prev < 0.011);
      prev = t;
    }
  }
}

TEST_CASE("invalid tempo maps") {
  CHECK_THROWS_AS(validate_tempo_map(std::vector<TempoChange>{}), Error);
  CHECK_THROWS_AS(validate_tempo_map(std::vector<TempoChange>{{1.0, 120.0}}), Error);
  CHECK_THROWS_AS(validate_tempo_map(std::vector<TempoChange>{{0.0, 120.0}, {0.0, 100.0}}), Error);
  CHECK_THROWS_AS(validate_tempo_map(std::vector<TempoChange>{{0.0, 0.0}}), Error);
}

TEST_CASE("mirror examples") {
  CHECK(mirror(StepCombo::from_string("1000"), MirrorAxis::LeftRight) == StepCombo::from_string("0001"));
  CHECK(mirror(StepCombo::from_string("0210"), MirrorAxis::UpDown) == StepCombo::from_string("0120"));
  CHECK(mirror(StepCombo::from_string("1200"), MirrorAxis::Both) == StepCombo::from_string("0021"));
}

TEST_CASE("mirroring is an involution that keeps timing and hold validity") {
  nn::Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Simfile s = testing::random_simfile(rng, 1);
    const Chart& c = s.charts[0];
    for (MirrorAxis axis : {MirrorAxis::LeftRight, MirrorAxis::UpDown, MirrorAxis::Both}) {
      const Chart m = mirror_chart(c, axis);
      CHECK(mirror_chart(m, axis) == c);
      REQUIRE(m.steps.size() == c.steps.size());
      for (std::size_t i = 0; i < c.steps.size(); ++i) {
        CHECK(m.steps[i].beat == c.steps[i].beat);
        CHECK(m.steps[i].time == c.steps[i].time);
      }
      CHECK_FALSE(find_hold_violation(m.steps).has_value());
    }
  }
}

TEST_CASE("augmentation makes four instances") {
  nn::Rng rng(6);
  const Simfile s = testing::random_simfile(rng, 1);
  const auto out = augment_dataset(s.charts);
  REQUIRE(out.size() == 4);
  CHECK(out[0] == s.charts[0]);
  CHECK(out[1] == mirror_chart(s.charts[0], MirrorAxis::LeftRight));
  CHECK(out[2] == mirror_chart(s.charts[0], MirrorAxis::UpDown));
  CHECK(out[3] == mirror_chart(s.charts[0], MirrorAxis::Both));

  Chart jumps;
  for (int i = 0; i < 8; ++i) jumps.steps.push_back({static_cast<double>(i), i * 0.5, StepCombo::from_string("1111")});
  const std::vector<Chart> one{jumps};
  for (const Chart& c : augment_dataset(one)) CHECK(c == jumps);
}

TEST_CASE("mirror-closed vocabulary keeps its size") {
  nn::Rng rng(7);
  std::vector<Chart> charts;
  for (int i = 0; i < 5; ++i) charts.push_back(testing::random_simfile(rng, 1).charts[0]);
  const auto closed = augment_dataset(charts);
  std::set<int> vocab;
  for (const Chart& c : closed) {
    for (const auto& s : c.steps) vocab.insert(s.combo.index());
  }
  std::set<int> mirrored;
  for (const Chart& c : augment_dataset(closed)) {
    for (const auto& s : c.steps) mirrored.insert(s.combo.index());
  }
  CHECK(vocab == mirrored);
}

TEST_CASE("hold violations") {
  std::vector<TimedStep> steps{{0, 0, StepCombo::from_string("2000")}, {1, 0.5, StepCombo::from_string("1000")}};
  REQUIRE(find_hold_violation(steps).has_value());
  CHECK(find_hold_violation(steps)->step_index == 1);
  steps[1].combo = StepCombo::from_string("3000");
  CHECK_FALSE(find_hold_violation(steps).has_value());
  steps[1].combo = StepCombo::from_string("0300");
  CHECK(find_hold_violation(steps)->arrow == 1);
}

TEST_CASE("subdivision classes") {
  CHECK(subdivision_class(3.0) == Subdivision::Quarter);
  CHECK(subdivision_class(2.5) == Subdivision::Eighth);
  CHECK(subdivision_class(1.0 / 3.0) == Subdivision::Twelfth);
  CHECK(subdivision_class(0.25) == Subdivision::Sixteenth);
  CHECK(subdivision_class(1.0 / 6.0) == Subdivision::TwentyFourth);
  CHECK(subdivision_class(0.125) == Subdivision::ThirtySecond);
  CHECK(subdivision_class(0.1) == Subdivision::Other);
  CHECK(subdivision_class(3.00005) == Subdivision::Quarter);
}

TEST_CASE("subdivision histogram sums to the step count") {
  nn::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Chart c = testing::random_simfile(rng, 1).charts[0];
    std::size_t total = 0;
    for (std::size_t n : subdivision_histogram(c)) total += n;
    CHECK(total == c.steps.size());
  }
}

TEST_CASE("ten steps over five seconds is two steps per second") {
  Chart c;
  c.difficulty_name = "Easy";
  for (int i = 0; i < 10; ++i) c.steps.push_back({static_cast<double>(i), 5.0 * i / 9.0, StepCombo::from_string("1000")});
  Simfile s;
  s.tempo_map = {{0.0, 108.0}};
  s.charts = {c};
  const std::vector<SongRecord> songs{{"song", s, 60.0}};
  const DatasetStats st = dataset_stats(songs);
  CHECK(st.num_songs == 1);
  CHECK(st.num_charts == 1);
  CHECK(st.steps_per_sec == doctest::Approx(2.0));
  CHECK(st.vocab_size == 1);
  CHECK(st.total_audio_hours == doctest::Approx(60.0 / 3600.0));
  CHECK(st.single_arrow_fraction == 1.0);
}

TEST_CASE("stats skip hours for songs without audio") {
  nn::Rng rng(9);
  const std::vector<SongRecord> songs{{"a", testing::random_simfile(rng, 2), 30.0},
                                      {"b", testing::random_simfile(rng, 3), std::nullopt}};
  const DatasetStats st = dataset_stats(songs);
  CHECK(st.num_songs == 2);
  CHECK(st.num_charts == 5);
  CHECK(st.total_audio_hours == doctest::Approx(30.0 / 3600.0));
  CHECK(st.missing_audio == std::vector<std::string>{"b"});
}

TEST_CASE("writing snaps to the grid and uses the smallest row count") {
  Simfile s;
  s.tempo_map = {{0.0, 120.0}};
  Chart c;
  c.difficulty_name = "Easy";
  c.steps = {{0.0, 0, StepCombo::from_string("1000")}, {1.000001, 0, StepCombo::from_string("0100")},
             {2.5, 0, StepCombo::from_string("0010")}};
  s.charts = {c};
  const std::string text = write_simfile(s);
  CHECK(text.find("1000\n0000\n0100\n0000\n0000\n0010\n0000\n0000\n") != std::string::npos);
  const Simfile back = parse_simfile(text);
  CHECK(back.charts[0].steps[1].beat == 1.0);

  c.steps = {{0.0, 0, StepCombo::from_string("1000")}, {3.0, 0, StepCombo::from_string("0001")}};
  s.charts = {c};
  CHECK(write_simfile(s).find("1000\n0000\n0000\n0001\n;") != std::string::npos);
}

TEST_CASE("colliding steps merge by arrow precedence") {
  Simfile s;
  s.tempo_map = {{0.0, 120.0}};
  Chart c;
  c.difficulty_name = "Easy";
  c.steps = {{0.0, 0, StepCombo::from_string("2100")},
             {1.0, 0, StepCombo::from_string("1000")},
             {1.001, 0, StepCombo::from_string("3010")}};
  s.charts = {c};
  const Simfile back = parse_simfile(write_simfile(s));
  REQUIRE(back.charts[0].steps.size() == 2);
  CHECK(back.charts[0].steps[1].combo == StepCombo::from_string("3010"));
}

TEST_CASE("write drops the later conflicting hold event") {
  Simfile s;
  s.tempo_map = {{0.0, 120.0}};
  Chart c;
  c.difficulty_name = "Easy";
  c.steps = {{0.0, 0, StepCombo::from_string("2000")}, {1.0, 0, StepCombo::from_string("1100")},
             {2.0, 0, StepCombo::from_string("3000")}};
  s.charts = {c};
  const Simfile back = parse_simfile(write_simfile(s));
  REQUIRE(back.charts[0].steps.size() == 3);
  CHECK(back.charts[0].steps[1].combo == StepCombo::from_string("0100"));
  CHECK_FALSE(find_hold_violation(back.charts[0].steps).has_value());
}

TEST_CASE("parse of write is the identity on grid charts") {
  nn::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Simfile s = testing::random_simfile(rng, 1 + trial % 3);
    const std::string text = write_simfile(s);
    const Simfile back = parse_simfile(text);
    REQUIRE(back.charts.size() == s.charts.size());
    CHECK(back.title == s.title);
    CHECK(back.offset == s.offset);
    CHECK(back.tempo_map == s.tempo_map);
    for (std::size_t c = 0; c < s.charts.size(); ++c) {
      REQUIRE(back.charts[c].steps.size() == s.charts[c].steps.size());
      for (std::size_t i = 0; i < s.charts[c].steps.size(); ++i) {
        CHECK(back.charts[c].steps[i].beat == s.charts[c].steps[i].beat);
        CHECK(back.charts[c].steps[i].combo == s.charts[c].steps[i].combo);
        CHECK(back.charts[c].steps[i].time == doctest::Approx(s.charts[c].steps[i].time).epsilon(1e-12));
      }
    }
    CHECK(write_simfile(back) == text);
  }
}

TEST_CASE("difficulty classes") {
  CHECK(difficulty_index("Hard") == 3);
  CHECK(difficulty_class("challenge", 10) == 4);
  CHECK(difficulty_class("Expert", 10) == 4);
  CHECK_THROWS_AS(difficulty_index("Insane"), Error);
  CHECK(difficulty_class("Edit", 1) == 0);
  CHECK(difficulty_class("Edit", 7) == 3);
}

}
