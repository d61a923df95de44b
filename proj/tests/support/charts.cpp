#include "charts.h"

#include <array>

#include "choreo/difficulty.h"

namespace choreo::testing {

namespace {

constexpr int kTicksPerBeat = kMaxRowsPerMeasure / kBeatsPerMeasure;

int pick(nn::Rng& rng, int n) { return static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n))); }

}  // namespace

Chart random_chart(nn::Rng& rng, int measures, std::span<const TempoChange> tempo_map, double offset) {
  Chart chart;
  chart.difficulty_name = std::string(kDifficultyNames[static_cast<std::size_t>(pick(rng, kNumDifficulties))]);
  chart.difficulty_rating = 1 + pick(rng, 12);
  chart.author = "gen" + std::to_string(pick(rng, 100));
  std::array<bool, kNumArrows> held{};
  for (int m = 0; m < measures; ++m) {
    const int rows = kMeasureRowCounts[static_cast<std::size_t>(pick(rng, static_cast<int>(kMeasureRowCounts.size())))];
    const int spacing = kMaxRowsPerMeasure / rows;
    for (int r = 0; r < rows; ++r) {
      if (rng.uniform() > 0.35) continue;
      StepCombo combo;
      for (int a = 0; a < kNumArrows; ++a) {
        const double u = rng.uniform();
        if (held[a]) {
          if (u < 0.4) {
            combo.arrows[a] = ArrowState::HoldEnd;
            held[a] = false;
          }
        } else if (u < 0.3) {
          combo.arrows[a] = ArrowState::Tap;
        } else if (u < 0.38) {
          combo.arrows[a] = ArrowState::HoldStart;
          held[a] = true;
        }
      }
      if (combo.empty()) continue;
      const long long tick = static_cast<long long>(m) * kMaxRowsPerMeasure + static_cast<long long>(r) * spacing;
      chart.steps.push_back({static_cast<double>(tick) / kTicksPerBeat, 0.0, combo});
    }
  }
  StepCombo release;
  for (int a = 0; a < kNumArrows; ++a) {
    if (held[a]) release.arrows[a] = ArrowState::HoldEnd;
  }
  if (!release.empty()) chart.steps.push_back({static_cast<double>(measures * kBeatsPerMeasure), 0.0, release});
  if (chart.steps.empty()) chart.steps.push_back({0.0, 0.0, StepCombo::from_string("1000")});
  retime(chart, tempo_map, offset);
  return chart;
}

Simfile random_simfile(nn::Rng& rng, int charts, int measures) {
  Simfile s;
  s.title = "Song " + std::to_string(pick(rng, 1000));
  s.artist = "Artist";
  s.audio_path = "song.wav";
  s.offset = (pick(rng, 200) - 100) / 1000.0;
  s.tempo_map.push_back({0.0, 60.0 + pick(rng, 180)});
  const int changes = pick(rng, 3);
  for (int k = 0; k < changes; ++k) {
    const double beat = s.tempo_map.back().beat + 1 + pick(rng, 8) + pick(rng, 4) * 0.25;
    s.tempo_map.push_back({beat, 60.0 + pick(rng, 180) + 0.5 * pick(rng, 2)});
  }
  for (int c = 0; c < charts; ++c) s.charts.push_back(random_chart(rng, measures, s.tempo_map, s.offset));
  return s;
}

std::vector<selection::ChartSequence> toy_sequences(bool keyed, int charts, int length, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<selection::ChartSequence> out;
  for (int k = 0; k < charts; ++k) {
    Chart chart;
    double beat = 4.0;
    for (int i = 0; i < length; ++i) {
      StepCombo combo;
      combo.arrows[static_cast<std::size_t>(keyed ? selection::beat_phase_index(beat) : 0)] = ArrowState::Tap;
      chart.steps.push_back({beat, beat * 0.5, combo});
      beat += 0.25 * (1 + pick(rng, 4));
    }
    out.push_back(*selection::make_sequence((keyed ? "keyed" : "fixed") + std::to_string(k), chart));
  }
  return out;
}

}  // namespace choreo::testing
