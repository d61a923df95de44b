#include <set>

#include "choreo/log.h"
#include "choreo/simfile.h"

namespace choreo {

DatasetStats dataset_stats(std::span<const SongRecord> songs) {
  DatasetStats stats;
  std::set<int> vocab;
  double audio_seconds = 0.0;
  double chart_seconds = 0.0;
  double span_seconds = 0.0;
  std::size_t single_arrow = 0;

  for (const SongRecord& song : songs) {
    ++stats.num_songs;
    stats.num_charts += song.simfile.charts.size();
    if (song.audio_seconds) {
      audio_seconds += *song.audio_seconds;
      chart_seconds += *song.audio_seconds * static_cast<double>(song.simfile.charts.size());
    } else {
      log().warn("no audio duration for '{}'; excluded from hour totals", song.name);
      stats.missing_audio.push_back(song.name);
    }
    for (const Chart& chart : song.simfile.charts) {
      auto& hist = stats.subdivisions[chart.difficulty_name];
      const auto chart_hist = subdivision_histogram(chart);
      for (int k = 0; k < kNumSubdivisions; ++k) hist[static_cast<std::size_t>(k)] += chart_hist[static_cast<std::size_t>(k)];
      stats.total_steps += chart.steps.size();
      for (const TimedStep& step : chart.steps) {
        vocab.insert(step.combo.index());
        if (step.combo.count(ArrowState::Tap) == 1 && step.combo.count(ArrowState::Off) == kNumArrows - 1) ++single_arrow;
      }
      if (chart.steps.size() >= 2) span_seconds += chart.steps.back().time - chart.steps.front().time;
    }
  }
  stats.total_audio_hours = audio_seconds / 3600.0;
  stats.total_chart_hours = chart_seconds / 3600.0;
  stats.steps_per_sec = span_seconds > 0.0 ? static_cast<double>(stats.total_steps) / span_seconds : 0.0;
  stats.vocab_size = vocab.size();
  stats.single_arrow_fraction =
      stats.total_steps > 0 ? static_cast<double>(single_arrow) / static_cast<double>(stats.total_steps) : 0.0;
  return stats;
}

}  // namespace choreo
