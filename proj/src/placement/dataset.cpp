#include <cmath>

#include "choreo/log.h"
#include "choreo/placement.h"

namespace choreo::placement {

std::optional<ChartTarget> make_target(const std::string& name, const Chart& chart, int frames, int author) {
  ChartTarget target;
  target.name = name;
  target.difficulty = difficulty_class(chart.difficulty_name, chart.difficulty_rating);
  target.author = author;
  target.labels.assign(static_cast<std::size_t>(frames), 0.0f);
  std::size_t dropped = 0;
  int first = frames, last = -1;
  for (const TimedStep& step : chart.steps) {
    const long frame = std::lround(step.time / kFrameSeconds);
    if (frame < 0 || frame >= frames) {
      ++dropped;
      continue;
    }
    target.labels[static_cast<std::size_t>(frame)] = 1.0f;
    target.step_times.push_back(step.time);
    first = std::min(first, static_cast<int>(frame));
    last = std::max(last, static_cast<int>(frame));
  }
  if (dropped > 0) log().warn("{}: {} steps fall outside the audio and were dropped", name, dropped);
  if (last < 0) {
    log().warn("{}: no steps within the audio; chart skipped", name);
    return std::nullopt;
  }
  target.first_frame = first;
  target.last_frame = last;
  return target;
}

PlacementSong make_song(const std::string& name, MelSpectrogram features, const Simfile& simfile,
                        const std::map<std::string, int>& authors) {
  PlacementSong song;
  song.name = name;
  for (const Chart& chart : simfile.charts) {
    int author = -1;
    if (auto it = authors.find(chart.author); it != authors.end()) author = it->second;
    auto target = make_target(name + ":" + chart.difficulty_name, chart, features.frames, author);
    if (target) song.charts.push_back(std::move(*target));
  }
  song.features = std::move(features);
  return song;
}

double label_prevalence(std::span<const PlacementSong> songs) {
  double positives = 0.0, total = 0.0;
  for (const PlacementSong& song : songs) {
    for (const ChartTarget& chart : song.charts) {
      for (float y : chart.range_labels()) positives += y;
      total += chart.last_frame - chart.first_frame + 1;
    }
  }
  return total > 0.0 ? positives / total : 0.0;
}

}  // namespace choreo::placement
