#include "choreo/log.h"
#include "choreo/metrics.h"
#include "choreo/placement.h"

namespace choreo::placement {

namespace {

struct ChartOutput {
  const ChartTarget* chart;
  std::vector<float> probs;
};

std::vector<ChartOutput> run_model(const Model& model, std::span<const PlacementSong> songs) {
  std::vector<ChartOutput> out;
  for (const PlacementSong& song : songs) {
    std::vector<Condition> conditions;
    for (const ChartTarget& c : song.charts) conditions.push_back({c.difficulty, c.author});
    if (conditions.empty()) continue;
    auto probs = predict_song(model, song.features, conditions);
    for (std::size_t k = 0; k < song.charts.size(); ++k) out.push_back({&song.charts[k], std::move(probs[k])});
  }
  return out;
}

peakpick::ChartPeaks to_peaks(const ChartOutput& o, int hamming_width) {
  return {o.chart->difficulty, peakpick::smooth(o.probs, hamming_width), o.chart->step_times};
}

}  // namespace

std::vector<peakpick::ChartPeaks> chart_peaks(const Model& model, std::span<const PlacementSong> songs, int hamming_width) {
  std::vector<peakpick::ChartPeaks> out;
  for (const ChartOutput& o : run_model(model, songs)) out.push_back(to_peaks(o, hamming_width));
  return out;
}

peakpick::Thresholds calibrate(const Model& model, std::span<const PlacementSong> valid_songs, int hamming_width) {
  return peakpick::calibrate_thresholds(chart_peaks(model, valid_songs, hamming_width));
}

Evaluation evaluate(const Model& model, std::span<const PlacementSong> songs, const peakpick::Thresholds& thresholds,
                    int hamming_width) {
  Evaluation ev;
  std::vector<std::vector<metrics::Counts>> curves;
  std::vector<int> chosen;
  double ppl = 0.0, auc = 0.0;
  std::size_t auc_charts = 0;
  for (const ChartOutput& o : run_model(model, songs)) {
    const ChartTarget& c = *o.chart;
    const auto range = std::span<const float>(o.probs).subspan(static_cast<std::size_t>(c.first_frame),
                                                               static_cast<std::size_t>(c.last_frame - c.first_frame + 1));
    ppl += metrics::frame_perplexity(range, c.range_labels());
    if (auto a = metrics::auc_pr(range, c.range_labels())) {
      auc += *a;
      ++auc_charts;
    }
    curves.push_back(peakpick::threshold_curve(to_peaks(o, hamming_width)));
    chosen.push_back(peakpick::threshold_index(thresholds[static_cast<std::size_t>(c.difficulty)]));
    ++ev.charts;
  }
  if (ev.charts == 0) return ev;
  ev.perplexity = ppl / static_cast<double>(ev.charts);
  ev.auc_pr = auc_charts > 0 ? auc / static_cast<double>(auc_charts) : 0.0;
  const metrics::FScores f = metrics::fscore_curves(curves, chosen);
  ev.fscore_c = f.fscore_c;
  ev.fscore_m = f.fscore_m;
  metrics::Counts pooled;
  for (std::size_t k = 0; k < curves.size(); ++k) pooled += curves[k][static_cast<std::size_t>(chosen[k])];
  ev.precision_m = metrics::precision(pooled);
  ev.recall_m = metrics::recall(pooled);
  return ev;
}

}  // namespace choreo::placement
