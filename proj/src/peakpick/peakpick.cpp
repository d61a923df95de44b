#include "choreo/peakpick.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "choreo/audio.h"
#include "choreo/error.h"
#include "choreo/log.h"

namespace choreo::peakpick {

std::vector<double> hamming_kernel(int width) {
  if (width < 1 || width % 2 == 0) throw Error("Hamming width must be a positive odd number, got " + std::to_string(width));
  std::vector<double> w(static_cast<std::size_t>(width), 1.0);
  if (width > 1) {
    for (int n = 0; n < width; ++n) w[static_cast<std::size_t>(n)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (width - 1));
  }
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

std::vector<float> smooth(std::span<const float> probs, int width) {
  const std::vector<double> kernel = hamming_kernel(width);
  const int half = width / 2;
  const int n = static_cast<int>(probs.size());
  std::vector<float> out(probs.size());
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -half; k <= half; ++k) {
      const int j = i + k;
      if (j >= 0 && j < n) acc += kernel[static_cast<std::size_t>(k + half)] * probs[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = static_cast<float>(acc);
  }
  return out;
}

std::vector<int> pick_peaks(std::span<const float> s, double threshold) {
  std::vector<int> peaks;
  const int n = static_cast<int>(s.size());
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  for (int i = 0; i < n; ++i) {
    const float v = s[static_cast<std::size_t>(i)];
    if (v < threshold) continue;
    const float left = i > 0 ? s[static_cast<std::size_t>(i - 1)] : kNegInf;
    // A run of equal values acts as one sample reported at its leftmost index.
    int j = i;
    while (j + 1 < n && s[static_cast<std::size_t>(j + 1)] == v) ++j;
    const float right = j + 1 < n ? s[static_cast<std::size_t>(j + 1)] : kNegInf;
    if (v >= left && v > right) peaks.push_back(i);
    i = j;
  }
  return peaks;
}

MatchResult match_placements(std::span<const double> predicted, std::span<const double> truth, double tolerance) {
  MatchResult result;
  std::vector<bool> used(truth.size(), false);
  const double tol = tolerance + 1e-9;
  std::size_t lo = 0;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    const double t = predicted[p];
    while (lo < truth.size() && truth[lo] < t - tol) ++lo;
    std::size_t best = truth.size();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = lo; k < truth.size() && truth[k] <= t + tol; ++k) {
      if (used[k]) continue;
      const double d = std::abs(truth[k] - t);
      if (d < best_dist) {
        best_dist = d;
        best = k;
      }
    }
    if (best < truth.size()) {
      used[best] = true;
      result.pairs.emplace_back(p, best);
    }
  }
  result.counts.tp = result.pairs.size();
  result.counts.fp = predicted.size() - result.counts.tp;
  result.counts.fn = truth.size() - result.counts.tp;
  return result;
}

std::vector<double> placements(const ChartPeaks& chart, double threshold) {
  std::vector<double> times;
  const double lo = chart.truth.empty() ? -std::numeric_limits<double>::infinity() : chart.truth.front() - kTolerance;
  const double hi = chart.truth.empty() ? std::numeric_limits<double>::infinity() : chart.truth.back() + kTolerance;
  for (int i : pick_peaks(chart.smoothed, threshold)) {
    const double t = i * kFrameSeconds;
    if (t >= lo - 1e-9 && t <= hi + 1e-9) times.push_back(t);
  }
  return times;
}

std::vector<metrics::Counts> threshold_curve(const ChartPeaks& chart) {
  const std::vector<double> all = placements(chart, -std::numeric_limits<double>::infinity());
  std::vector<float> heights;
  for (double t : all) heights.push_back(chart.smoothed[static_cast<std::size_t>(std::lround(t / kFrameSeconds))]);
  std::vector<metrics::Counts> curve(kNumThresholds);
  std::vector<double> kept;
  for (int k = 0; k < kNumThresholds; ++k) {
    kept.clear();
    const double theta = threshold_value(k);
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (heights[i] >= theta) kept.push_back(all[i]);
    }
    curve[static_cast<std::size_t>(k)] = match_placements(kept, chart.truth).counts;
  }
  return curve;
}

Thresholds calibrate_from_curves(const std::vector<std::vector<metrics::Counts>>& curves, const std::vector<int>& difficulties) {
  if (curves.size() != difficulties.size()) throw ShapeError("calibrate: one difficulty per chart required");
  Thresholds out{};
  for (int d = 0; d < kNumDifficulties; ++d) {
    std::vector<metrics::Counts> pooled(kNumThresholds);
    bool any = false;
    for (std::size_t c = 0; c < curves.size(); ++c) {
      if (difficulties[c] != d) continue;
      any = true;
      for (int k = 0; k < kNumThresholds; ++k) pooled[static_cast<std::size_t>(k)] += curves[c][static_cast<std::size_t>(k)];
    }
    if (!any) {
      log().warn("no validation charts for difficulty {}; threshold defaults to 0.5", kDifficultyNames[static_cast<std::size_t>(d)]);
      out[static_cast<std::size_t>(d)] = 0.5;
      continue;
    }
    int best = 0;
    double best_f = -1.0;
    for (int k = 0; k < kNumThresholds; ++k) {
      const double f = metrics::f1(pooled[static_cast<std::size_t>(k)]);
      if (f > best_f) {
        best_f = f;
        best = k;
      }
    }
    out[static_cast<std::size_t>(d)] = threshold_value(best);
  }
  return out;
}

Thresholds calibrate_thresholds(const std::vector<ChartPeaks>& validation) {
  std::vector<std::vector<metrics::Counts>> curves;
  std::vector<int> difficulties;
  for (const ChartPeaks& c : validation) {
    curves.push_back(threshold_curve(c));
    difficulties.push_back(c.difficulty);
  }
  return calibrate_from_curves(curves, difficulties);
}

int threshold_index(double threshold) { return std::clamp(static_cast<int>(std::lround(threshold * 100.0)), 0, kNumThresholds - 1); }

std::string thresholds_json(const Thresholds& thresholds) {
  nlohmann::ordered_json doc;
  for (int d = 0; d < kNumDifficulties; ++d) doc[std::string(kDifficultyNames[static_cast<std::size_t>(d)])] = thresholds[static_cast<std::size_t>(d)];
  return doc.dump(2) + "\n";
}

Thresholds parse_thresholds_json(const std::string& text) {
  Thresholds out{};
  out.fill(0.5);
  const auto doc = nlohmann::json::parse(text);
  if (!doc.is_object()) throw FormatError("thresholds file must hold a JSON object");
  for (const auto& [name, value] : doc.items()) {
    const double v = value.get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("threshold for " + name + " outside [0, 1]");
    out[static_cast<std::size_t>(difficulty_index(name))] = v;
  }
  return out;
}

}  // namespace choreo::peakpick
