#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "choreo/difficulty.h"
#include "choreo/metrics.h"

namespace choreo::peakpick {

inline constexpr int kDefaultHammingWidth = 5;
inline constexpr double kTolerance = 0.020;
/// Calibration grid 0.00, 0.01, ..., 1.00.
inline constexpr int kNumThresholds = 101;
inline constexpr double threshold_value(int k) { return k / 100.0; }

using Thresholds = std::array<double, kNumDifficulties>;

/// Symmetric Hamming window scaled to unit sum. Width must be odd.
std::vector<double> hamming_kernel(int width);

/// Same-length convolution with the Hamming kernel, zero padded on both sides.
std::vector<float> smooth(std::span<const float> probs, int width = kDefaultHammingWidth);

/// Local maxima at or above `threshold`. A run of equal values acts as one sample reported at
/// its leftmost index; it is a peak when it is >= its left neighbour and > its right one
/// (out-of-range neighbours count as -inf).
std::vector<int> pick_peaks(std::span<const float> smoothed, double threshold);

struct MatchResult {
  metrics::Counts counts;
  /// (prediction index, truth index) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Greedy one-to-one matching: predictions in increasing time order each take the nearest
/// still-unmatched truth within +-tolerance (earlier truth on a distance tie).
MatchResult match_placements(std::span<const double> predicted, std::span<const double> truth, double tolerance = kTolerance);

/// Peak-picking input for one chart.
struct ChartPeaks {
  int difficulty = 0;
  /// Smoothed per-frame probabilities over the whole song.
  std::vector<float> smoothed;
  /// Ground-truth step times, sorted.
  std::vector<double> truth;
};

/// Predicted step times: picked frames that lie within the truth span widened by the tolerance.
std::vector<double> placements(const ChartPeaks& chart, double threshold);

/// Match counts of one chart at every grid threshold.
std::vector<metrics::Counts> threshold_curve(const ChartPeaks& chart);

/// Per difficulty, the grid threshold maximizing pooled (micro) F1; ties go to the smaller
/// threshold. Difficulties without charts get 0.5 with a warning.
Thresholds calibrate_thresholds(const std::vector<ChartPeaks>& validation);
/// Same, from precomputed curves.
Thresholds calibrate_from_curves(const std::vector<std::vector<metrics::Counts>>& curves, const std::vector<int>& difficulties);

/// Index of a threshold on the calibration grid.
int threshold_index(double threshold);

/// JSON object difficulty name -> threshold.
std::string thresholds_json(const Thresholds& thresholds);
Thresholds parse_thresholds_json(const std::string& text);

}  // namespace choreo::peakpick
