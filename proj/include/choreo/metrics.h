#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace choreo::metrics {

/// exp of the mean binary cross-entropy (natural log, probabilities clamped to [1e-7, 1-1e-7]).
double frame_perplexity(std::span<const float> probs, std::span<const float> labels);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

/// One point per distinct score threshold, from the highest threshold down; recall is
/// non-decreasing along the curve.
std::vector<PrPoint> pr_curve(std::span<const float> scores, std::span<const float> labels);

/// Step-wise area under the precision-recall curve: sum of (R_k - R_{k-1}) * P_k.
/// Empty when there are no positive labels.
std::optional<double> auc_pr(std::span<const float> scores, std::span<const float> labels);

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const Counts&) const = default;
};

double precision(const Counts& c);
double recall(const Counts& c);
/// Harmonic mean of precision and recall; 0 when there are no true positives.
double f1(const Counts& c);

struct FScores {
  double fscore_c = 0.0;
  double fscore_m = 0.0;
};

/// `curves[chart][k]` are the counts of that chart at threshold index k; `chosen[chart]` is the
/// calibrated threshold index of the chart's difficulty. fscore_c averages each chart's best F1
/// over thresholds, fscore_m is F1 of the counts summed at the chosen thresholds.
FScores fscore_curves(const std::vector<std::vector<Counts>>& curves, const std::vector<int>& chosen);

/// Per-step next-token predictions of one chart: scores[i] over the vocabulary and the true target.
struct SelectionPrediction {
  std::vector<double> distribution;
  int target = 0;
};

struct SelectionScores {
  double perplexity = 0.0;
  double accuracy = 0.0;
  std::size_t charts = 0;
};

/// Per chart exp(mean -ln p[target]) and argmax accuracy (ties to the lowest index), each
/// averaged over charts. Charts without steps are skipped.
SelectionScores selection_metrics(const std::vector<std::vector<SelectionPrediction>>& charts);

/// One row of the evaluation report.
struct ReportRow {
  std::string model;
  std::string dataset;
  std::string split;
  std::map<std::string, double> values;
};

std::string report_json(const std::vector<ReportRow>& rows);
/// Columns: model, dataset, split, then the union of metric names in sorted order.
std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace choreo::metrics
