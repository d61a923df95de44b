#include "choreo/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "choreo/error.h"

namespace choreo::metrics {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": " + std::to_string(a) + " scores vs " + std::to_string(b) + " labels");
}

}  // namespace

double frame_perplexity(std::span<const float> probs, std::span<const float> labels) {
  require_aligned(probs.size(), labels.size(), "frame_perplexity");
  if (probs.empty()) throw Error("frame_perplexity of an empty sequence");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), 1e-7, 1.0 - 1e-7);
    total -= labels[i] > 0.5f ? std::log(p) : std::log1p(-p);
  }
  return std::exp(total / static_cast<double>(probs.size()));
}

std::vector<PrPoint> pr_curve(std::span<const float> scores, std::span<const float> labels) {
  require_aligned(scores.size(), labels.size(), "pr_curve");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t positives = 0;
  for (float y : labels) positives += y > 0.5f ? 1 : 0;

  std::vector<PrPoint> curve;
  if (positives == 0) return curve;
  std::size_t tp = 0, seen = 0;
  for (std::size_t k = 0; k < order.size();) {
    const float threshold = scores[order[k]];
    while (k < order.size() && scores[order[k]] == threshold) {
      tp += labels[order[k]] > 0.5f ? 1 : 0;
      ++seen;
      ++k;
    }
    curve.push_back({static_cast<double>(tp) / static_cast<double>(positives),
                     static_cast<double>(tp) / static_cast<double>(seen)});
  }
  return curve;
}

std::optional<double> auc_pr(std::span<const float> scores, std::span<const float> labels) {
  const auto curve = pr_curve(scores, labels);
  if (curve.empty()) return std::nullopt;
  double area = 0.0, prev_recall = 0.0;
  for (const PrPoint& p : curve) {
    area += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return area;
}

double precision(const Counts& c) { return c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp); }
double recall(const Counts& c) { return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn); }

double f1(const Counts& c) {
  if (c.tp == 0) return 0.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

FScores fscore_curves(const std::vector<std::vector<Counts>>& curves, const std::vector<int>& chosen) {
  if (curves.size() != chosen.size()) throw ShapeError("fscore_curves: one chosen threshold per chart required");
  FScores out;
  if (curves.empty()) return out;
  Counts pooled;
  double best_sum = 0.0;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    double best = 0.0;
    for (const Counts& k : curves[c]) best = std::max(best, f1(k));
    best_sum += best;
    const int idx = chosen[c];
    if (idx < 0 || static_cast<std::size_t>(idx) >= curves[c].size()) throw Error("fscore_curves: threshold index out of range");
    pooled += curves[c][static_cast<std::size_t>(idx)];
  }
  out.fscore_c = best_sum / static_cast<double>(curves.size());
  out.fscore_m = f1(pooled);
  return out;
}

SelectionScores selection_metrics(const std::vector<std::vector<SelectionPrediction>>& charts) {
  SelectionScores out;
  double ppl_sum = 0.0, acc_sum = 0.0;
  for (const auto& chart : charts) {
    if (chart.empty()) continue;
    double ce = 0.0;
    std::size_t correct = 0;
    for (const SelectionPrediction& p : chart) {
      if (p.target < 0 || static_cast<std::size_t>(p.target) >= p.distribution.size()) throw Error("selection target out of range");
      ce -= std::log(std::max(p.distribution[static_cast<std::size_t>(p.target)], 1e-300));
      const auto best = std::max_element(p.distribution.begin(), p.distribution.end()) - p.distribution.begin();
      correct += best == p.target ? 1 : 0;
    }
    const double n = static_cast<double>(chart.size());
    ppl_sum += std::exp(ce / n);
    acc_sum += static_cast<double>(correct) / n;
    ++out.charts;
  }
  if (out.charts > 0) {
    out.perplexity = ppl_sum / static_cast<double>(out.charts);
    out.accuracy = acc_sum / static_cast<double>(out.charts);
  }
  return out;
}

std::string report_json(const std::vector<ReportRow>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const ReportRow& r : rows) {
    nlohmann::ordered_json row;
    row["model"] = r.model;
    row["dataset"] = r.dataset;
    row["split"] = r.split;
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.values) values[k] = v;
    row["metrics"] = values;
    doc.push_back(row);
  }
  return doc.dump(2) + "\n";
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::set<std::string> names;
  for (const ReportRow& r : rows)
    for (const auto& [k, v] : r.values) names.insert(k);
  std::ostringstream os;
  os << "model,dataset,split";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  os.precision(6);
  os << std::fixed;
  for (const ReportRow& r : rows) {
    os << r.model << ',' << r.dataset << ',' << r.split;
    for (const auto& n : names) {
      os << ',';
      if (auto it = r.values.find(n); it != r.values.end()) os << it->second;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace choreo::metrics
