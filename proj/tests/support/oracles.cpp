#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>

namespace choreo::testing {

std::vector<double> naive_dft_magnitude(std::span<const double> frame) {
  const std::size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    long double re = 0.0L, im = 0.0L;
    for (std::size_t t = 0; t < n; ++t) {
      const long double phase = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * t) % n) / n;
      re += frame[t] * std::cos(phase);
      im += frame[t] * std::sin(phase);
    }
    out[k] = static_cast<double>(std::sqrt(re * re + im * im));
  }
  return out;
}

std::size_t max_matching(std::span<const double> predicted, std::span<const double> truth, double tolerance) {
  std::vector<int> owner(truth.size(), -1);
  std::function<bool(std::size_t, std::vector<bool>&)> augment = [&](std::size_t p, std::vector<bool>& seen) {
    for (std::size_t t = 0; t < truth.size(); ++t) {
      if (seen[t] || std::abs(predicted[p] - truth[t]) > tolerance) continue;
      seen[t] = true;
      if (owner[t] < 0 || augment(static_cast<std::size_t>(owner[t]), seen)) {
        owner[t] = static_cast<int>(p);
        return true;
      }
    }
    return false;
  };
  std::size_t matched = 0;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    std::vector<bool> seen(truth.size(), false);
    if (augment(p, seen)) ++matched;
  }
  return matched;
}

KnOracle::KnOracle(std::vector<std::vector<int>> sequences, int vocab, int order)
    : seqs_(std::move(sequences)), vocab_(vocab), order_(order) {
  for (int n = 1; n <= order_; ++n) {
    // Every distinct n-gram that ends on a predicted (non-START) token.
    std::set<std::vector<int>> grams;
    for (const auto& s : seqs_) {
      for (std::size_t end = 1; end < s.size(); ++end) {
        if (end + 1 < static_cast<std::size_t>(n)) continue;
        grams.insert(std::vector<int>(s.begin() + static_cast<long>(end + 1 - n), s.begin() + static_cast<long>(end + 1)));
      }
    }
    double nk[5] = {0, 0, 0, 0, 0};
    for (const auto& g : grams) {
      const double c = count(g);
      if (c >= 1 && c <= 4) nk[static_cast<int>(c)] += 1;
    }
    const double y = nk[1] + 2 * nk[2] > 0 ? nk[1] / (nk[1] + 2 * nk[2]) : 0.0;
    std::vector<double> d(4, 0.0);
    for (int k = 1; k <= 3; ++k) {
      double v = nk[k] > 0 ? k - (k + 1) * y * nk[k + 1] / nk[k] : -1.0;
      if (!(v > 0 && v <= k)) v = k / 2.0;
      d[static_cast<std::size_t>(k)] = v;
    }
    d_.push_back(d);
  }
}

std::size_t KnOracle::raw(const std::vector<int>& gram) const {
  std::size_t c = 0;
  for (const auto& s : seqs_) {
    if (s.size() < gram.size()) continue;
    for (std::size_t i = 0; i + gram.size() <= s.size(); ++i) {
      if (std::equal(gram.begin(), gram.end(), s.begin() + static_cast<long>(i))) ++c;
    }
  }
  return c;
}

double KnOracle::count(const std::vector<int>& gram) const {
  if (static_cast<int>(gram.size()) == order_ || gram.front() == vocab_) return static_cast<double>(raw(gram));
  double distinct = 0;
  for (int v = 0; v <= vocab_; ++v) {
    std::vector<int> longer{v};
    longer.insert(longer.end(), gram.begin(), gram.end());
    if (raw(longer) > 0) distinct += 1;
  }
  return distinct;
}

double KnOracle::discount(int n, double c) const {
  if (c <= 0) return 0.0;
  return d_[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(std::min(c, 3.0))];
}

double KnOracle::p(std::vector<int> context, int token) const {
  std::vector<int> shorter(context.empty() ? context.begin() : context.begin() + 1, context.end());
  const double lower = context.empty() ? 1.0 / vocab_ : p(shorter, token);
  const int n = static_cast<int>(context.size()) + 1;
  double total = 0;
  double mass = 0;
  double target = 0;
  for (int w = 0; w < vocab_; ++w) {
    std::vector<int> g = context;
    g.push_back(w);
    const double c = count(g);
    total += c;
    mass += discount(n, c);
    if (w == token) target = c;
  }
  if (total <= 0) return lower;
  return std::max(target - discount(n, target), 0.0) / total + (mass / total) * lower;
}

double KnOracle::prob(std::span<const int> context, int token) const {
  const std::size_t keep = std::min<std::size_t>(context.size(), static_cast<std::size_t>(order_ - 1));
  return p(std::vector<int>(context.end() - static_cast<long>(keep), context.end()), token);
}

}  // namespace choreo::testing
