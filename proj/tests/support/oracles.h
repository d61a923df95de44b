#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace choreo::testing {

/// One-sided |X[k]| of an O(N^2) direct DFT, k = 0..N/2.
std::vector<double> naive_dft_magnitude(std::span<const double> frame);

/// Size of a maximum one-to-one matching between predictions and truths within +-tolerance,
/// by augmenting paths.
std::size_t max_matching(std::span<const double> predicted, std::span<const double> truth, double tolerance);

/// Interpolated modified Kneser-Ney computed straight from the corpus on every query: counts
/// are recounted by scanning the sequences, with no tables shared with the library.
class KnOracle {
 public:
  /// Tokens in [0, vocab); each sequence starts with `vocab` (START).
  KnOracle(std::vector<std::vector<int>> sequences, int vocab, int order);

  double prob(std::span<const int> context, int token) const;

 private:
  std::size_t raw(const std::vector<int>& gram) const;
  /// Raw count at the top order or for grams opening with START, else the number of distinct
  /// tokens (START included) seen directly before the gram.
  double count(const std::vector<int>& gram) const;
  double discount(int n, double c) const;
  double p(std::vector<int> context, int token) const;

  std::vector<std::vector<int>> seqs_;
  int vocab_;
  int order_;
  std::vector<std::vector<double>> d_;
};

}  // namespace choreo::testing
