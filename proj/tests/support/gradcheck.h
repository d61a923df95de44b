#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "choreo/nn/ops.h"

namespace choreo::testing {

using DTensor = nn::BasicTensor<double>;
using DTape = nn::BasicTape<double>;

/// Builds a scalar loss from the given input variables.
using LossFn = std::function<nn::Var(DTape&, const std::vector<nn::Var>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

inline DTensor random_tensor(nn::Shape shape, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  DTensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline double evaluate(const LossFn& fn, const std::vector<DTensor>& inputs) {
  DTape tape(false);
  std::vector<nn::Var> vars;
  for (const DTensor& t : inputs) vars.push_back(tape.constant(t));
  return tape.value(fn(tape, vars))[0];
}

/// Compares reverse-mode gradients against central differences for every element of every
/// input. The error of one input is ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline GradCheckResult gradient_check(const LossFn& fn, std::vector<DTensor> inputs, double eps = 1e-5) {
  DTape tape;
  std::vector<nn::Var> vars;
  for (const DTensor& t : inputs) vars.push_back(tape.variable(t));
  tape.backward(fn(tape, vars));

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const DTensor analytic = tape.grad(vars[k]);
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + eps;
      const double up = evaluate(fn, inputs);
      inputs[k][i] = orig - eps;
      const double down = evaluate(fn, inputs);
      inputs[k][i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      diff_sq += (analytic[i] - numeric) * (analytic[i] - numeric);
      a_sq += analytic[i] * analytic[i];
      n_sq += numeric * numeric;
      ++result.checked;
    }
    const double scale = std::max({std::sqrt(a_sq), std::sqrt(n_sq), 1e-12});
    result.max_relative_error = std::max(result.max_relative_error, std::sqrt(diff_sq) / scale);
  }
  return result;
}

/// Reduces a non-scalar output to a scalar with fixed random weights so every output element
/// contributes a distinct gradient.
inline nn::Var weighted_sum(DTape& tape, nn::Var y, std::uint64_t seed) {
  nn::Rng rng(seed);
  const nn::Var w = tape.constant(random_tensor(tape.shape(y), rng));
  return nn::sum(tape, nn::mul(tape, y, w));
}

struct LayerCase {
  std::string name;
  /// Runs all random shapes for this layer and returns the worst error and shape count.
  std::function<std::pair<double, int>(std::uint64_t seed)> run;
};

/// The gradient check suite: every differentiable op, at least ten random shapes each.
std::vector<LayerCase> gradient_suite();

}  // namespace choreo::testing
