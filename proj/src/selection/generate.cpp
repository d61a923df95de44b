#include <algorithm>
#include <cmath>

#include "choreo/error.h"
#include "choreo/log.h"
#include "choreo/selection.h"

namespace choreo::selection {

std::vector<StepCombo> generate(const SelectionModel& model, std::span<const double> times,
                                std::optional<std::span<const double>> beats, nn::Rng& rng, const GenerateOptions& options) {
  if (!(options.temperature > 0.0)) throw Error("sampling temperature must be positive");
  if (beats && beats->size() != times.size()) throw Error("generate: beats and times differ in length");
  if (model.features().delta_beat && !beats) {
    throw Error("selection model reads beat features but no tempo is known; pass --bpm or use a time-only model");
  }
  std::vector<TimedStep> steps(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0 && times[i] < times[i - 1]) throw Error("generate: times must be sorted");
    steps[i].time = times[i];
    steps[i].beat = beats ? (*beats)[i] : 0.0;
  }

  auto predictor = model.predictor();
  std::array<bool, kNumArrows> held{};
  std::vector<StepCombo> out;
  out.reserve(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::vector<double> p = predictor->next(rhythm_features(steps, i));
    if (options.temperature != 1.0) {
      for (double& v : p) v = std::pow(v, 1.0 / options.temperature);
    }
    std::vector<double> weights = p;
    weights[0] = 0.0;
    if (options.validity_mask) {
      const auto valid = valid_tokens(held);
      for (int t = 0; t < kNumCombos; ++t) {
        if (!valid[static_cast<std::size_t>(t)]) weights[static_cast<std::size_t>(t)] = 0.0;
      }
    }
    double total = 0.0;
    for (double w : weights) total += w;
    int token = 0;
    if (total > 0.0) {
      token = static_cast<int>(rng.categorical(weights));
    } else {
      log().warn("step {}: validity mask removed all probability mass; using the unmasked argmax", i);
      token = static_cast<int>(std::max_element(p.begin() + 1, p.end()) - p.begin());
    }
    predictor->observe(token);
    const StepCombo combo = StepCombo::from_index(token);
    for (int a = 0; a < kNumArrows; ++a) {
      const ArrowState s = combo.arrows[static_cast<std::size_t>(a)];
      if (s == ArrowState::HoldStart) held[static_cast<std::size_t>(a)] = true;
      if (s == ArrowState::HoldEnd) held[static_cast<std::size_t>(a)] = false;
    }
    out.push_back(combo);
  }
  return out;
}

}  // namespace choreo::selection
