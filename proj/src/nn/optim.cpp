#include "choreo/nn/optim.h"

#include <cmath>

#include "choreo/error.h"

namespace choreo::nn {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (!(clip_norm > 0.0)) throw Error("clip norm must be positive");
  if (batch_size <= 0) throw Error("batch size must be positive");
}

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (float g : p->grad.values()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_and_step(std::span<Parameter* const> params, const SgdConfig& cfg) {
  const double norm = global_grad_norm(params);
  const double factor = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
  for (Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) throw ShapeError("gradient of '" + p->name + "' has the wrong shape");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (factor != 1.0) p->grad[i] = static_cast<float>(p->grad[i] * factor);
      p->value[i] = static_cast<float>(p->value[i] - cfg.learning_rate * p->grad[i]);
    }
  }
  return norm;
}

}  // namespace choreo::nn
