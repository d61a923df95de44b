#pragma once

#include <span>

#include "choreo/nn/tape.h"

namespace choreo::nn {

struct SgdConfig {
  double learning_rate = 0.01;
  double clip_norm = 5.0;
  int batch_size = 256;

  /// Throws Error unless learning_rate > 0, clip_norm > 0 and batch_size > 0.
  void validate() const;
};

/// l2 norm over every gradient, accumulated in double.
double global_grad_norm(std::span<Parameter* const> params);

/// Rescales all gradients by clip_norm / g when the global norm g exceeds clip_norm, then takes
/// one plain SGD step. Returns the norm before clipping.
double clip_and_step(std::span<Parameter* const> params, const SgdConfig& cfg);

}  // namespace choreo::nn
