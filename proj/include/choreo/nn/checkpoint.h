#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "choreo/audio.h"
#include "choreo/nn/layers.h"

namespace choreo::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serialized model: architecture descriptor (JSON text), named float32 parameters,
/// the feature normalization it was trained against, and the training seed.
struct Checkpoint {
  std::string architecture;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<NormalizationStats> normalization;
  std::uint64_t seed = 0;
};

Checkpoint make_checkpoint(const ParameterStore& store, std::string architecture, std::uint64_t seed,
                           std::optional<NormalizationStats> normalization = std::nullopt);

/// Copies every tensor into `store`. Throws FormatError on a missing, extra or reshaped tensor.
void load_parameters(const Checkpoint& checkpoint, ParameterStore& store);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace choreo::nn
