#include "choreo/nn/checkpoint.h"

#include "binary_io.h"
#include "choreo/error.h"

namespace choreo::nn {

Checkpoint make_checkpoint(const ParameterStore& store, std::string architecture, std::uint64_t seed,
                           std::optional<NormalizationStats> normalization) {
  Checkpoint ckpt;
  ckpt.architecture = std::move(architecture);
  ckpt.seed = seed;
  ckpt.normalization = std::move(normalization);
  for (const Parameter* p : store.all()) ckpt.tensors.emplace_back(p->name, p->value);
  return ckpt;
}

void load_parameters(const Checkpoint& checkpoint, ParameterStore& store) {
  const auto params = store.all();
  if (params.size() != checkpoint.tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  }
  for (const auto& [name, value] : checkpoint.tensors) {
    Parameter* target = nullptr;
    for (Parameter* p : params) {
      if (p->name == name) target = p;
    }
    if (target == nullptr) throw FormatError("checkpoint tensor '" + name + "' is not part of the model");
    if (target->value.shape() != value.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_string(value.shape()) + ", model expects " +
                        shape_string(target->value.shape()));
    }
    target->value = value;
    target->grad = Tensor(value.shape());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  detail::BinaryWriter w;
  w.put_magic("CHCK");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(checkpoint.architecture);
  w.put<std::uint64_t>(checkpoint.seed);
  w.put<std::uint64_t>(checkpoint.tensors.size());
  for (const auto& [name, value] : checkpoint.tensors) {
    w.put_string(name);
    w.put_array<int>(value.shape());
    w.put_array<float>(value.values());
  }
  w.put<std::uint8_t>(checkpoint.normalization ? 1 : 0);
  if (checkpoint.normalization) {
    w.put_array<double>(checkpoint.normalization->mean);
    w.put_array<double>(checkpoint.normalization->stddev);
  }
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto r = detail::BinaryReader::open(path);
  r.expect_magic("CHCK");
  r.expect_version(kCheckpointVersion);
  Checkpoint ckpt;
  ckpt.architecture = r.get_string();
  ckpt.seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    Shape shape = r.get_array<int>();
    std::vector<float> data = r.get_array<float>();
    if (shape_size(shape) != data.size()) r.fail("tensor '" + name + "' size does not match its shape");
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.get<std::uint8_t>() != 0) {
    NormalizationStats stats;
    stats.mean = r.get_array<double>();
    stats.stddev = r.get_array<double>();
    ckpt.normalization = std::move(stats);
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return ckpt;
}

}  // namespace choreo::nn
