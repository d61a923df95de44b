#include "binary_io.h"
#include "choreo/audio.h"

namespace choreo {

namespace {
constexpr char kFeatureMagic[5] = "CHFT";
constexpr char kStatsMagic[5] = "CHNS";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint32_t kStatsVersion = 1;
}  // namespace

void write_feature_cache(const std::filesystem::path& path, const MelSpectrogram& spectrogram) {
  detail::BinaryWriter w;
  w.put_magic(kFeatureMagic);
  w.put<std::uint32_t>(kFeatureVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spectrogram.frames));
  w.put<std::uint32_t>(kNumBands);
  w.put<std::uint32_t>(kNumChannels);
  w.put<std::uint64_t>(spectrogram.stats_hash);
  w.put_array(std::span<const float>(spectrogram.data));
  w.save(path);
}

MelSpectrogram read_feature_cache(const std::filesystem::path& path) {
  auto r = detail::BinaryReader::open(path);
  r.expect_magic(kFeatureMagic);
  r.expect_version(kFeatureVersion);
  MelSpectrogram spec;
  spec.frames = static_cast<int>(r.get<std::uint32_t>());
  const auto bands = r.get<std::uint32_t>();
  const auto channels = r.get<std::uint32_t>();
  if (bands != kNumBands || channels != kNumChannels) r.fail("unexpected feature dimensions");
  spec.stats_hash = r.get<std::uint64_t>();
  spec.data = r.get_array<float>();
  if (spec.data.size() != static_cast<std::size_t>(spec.frames) * kFrameValues) r.fail("payload size mismatch");
  return spec;
}

void write_normalization(const std::filesystem::path& path, const NormalizationStats& stats) {
  detail::BinaryWriter w;
  w.put_magic(kStatsMagic);
  w.put<std::uint32_t>(kStatsVersion);
  w.put_array(std::span<const double>(stats.mean));
  w.put_array(std::span<const double>(stats.stddev));
  w.save(path);
}

NormalizationStats read_normalization(const std::filesystem::path& path) {
  auto r = detail::BinaryReader::open(path);
  r.expect_magic(kStatsMagic);
  r.expect_version(kStatsVersion);
  NormalizationStats stats;
  stats.mean = r.get_array<double>();
  stats.stddev = r.get_array<double>();
  if (stats.mean.size() != kFrameValues || stats.stddev.size() != kFrameValues) r.fail("stats must cover 80 x 3 values");
  return stats;
}

}  // namespace choreo
