#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace choreo {

inline constexpr int kSampleRate = 44100;
/// 10 ms hop between frames.
inline constexpr int kHopSamples = 441;
inline constexpr double kFrameSeconds = 0.010;
/// Analysis windows of roughly 23, 46 and 93 ms.
inline constexpr std::array<int, 3> kWindowSizes = {1024, 2048, 4096};
inline constexpr int kNumChannels = static_cast<int>(kWindowSizes.size());
inline constexpr int kNumBands = 80;
inline constexpr int kFrameValues = kNumBands * kNumChannels;
inline constexpr double kMelLowHz = 27.5;
inline constexpr double kMelHighHz = 16000.0;
inline constexpr double kLogEpsilon = 1e-6;
inline constexpr double kStdFloor = 1e-6;
inline constexpr int kContextRadius = 7;
inline constexpr int kContextFrames = 2 * kContextRadius + 1;
inline constexpr int kFeatureValues = kContextFrames * kFrameValues;

struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Raw contents of a WAV file, one vector per channel.
struct WavData {
  std::vector<std::vector<float>> channels;
  int sample_rate = 0;
};

/// Reads 16-bit PCM or IEEE float WAV with one or two channels. Throws FormatError.
WavData read_wav(const std::filesystem::path& path);
WavData parse_wav(std::span<const std::uint8_t> bytes);

/// Writes mono 16-bit PCM.
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

/// Averages the channels into mono; one channel passes through unchanged.
AudioBuffer downmix(std::span<const std::vector<float>> channels, int sample_rate);

/// Linear-interpolation resampler.
AudioBuffer resample_linear(const AudioBuffer& audio, int target_rate);

/// read_wav + downmix + resample to 44.1 kHz (logged when a resample happens).
AudioBuffer load_audio(const std::filesystem::path& path);

/// Number of 10 ms frames for `num_samples` samples: ceil(N / hop).
int frame_count(std::size_t num_samples, int hop = kHopSamples);

/// Row-major frames x bins magnitudes.
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> data;

  double at(int frame, int bin) const { return data[static_cast<std::size_t>(frame) * bins + bin]; }
};

/// Hann-windowed one-sided magnitude STFT with frame k centered on sample k*hop and
/// zero padding past both ends.
Spectrogram stft_magnitude(std::span<const float> audio, int window_samples, int hop = kHopSamples);

/// The periodic Hann window used by stft_magnitude.
std::vector<double> hann_window(int size);

/// Dense n_mels x bins triangular filterbank.
struct MelFilterbank {
  int n_mels = 0;
  int bins = 0;
  std::vector<double> weights;
  /// First and one-past-last nonzero bin of each filter.
  std::vector<std::pair<int, int>> support;

  double at(int mel, int bin) const { return weights[static_cast<std::size_t>(mel) * bins + bin]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Filters centered uniformly on the mel scale between f_lo and f_hi. A filter narrower
/// than the bin spacing keeps a single unit weight on the bin nearest its center.
MelFilterbank mel_filterbank(int bins, int n_mels, double f_lo, double f_hi, int sample_rate = kSampleRate);

inline double log_compress(double x) { return std::log(x + kLogEpsilon); }

/// Filterbank outputs before log compression, frames x n_mels.
std::vector<double> mel_energies(const Spectrogram& spectrum, const MelFilterbank& filterbank);

/// Per-frame log-Mel energies for all three windows, stored [frame][band][channel].
struct MelSpectrogram {
  int frames = 0;
  std::vector<float> data;
  /// Hash of the NormalizationStats applied, 0 while unnormalized.
  std::uint64_t stats_hash = 0;

  float at(int frame, int band, int channel) const {
    return data[(static_cast<std::size_t>(frame) * kNumBands + band) * kNumChannels + channel];
  }
  std::span<const float> frame(int t) const {
    return {data.data() + static_cast<std::size_t>(t) * kFrameValues, static_cast<std::size_t>(kFrameValues)};
  }
  double frame_time(int t) const { return t * kFrameSeconds; }
};

MelSpectrogram compute_mel_spectrogram(const AudioBuffer& audio);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::uint64_t hash() const;
  bool operator==(const NormalizationStats&) const = default;
};

/// Per band/channel mean and floored standard deviation over every training frame.
NormalizationStats fit_normalization(std::span<const MelSpectrogram* const> training);
void apply_normalization(MelSpectrogram& spectrogram, const NormalizationStats& stats);

/// 15 x 80 x 3 features for frame t; slots outside the song are zero.
void context_window(const MelSpectrogram& spectrogram, int t, std::span<float> out);
std::vector<std::vector<float>> context_windows(const MelSpectrogram& spectrogram);

/// Binary cache: magic, version, frames, bands, channels, stats hash, float32 payload.
void write_feature_cache(const std::filesystem::path& path, const MelSpectrogram& spectrogram);
MelSpectrogram read_feature_cache(const std::filesystem::path& path);

void write_normalization(const std::filesystem::path& path, const NormalizationStats& stats);
NormalizationStats read_normalization(const std::filesystem::path& path);

}  // namespace choreo
