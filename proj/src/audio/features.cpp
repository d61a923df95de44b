#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "choreo/audio.h"
#include "choreo/error.h"

namespace choreo {

namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

using RealBuffer = std::unique_ptr<double, FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex, FftwFree>;

RealBuffer alloc_real(int n) { return RealBuffer(fftw_alloc_real(static_cast<std::size_t>(n))); }
ComplexBuffer alloc_complex(int n) { return ComplexBuffer(fftw_alloc_complex(static_cast<std::size_t>(n))); }

fftw_plan plan_for(int size) {
  static std::mutex mutex;
  static std::map<int, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto it = plans.find(size);
  if (it != plans.end()) return it->second;
  RealBuffer in = alloc_real(size);
  ComplexBuffer out = alloc_complex(size / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(size, in.get(), out.get(), FFTW_ESTIMATE);
  plans.emplace(size, plan);
  return plan;
}

}  // namespace

int frame_count(std::size_t num_samples, int hop) {
  return static_cast<int>((num_samples + static_cast<std::size_t>(hop) - 1) / static_cast<std::size_t>(hop));
}

std::vector<double> hann_window(int size) {
  std::vector<double> w(static_cast<std::size_t>(size));
  for (int n = 0; n < size; ++n) w[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / size);
  return w;
}

Spectrogram stft_magnitude(std::span<const float> audio, int window_samples, int hop) {
  if (window_samples <= 0 || window_samples % 2 != 0) throw Error("window size must be positive and even");
  Spectrogram spec;
  spec.frames = frame_count(audio.size(), hop);
  spec.bins = window_samples / 2 + 1;
  spec.data.assign(static_cast<std::size_t>(spec.frames) * spec.bins, 0.0);
  if (spec.frames == 0) return spec;

  const std::vector<double> window = hann_window(window_samples);
  fftw_plan plan = plan_for(window_samples);
  RealBuffer in = alloc_real(window_samples);
  ComplexBuffer out = alloc_complex(spec.bins);
  const auto n = static_cast<long long>(audio.size());
  for (int k = 0; k < spec.frames; ++k) {
    const long long start = static_cast<long long>(k) * hop - window_samples / 2;
    for (int i = 0; i < window_samples; ++i) {
      const long long s = start + i;
      in.get()[i] = (s >= 0 && s < n) ? audio[static_cast<std::size_t>(s)] * window[static_cast<std::size_t>(i)] : 0.0;
    }
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    double* row = spec.data.data() + static_cast<std::size_t>(k) * spec.bins;
    for (int b = 0; b < spec.bins; ++b) row[b] = std::hypot(out.get()[b][0], out.get()[b][1]);
  }
  return spec;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(int bins, int n_mels, double f_lo, double f_hi, int sample_rate) {
  if (bins < 2 || n_mels < 1) throw Error("filterbank needs at least two bins and one filter");
  if (!(f_lo >= 0.0) || !(f_lo < f_hi) || f_hi > sample_rate / 2.0) {
    throw Error("degenerate mel range [" + std::to_string(f_lo) + ", " + std::to_string(f_hi) + "]");
  }
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.bins = bins;
  fb.weights.assign(static_cast<std::size_t>(n_mels) * bins, 0.0);
  fb.support.assign(static_cast<std::size_t>(n_mels), {0, 0});

  const double fft_size = 2.0 * (bins - 1);
  const double mel_lo = hz_to_mel(f_lo);
  const double mel_hi = hz_to_mel(f_hi);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    double* row = fb.weights.data() + static_cast<std::size_t>(m) * bins;
    int first = bins, last = -1;
    for (int b = 0; b < bins; ++b) {
      const double f = b * sample_rate / fft_size;
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      if (w > 0.0) {
        row[b] = w;
        first = std::min(first, b);
        last = std::max(last, b);
      }
    }
    if (last < 0) {
      const int nearest = std::clamp(static_cast<int>(std::lround(center * fft_size / sample_rate)), 0, bins - 1);
      row[nearest] = 1.0;
      first = last = nearest;
    }
    fb.support[static_cast<std::size_t>(m)] = {first, last + 1};
  }
  return fb;
}

std::vector<double> mel_energies(const Spectrogram& spectrum, const MelFilterbank& filterbank) {
  if (spectrum.bins != filterbank.bins) {
    throw ShapeError("spectrum has " + std::to_string(spectrum.bins) + " bins, filterbank expects " +
                     std::to_string(filterbank.bins));
  }
  std::vector<double> out(static_cast<std::size_t>(spectrum.frames) * filterbank.n_mels, 0.0);
  for (int t = 0; t < spectrum.frames; ++t) {
    const double* row = spectrum.data.data() + static_cast<std::size_t>(t) * spectrum.bins;
    for (int m = 0; m < filterbank.n_mels; ++m) {
      const auto [first, last] = filterbank.support[static_cast<std::size_t>(m)];
      const double* w = filterbank.weights.data() + static_cast<std::size_t>(m) * filterbank.bins;
      double acc = 0.0;
      for (int b = first; b < last; ++b) acc += w[b] * row[b];
      out[static_cast<std::size_t>(t) * filterbank.n_mels + m] = acc;
    }
  }
  return out;
}

MelSpectrogram compute_mel_spectrogram(const AudioBuffer& audio) {
  if (audio.sample_rate != kSampleRate) throw Error("features expect 44100 Hz audio");
  MelSpectrogram mel;
  mel.frames = frame_count(audio.samples.size());
  mel.data.assign(static_cast<std::size_t>(mel.frames) * kFrameValues, 0.0f);
  for (int c = 0; c < kNumChannels; ++c) {
    const int window = kWindowSizes[static_cast<std::size_t>(c)];
    const Spectrogram spec = stft_magnitude(audio.samples, window);
    const MelFilterbank fb = mel_filterbank(window / 2 + 1, kNumBands, kMelLowHz, kMelHighHz);
    const std::vector<double> energies = mel_energies(spec, fb);
    for (int t = 0; t < mel.frames; ++t) {
      for (int m = 0; m < kNumBands; ++m) {
        mel.data[(static_cast<std::size_t>(t) * kNumBands + m) * kNumChannels + c] =
            static_cast<float>(log_compress(energies[static_cast<std::size_t>(t) * kNumBands + m]));
      }
    }
  }
  return mel;
}

std::uint64_t NormalizationStats::hash() const {
  // FNV-1a over the raw doubles.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::vector<double>& values) {
    for (double v : values) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  };
  mix(mean);
  mix(stddev);
  return h == 0 ? 1 : h;
}

NormalizationStats fit_normalization(std::span<const MelSpectrogram* const> training) {
  std::vector<double> sum(kFrameValues, 0.0);
  std::vector<double> sum_sq(kFrameValues, 0.0);
  std::size_t count = 0;
  for (const MelSpectrogram* spec : training) {
    for (int t = 0; t < spec->frames; ++t) {
      const auto frame = spec->frame(t);
      for (int i = 0; i < kFrameValues; ++i) sum[static_cast<std::size_t>(i)] += frame[static_cast<std::size_t>(i)];
    }
    count += static_cast<std::size_t>(spec->frames);
  }
  if (count < 2) throw Error("normalization needs at least two training frames");
  NormalizationStats stats;
  stats.mean.resize(kFrameValues);
  stats.stddev.resize(kFrameValues);
  for (int i = 0; i < kFrameValues; ++i) stats.mean[static_cast<std::size_t>(i)] = sum[static_cast<std::size_t>(i)] / static_cast<double>(count);
  for (const MelSpectrogram* spec : training) {
    for (int t = 0; t < spec->frames; ++t) {
      const auto frame = spec->frame(t);
      for (int i = 0; i < kFrameValues; ++i) {
        const double d = frame[static_cast<std::size_t>(i)] - stats.mean[static_cast<std::size_t>(i)];
        sum_sq[static_cast<std::size_t>(i)] += d * d;
      }
    }
  }
  for (int i = 0; i < kFrameValues; ++i) {
    const double var = sum_sq[static_cast<std::size_t>(i)] / static_cast<double>(count);
    stats.stddev[static_cast<std::size_t>(i)] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

void apply_normalization(MelSpectrogram& spectrogram, const NormalizationStats& stats) {
  if (stats.mean.size() != kFrameValues || stats.stddev.size() != kFrameValues) {
    throw ShapeError("normalization stats must cover 80 x 3 values");
  }
  if (spectrogram.stats_hash != 0) throw Error("spectrogram is already normalized");
  for (int t = 0; t < spectrogram.frames; ++t) {
    float* frame = spectrogram.data.data() + static_cast<std::size_t>(t) * kFrameValues;
    for (int i = 0; i < kFrameValues; ++i) {
      const auto k = static_cast<std::size_t>(i);
      frame[i] = static_cast<float>((frame[i] - stats.mean[k]) / stats.stddev[k]);
    }
  }
  spectrogram.stats_hash = stats.hash();
}

void context_window(const MelSpectrogram& spectrogram, int t, std::span<float> out) {
  if (out.size() != static_cast<std::size_t>(kFeatureValues)) throw ShapeError("context window buffer must hold 15 x 80 x 3");
  for (int k = 0; k < kContextFrames; ++k) {
    const int src = t - kContextRadius + k;
    float* dst = out.data() + static_cast<std::size_t>(k) * kFrameValues;
    if (src < 0 || src >= spectrogram.frames) {
      std::fill(dst, dst + kFrameValues, 0.0f);
    } else {
      const auto frame = spectrogram.frame(src);
      std::copy(frame.begin(), frame.end(), dst);
    }
  }
}

std::vector<std::vector<float>> context_windows(const MelSpectrogram& spectrogram) {
  std::vector<std::vector<float>> out(static_cast<std::size_t>(spectrogram.frames), std::vector<float>(kFeatureValues));
  for (int t = 0; t < spectrogram.frames; ++t) context_window(spectrogram, t, out[static_cast<std::size_t>(t)]);
  return out;
}

}  // namespace choreo
