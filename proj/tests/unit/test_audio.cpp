#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "choreo/audio.h"
#include "choreo/error.h"
#include "choreo/nn/rng.h"
#include "oracles.h"

using namespace choreo;

namespace {

std::vector<float> sine(double hz, double seconds, double amplitude = 0.5) {
  std::vector<float> out(static_cast<std::size_t>(seconds * kSampleRate));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate));
  }
  return out;
}

MelSpectrogram random_mel(nn::Rng& rng, int frames) {
  MelSpectrogram m;
  m.frames = frames;
  m.data.resize(static_cast<std::size_t>(frames) * kFrameValues);
  for (float& v : m.data) v = static_cast<float>(rng.uniform(-10.0, 3.0));
  return m;
}

}  // namespace

TEST_SUITE("audio") {

TEST_CASE("downmix") {
  const std::vector<float> x{0.1f, -0.5f, 0.25f};
  const std::vector<std::vector<float>> same{x, x};
  CHECK(downmix(same, kSampleRate).samples == x);
  const std::vector<std::vector<float>> opposite{x, {-0.1f, 0.5f, -0.25f}};
  for (float v : downmix(opposite, kSampleRate).samples) CHECK(v == 0.0f);
  const std::vector<std::vector<float>> mono{x};
  CHECK(downmix(mono, kSampleRate).samples == x);
  const std::vector<std::vector<float>> bad{x, {0.0f}};
  CHECK_THROWS_AS(downmix(bad, kSampleRate), Error);
}

TEST_CASE("frame count is ceil(N / hop)") {
  CHECK(frame_count(44100) == 100);
  CHECK(frame_count(0) == 0);
  CHECK(frame_count(1) == 1);
  CHECK(frame_count(442) == 2);
  for (int w : kWindowSizes) CHECK(stft_magnitude(std::vector<float>(44100, 0.1f), w).frames == 100);
}

TEST_CASE("silence gives zero magnitudes and empty audio zero frames") {
  const Spectrogram s = stft_magnitude(std::vector<float>(5000, 0.0f), 1024);
  for (double v : s.data) CHECK(v == 0.0);
  CHECK(stft_magnitude(std::vector<float>{}, 2048).frames == 0);
}

TEST_CASE("a 440 Hz sine peaks in bin 20 at window 2048") {
  const Spectrogram s = stft_magnitude(sine(440.0, 0.5), 2048);
  CHECK(s.bins == 1025);
  const int frame = 25;
  int best = 0;
  for (int b = 1; b < s.bins; ++b) {
    if (s.at(frame, b) > s.at(frame, best)) best = b;
  }
  CHECK(best == static_cast<int>(std::lround(440.0 * 2048 / kSampleRate)));
}

TEST_CASE("STFT matches a direct DFT of the windowed frame") {
  nn::Rng rng(21);
  for (int w : kWindowSizes) {
    std::vector<float> audio(static_cast<std::size_t>(w) + 2000);
    for (float& v : audio) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Spectrogram s = stft_magnitude(audio, w);
    const std::vector<double> hann = hann_window(w);
    for (int k : {0, 3, frame_count(audio.size()) - 1}) {
      std::vector<double> frame(static_cast<std::size_t>(w));
      for (int i = 0; i < w; ++i) {
        const long long src = static_cast<long long>(k) * kHopSamples - w / 2 + i;
        frame[static_cast<std::size_t>(i)] =
            src >= 0 && src < static_cast<long long>(audio.size()) ? audio[static_cast<std::size_t>(src)] * hann[static_cast<std::size_t>(i)] : 0.0;
      }
      const auto ref = testing::naive_dft_magnitude(frame);
      double num = 0.0, den = 0.0;
      for (int b = 0; b < s.bins; ++b) {
        num += std::pow(s.at(k, b) - ref[static_cast<std::size_t>(b)], 2);
        den += std::pow(ref[static_cast<std::size_t>(b)], 2);
      }
      CHECK(std::sqrt(num / den) < 1e-6);
    }
  }
}

TEST_CASE("the analysis window is a periodic Hann") {
  const auto w = hann_window(8);
  CHECK(w[0] == 0.0);
  CHECK(w[4] == doctest::Approx(1.0));
  CHECK(w[2] == doctest::Approx(0.5));
  CHECK(w[6] == doctest::Approx(0.5));
}

TEST_CASE("mel filterbank shape, positivity and coverage") {
  for (int w : kWindowSizes) {
    const int bins = w / 2 + 1;
    const MelFilterbank fb = mel_filterbank(bins, kNumBands, kMelLowHz, kMelHighHz);
    CHECK(fb.n_mels == 80);
    CHECK(fb.bins == bins);
    std::vector<bool> covered(static_cast<std::size_t>(bins), false);
    for (int m = 0; m < kNumBands; ++m) {
      double sum = 0.0;
      for (int b = 0; b < bins; ++b) {
        CHECK(fb.at(m, b) >= 0.0);
        sum += fb.at(m, b);
        if (fb.at(m, b) > 0.0) covered[static_cast<std::size_t>(b)] = true;
      }
      CHECK(sum > 0.0);
    }
    for (int b = 0; b < bins; ++b) {
      const double f = b * static_cast<double>(kSampleRate) / w;
      if (f > kMelLowHz && f < kMelHighHz) CHECK(covered[static_cast<std::size_t>(b)]);
    }
  }
  CHECK(mel_filterbank(1025, 80, kMelLowHz, kMelHighHz).weights.size() == 80u * 1025u);
  CHECK_THROWS_AS(mel_filterbank(1025, 80, 500.0, 100.0), Error);
  CHECK_THROWS_AS(mel_filterbank(1025, 80, 0.0, 30000.0), Error);
}

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5));
}

TEST_CASE("log compression") {
  CHECK(log_compress(0.0) == doctest::Approx(-13.8155).epsilon(1e-5));
  CHECK(log_compress(1.0) > log_compress(0.5));
  CHECK(std::isfinite(log_compress(1e30)));
}

TEST_CASE("doubling the audio doubles every mel energy") {
  nn::Rng rng(4);
  std::vector<float> a(20000);
  for (float& v : a) v = static_cast<float>(rng.uniform(-0.4, 0.4));
  std::vector<float> b(a);
  for (float& v : b) v *= 2.0f;
  const MelFilterbank fb = mel_filterbank(1025, kNumBands, kMelLowHz, kMelHighHz);
  const auto ea = mel_energies(stft_magnitude(a, 2048), fb);
  const auto eb = mel_energies(stft_magnitude(b, 2048), fb);
  for (std::size_t i = 0; i < ea.size(); ++i) CHECK(eb[i] == doctest::Approx(2.0 * ea[i]).epsilon(1e-9));
}

TEST_CASE("mel spectrogram layout and determinism") {
  AudioBuffer audio{sine(1000.0, 1.0), kSampleRate};
  const MelSpectrogram m = compute_mel_spectrogram(audio);
  CHECK(m.frames == 100);
  CHECK(m.data.size() == 100u * 240u);
  CHECK(m.frame_time(10) == doctest::Approx(0.1));
  for (float v : m.data) CHECK(std::isfinite(v));
  CHECK(compute_mel_spectrogram(audio).data == m.data);
  AudioBuffer silent{std::vector<float>(4410, 0.0f), kSampleRate};
  for (float v : compute_mel_spectrogram(silent).data) CHECK(v == doctest::Approx(std::log(kLogEpsilon)));
}

TEST_CASE("normalizing the training set itself") {
  nn::Rng rng(12);
  MelSpectrogram a = random_mel(rng, 50), b = random_mel(rng, 30);
  for (int t = 0; t < a.frames; ++t) a.data[static_cast<std::size_t>(t) * kFrameValues + 5] = 2.5f;
  for (int t = 0; t < b.frames; ++t) b.data[static_cast<std::size_t>(t) * kFrameValues + 5] = 2.5f;
  const std::vector<const MelSpectrogram*> train{&a, &b};
  const NormalizationStats stats = fit_normalization(train);
  CHECK(stats.stddev[5] == kStdFloor);
  for (int i = 0; i < kFrameValues; ++i) {
    const auto k = static_cast<std::size_t>(i);
    double sum = 0.0, sq = 0.0;
    for (const MelSpectrogram* m : train) {
      for (int t = 0; t < m->frames; ++t) {
        const double z = (m->frame(t)[k] - stats.mean[k]) / stats.stddev[k];
        sum += z;
        sq += z * z;
      }
    }
    CHECK(std::abs(sum / 80.0) < 1e-9);
    if (i != 5) CHECK(std::abs(sq / 80.0 - 1.0) < 1e-6);
  }
  apply_normalization(a, stats);
  apply_normalization(b, stats);
  CHECK(a.stats_hash == stats.hash());
  for (int i = 0; i < kFrameValues; ++i) {
    double sum = 0.0, sq = 0.0;
    for (const MelSpectrogram* m : train) {
      for (int t = 0; t < m->frames; ++t) {
        const double v = m->frame(t)[static_cast<std::size_t>(i)];
        sum += v;
        sq += v * v;
      }
    }
    const double mean = sum / 80.0;
    CHECK(std::abs(mean) < 1e-6);
    if (i == 5) {
      CHECK(sq == 0.0);
    } else {
      CHECK(sq / 80.0 - mean * mean == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  CHECK_THROWS_AS(apply_normalization(a, stats), Error);
}

TEST_CASE("normalization stats ignore frame order") {
  nn::Rng rng(13);
  const MelSpectrogram a = random_mel(rng, 40);
  MelSpectrogram r = a;
  for (int t = 0; t < a.frames; ++t) {
    std::copy(a.frame(t).begin(), a.frame(t).end(), r.data.begin() + static_cast<long>((a.frames - 1 - t) * kFrameValues));
  }
  const std::vector<const MelSpectrogram*> fa{&a}, fr{&r};
  const NormalizationStats sa = fit_normalization(fa), sr = fit_normalization(fr);
  for (int i = 0; i < kFrameValues; ++i) {
    CHECK(sa.mean[static_cast<std::size_t>(i)] == doctest::Approx(sr.mean[static_cast<std::size_t>(i)]).epsilon(1e-12));
    CHECK(sa.stddev[static_cast<std::size_t>(i)] == doctest::Approx(sr.stddev[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
  const MelSpectrogram one = random_mel(rng, 1);
  const std::vector<const MelSpectrogram*> tiny{&one};
  CHECK_THROWS_AS(fit_normalization(tiny), Error);
}

TEST_CASE("context windows") {
  nn::Rng rng(14);
  const MelSpectrogram single = random_mel(rng, 1);
  const auto w1 = context_windows(single);
  REQUIRE(w1.size() == 1);
  for (int k = 0; k < kContextFrames; ++k) {
    for (int i = 0; i < kFrameValues; ++i) {
      const float v = w1[0][static_cast<std::size_t>(k * kFrameValues + i)];
      if (k == kContextRadius) {
        CHECK(v == single.frame(0)[static_cast<std::size_t>(i)]);
      } else {
        CHECK(v == 0.0f);
      }
    }
  }
  const MelSpectrogram m = random_mel(rng, 30);
  const auto w = context_windows(m);
  for (int t = 0; t < m.frames; ++t) {
    for (int k = 0; k < kContextFrames; ++k) {
      const int src = t - kContextRadius + k;
      const float* slot = w[static_cast<std::size_t>(t)].data() + k * kFrameValues;
      const bool inside = src >= 0 && src < m.frames;
      if (t >= kContextRadius && t <= m.frames - 1 - kContextRadius) CHECK(inside);
      CHECK(slot[17] == (inside ? m.frame(src)[17] : 0.0f));
    }
  }
}

TEST_CASE("WAV and feature cache round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "choreo_audio_test";
  std::filesystem::create_directories(dir);
  AudioBuffer audio{sine(300.0, 0.2), kSampleRate};
  write_wav(dir / "a.wav", audio);
  const AudioBuffer back = load_audio(dir / "a.wav");
  REQUIRE(back.samples.size() == audio.samples.size());
  for (std::size_t i = 0; i < audio.samples.size(); ++i) CHECK(std::abs(back.samples[i] - audio.samples[i]) < 1e-4);

  const MelSpectrogram m = compute_mel_spectrogram(audio);
  write_feature_cache(dir / "a.feat", m);
  const MelSpectrogram r = read_feature_cache(dir / "a.feat");
  CHECK(r.frames == m.frames);
  CHECK(r.data == m.data);
  std::filesystem::resize_file(dir / "a.feat", 40);
  CHECK_THROWS_AS(read_feature_cache(dir / "a.feat"), FormatError);

  const std::vector<std::uint8_t> junk{'R', 'I', 'F', 'F', 0, 0};
  CHECK_THROWS_AS(parse_wav(junk), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("linear resampling") {
  AudioBuffer a{{0.0f, 1.0f, 0.0f, -1.0f, 0.0f}, 22050};
  const AudioBuffer up = resample_linear(a, 44100);
  CHECK(up.sample_rate == 44100);
  REQUIRE(up.samples.size() == 9);
  CHECK(up.samples[1] == doctest::Approx(0.5));
  CHECK(up.samples[2] == doctest::Approx(1.0));
}

}
