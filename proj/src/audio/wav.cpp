#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "choreo/audio.h"
#include "choreo/error.h"
#include "choreo/log.h"

namespace choreo {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(bytes, 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  os.write(bytes, 2);
}

}  // namespace

WavData parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw FormatError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> payload;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
    if (tag_is(bytes, pos, "fmt ")) {
      if (available < 16) throw FormatError("fmt chunk too short");
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (available < 26) throw FormatError("extensible fmt chunk too short");
        format = read_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      payload = bytes.subspan(body, available);
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError("missing fmt chunk");
  if (channels < 1 || channels > 2) throw FormatError("unsupported channel count " + std::to_string(channels));
  if (rate == 0) throw FormatError("zero sample rate");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw FormatError("unsupported WAV encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                      " bits); transcode to 16-bit PCM or float");
  }

  WavData wav;
  wav.sample_rate = static_cast<int>(rate);
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * bits / 8;
  const std::size_t n = payload.size() / frame_bytes;
  wav.channels.assign(channels, std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = i * frame_bytes + c * bits / 8;
      float v = 0.0f;
      if (pcm16) {
        v = static_cast<float>(static_cast<std::int16_t>(read_u16(payload, at))) / 32768.0f;
      } else {
        const std::uint32_t raw = read_u32(payload, at);
        std::memcpy(&v, &raw, 4);
        if (!std::isfinite(v)) throw FormatError("non-finite sample in WAV data");
      }
      wav.channels[c][i] = v;
    }
  }
  return wav;
}

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open audio file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, kFormatPcm);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(os, static_cast<std::uint32_t>(audio.sample_rate * 2));
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (float s : audio.samples) {
    const float clamped = std::clamp(s, -1.0f, 1.0f);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clamped * 32767.0f))));
  }
}

AudioBuffer downmix(std::span<const std::vector<float>> channels, int sample_rate) {
  if (channels.empty()) throw Error("downmix needs at least one channel");
  AudioBuffer out;
  out.sample_rate = sample_rate;
  if (channels.size() == 1) {
    out.samples = channels[0];
    return out;
  }
  if (channels.size() != 2) throw Error("downmix supports one or two channels");
  if (channels[0].size() != channels[1].size()) {
    throw Error("channel length mismatch: " + std::to_string(channels[0].size()) + " vs " +
                std::to_string(channels[1].size()));
  }
  out.samples.resize(channels[0].size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = (channels[0][i] + channels[1][i]) * 0.5f;
  return out;
}

AudioBuffer resample_linear(const AudioBuffer& audio, int target_rate) {
  if (audio.sample_rate == target_rate || audio.samples.empty()) {
    AudioBuffer out = audio;
    out.sample_rate = target_rate;
    return out;
  }
  AudioBuffer out;
  out.sample_rate = target_rate;
  const double ratio = static_cast<double>(audio.sample_rate) / target_rate;
  const auto n = static_cast<std::size_t>(std::floor((audio.samples.size() - 1) / ratio)) + 1;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double src = static_cast<double>(i) * ratio;
    const auto lo = static_cast<std::size_t>(src);
    const std::size_t hi = std::min(lo + 1, audio.samples.size() - 1);
    const double frac = src - static_cast<double>(lo);
    out.samples[i] = static_cast<float>(audio.samples[lo] * (1.0 - frac) + audio.samples[hi] * frac);
  }
  return out;
}

AudioBuffer load_audio(const std::filesystem::path& path) {
  WavData wav = read_wav(path);
  AudioBuffer mono = downmix(wav.channels, wav.sample_rate);
  if (mono.sample_rate != kSampleRate) {
    log().warn("{}: resampling {} Hz to {} Hz with linear interpolation", path.string(), mono.sample_rate, kSampleRate);
    mono = resample_linear(mono, kSampleRate);
  }
  return mono;
}

}  // namespace choreo
