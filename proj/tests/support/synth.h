#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "choreo/audio.h"
#include "choreo/simfile.h"

namespace choreo::testing {

/// A generated song: click-track audio and charts whose steps sit exactly on the clicks.
struct SynthSong {
  std::string name;
  Simfile simfile;
  AudioBuffer audio;
};

struct SynthOptions {
  int songs = 20;
  double seconds = 10.0;
  std::uint64_t seed = 1;
  /// Peak amplitude of the uniform background noise.
  double noise = 0.002;
};

/// Kick, snare and hi-hat hits on a 16th-note grid at a per-song tempo. Easy charts step on
/// kicks, Medium on kicks and snares, Hard on every hit.
std::vector<SynthSong> click_corpus(const SynthOptions& options);

/// Writes <dir>/<name>/<name>.sm and <name>.wav for each song.
void write_pack(const std::filesystem::path& dir, const std::vector<SynthSong>& songs);

/// Audio of a given length with hits at the given times (kick, snare or hat per entry).
enum class Drum { Kick, Snare, Hat };
AudioBuffer render_hits(double seconds, const std::vector<std::pair<double, Drum>>& hits, std::uint64_t seed, double noise);

}  // namespace choreo::testing
