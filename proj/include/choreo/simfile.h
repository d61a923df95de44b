#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace choreo {

/// State of one arrow at one instant. The numeric value is the `.sm` digit.
enum class ArrowState : std::uint8_t { Off = 0, Tap = 1, HoldStart = 2, HoldEnd = 3 };

inline constexpr int kNumArrows = 4;
inline constexpr int kNumCombos = 256;

/// Simultaneous state of the four arrows, ordered (left, down, up, right).
struct StepCombo {
  std::array<ArrowState, kNumArrows> arrows{};

  /// Base-4 index with the left arrow as the most significant digit ("1000" -> 64).
  int index() const;
  static StepCombo from_index(int index);

  /// Four `.sm` digits, e.g. "1002".
  std::string to_string() const;
  static StepCombo from_string(std::string_view digits);

  bool empty() const;
  int count(ArrowState state) const;

  bool operator==(const StepCombo&) const = default;
};

struct TempoChange {
  double beat = 0.0;
  double bpm = 120.0;

  bool operator==(const TempoChange&) const = default;
};

struct TimedStep {
  double beat = 0.0;
  double time = 0.0;
  StepCombo combo;

  bool operator==(const TimedStep&) const = default;
};

struct Chart {
  std::string difficulty_name;
  int difficulty_rating = 1;
  std::string author;
  std::vector<TimedStep> steps;

  bool operator==(const Chart&) const = default;
};

struct Simfile {
  std::string title;
  std::string artist;
  double offset = 0.0;
  std::vector<TempoChange> tempo_map;
  std::vector<Chart> charts;
  std::string audio_path;

  bool operator==(const Simfile&) const = default;
};

/// Beats per measure in 4/4; every grid computation below assumes it.
inline constexpr int kBeatsPerMeasure = 4;
/// Finest row resolution a measure can carry.
inline constexpr int kMaxRowsPerMeasure = 192;
/// Row counts a measure may use, coarsest first.
inline constexpr std::array<int, 10> kMeasureRowCounts = {4, 8, 12, 16, 24, 32, 48, 64, 96, 192};

/// Parses the supported `.sm` subset. Throws ParseError with the offending line.
Simfile parse_simfile(std::string_view text);

/// Serializes to `.sm`, snapping every step to a `quantization`-per-measure grid.
std::string write_simfile(const Simfile& simfile, int quantization = kMaxRowsPerMeasure);

/// Seconds into the audio for a beat position. Offset follows `#OFFSET`: time = beat time - offset.
double beat_to_time(double beat, std::span<const TempoChange> tempo_map, double offset);

/// Throws Error when `tempo_map` is empty, does not start at beat 0, has non-increasing
/// beats or a non-positive BPM.
void validate_tempo_map(std::span<const TempoChange> tempo_map);

/// Recomputes every step's time from its beat.
void retime(Chart& chart, std::span<const TempoChange> tempo_map, double offset);

enum class MirrorAxis { LeftRight, UpDown, Both };

StepCombo mirror(const StepCombo& combo, MirrorAxis axis);
Chart mirror_chart(const Chart& chart, MirrorAxis axis);

/// Each chart followed by its left/right, up/down and double mirrors.
std::vector<Chart> augment_dataset(std::span<const Chart> charts);

struct HoldViolation {
  std::size_t step_index = 0;
  int arrow = 0;
  std::string reason;
};

/// First step that taps or starts a hold on a held arrow, or releases an arrow that is not held.
std::optional<HoldViolation> find_hold_violation(std::span<const TimedStep> steps);

enum class Subdivision { Quarter, Eighth, Twelfth, Sixteenth, TwentyFourth, ThirtySecond, Other };

inline constexpr int kNumSubdivisions = 7;

/// Coarsest rhythmic grid (within 1e-4 beats) that contains `beat`.
Subdivision subdivision_class(double beat);
std::string_view subdivision_name(Subdivision subdivision);

/// Counts of steps per Subdivision, indexed by the enum value.
std::array<std::size_t, kNumSubdivisions> subdivision_histogram(const Chart& chart);

/// One song of a dataset: its parsed simfile plus the audio length when it is known.
struct SongRecord {
  std::string name;
  Simfile simfile;
  std::optional<double> audio_seconds;
};

struct DatasetStats {
  std::size_t num_songs = 0;
  std::size_t num_charts = 0;
  double total_audio_hours = 0.0;
  double total_chart_hours = 0.0;
  double steps_per_sec = 0.0;
  std::size_t vocab_size = 0;
  std::size_t total_steps = 0;
  /// Share of steps made of exactly one tapped arrow.
  double single_arrow_fraction = 0.0;
  /// Difficulty name -> per-Subdivision step counts.
  std::map<std::string, std::array<std::size_t, kNumSubdivisions>> subdivisions;
  /// Songs without a known audio duration, excluded from the hour totals.
  std::vector<std::string> missing_audio;
};

DatasetStats dataset_stats(std::span<const SongRecord> songs);

}  // namespace choreo
