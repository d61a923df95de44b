#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "choreo/audio.h"
#include "choreo/peakpick.h"
#include "choreo/placement.h"
#include "choreo/selection.h"
#include "choreo/simfile.h"

namespace choreo::app {

/// Environment variable naming the feature cache directory.
inline constexpr const char* kCacheEnv = "CHOREO_CACHE_DIR";
inline constexpr const char* kDefaultCacheDir = ".choreo-cache";

struct PlacementSettings {
  std::string kind = "clstm";
  double learning_rate = 0.01;
  double clip_norm = 5.0;
  int batch_size = 256;
  int unroll = placement::kUnroll;
  int max_epochs = 100;
  int patience = 10;
  int max_batches_per_epoch = 0;
  double dropout = 0.5;
  bool author_conditioning = false;
  int hamming_width = peakpick::kDefaultHammingWidth;
};

struct SelectionSettings {
  std::string kind = "lstm";
  std::string features = "time";
  double learning_rate = 0.01;
  double clip_norm = 5.0;
  int batch_size = 64;
  int unroll = 64;
  int max_epochs = 100;
  int patience = 10;
  int max_batches_per_epoch = 0;
  double dropout = 0.5;
  bool augment = true;
};

struct GenerationSettings {
  double temperature = 1.0;
  bool validity_mask = true;
  /// Output tempo when --bpm is not given.
  double grid_bpm = 120.0;
  int quantization = kMaxRowsPerMeasure;
};

struct Config {
  std::uint64_t seed = 0;
  int jobs = 1;
  /// Empty: $CHOREO_CACHE_DIR, then .choreo-cache.
  std::string cache_dir;
  std::string dataset = "dataset";
  std::string models_dir = "models";
  PlacementSettings placement;
  SelectionSettings selection;
  GenerationSettings generation;

  std::string to_json() const;
  /// Keys missing from `text` keep their defaults; unknown keys are an error.
  static Config from_json(const std::string& text);
  static Config load(const std::filesystem::path& path);
  void validate() const;
  std::filesystem::path resolved_cache_dir() const;
};

enum class Split { Train, Valid, Test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

/// Train gets the remainder after floor(n/10) valid and floor(n/10) test songs.
std::array<std::size_t, 3> split_sizes(std::size_t songs);

struct ManifestSong {
  std::string name;
  std::filesystem::path simfile;
  std::filesystem::path audio;
  std::filesystem::path features;
  Split split = Split::Train;
};

/// Songs of a prepared pack with their split. Split reads go through songs(), which logs and
/// records each access.
class Manifest {
 public:
  std::uint64_t seed = 0;
  std::filesystem::path pack_dir;
  std::filesystem::path normalization;
  std::vector<ManifestSong> entries;
  std::vector<std::string> skipped;

  std::vector<const ManifestSong*> songs(Split split, const std::string& purpose) const;

  struct Access {
    Split split;
    std::string purpose;
  };
  const std::vector<Access>& accesses() const { return accesses_; }

  std::string to_json() const;
  static Manifest from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

 private:
  mutable std::vector<Access> accesses_;
};

/// Every *.sm under `pack_dir` (sorted) with its audio: #MUSIC when it resolves to a .wav,
/// otherwise the single .wav beside it. Songs without audio go to `skipped`. The seeded
/// shuffle assigns splits.
Manifest scan_pack(const std::filesystem::path& pack_dir, std::uint64_t seed);

/// Every parseable simfile under `pack_dir` with its WAV duration when one is found. Used by
/// the stats command, which does not need audio.
std::vector<SongRecord> pack_records(const std::filesystem::path& pack_dir);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// scan_pack, feature extraction into the cache and normalization fitted on the train split.
/// Songs whose audio fails to decode are moved to `skipped`.
Manifest prepare(const std::filesystem::path& pack_dir, const Config& config);

/// Parsed simfile and normalized features of one manifest song.
struct LoadedSong {
  const ManifestSong* entry = nullptr;
  Simfile simfile;
  MelSpectrogram features;
};

std::vector<LoadedSong> load_split(const Manifest& manifest, Split split, const std::string& purpose, const Config& config,
                                   bool with_features);

std::filesystem::path placement_checkpoint_path(const Config& config, const std::string& kind);
std::filesystem::path selection_checkpoint_path(const Config& config, const std::string& kind);
std::filesystem::path thresholds_path(const std::filesystem::path& checkpoint);
/// Author classes of a checkpoint trained with author conditioning; empty otherwise.
std::map<std::string, int> read_authors(const std::filesystem::path& checkpoint);

struct PlacementRun {
  std::filesystem::path checkpoint;
  placement::TrainResult training;
  peakpick::Thresholds thresholds{};
  placement::Evaluation validation;
};

/// Trains on the train split, calibrates on valid and writes the checkpoint, the thresholds
/// sidecar and validation metrics (<checkpoint>.valid.json).
/// An empty `checkpoint` uses placement_checkpoint_path.
PlacementRun train_placement(const Manifest& manifest, const Config& config, std::filesystem::path checkpoint = {});

struct SelectionRun {
  std::filesystem::path checkpoint;
  std::size_t training_sequences = 0;
  std::optional<selection::SelectionTrainResult> training;
  metrics::SelectionScores validation;
};

SelectionRun train_selection(const Manifest& manifest, const Config& config, std::filesystem::path checkpoint = {});

/// Charts of the given songs as selection sequences, optionally with the three mirrors.
std::vector<selection::ChartSequence> selection_sequences(const std::vector<LoadedSong>& songs, bool augment);

struct ChoreographRequest {
  std::filesystem::path audio;
  std::string difficulty = "Medium";
  std::filesystem::path placement_checkpoint;
  std::filesystem::path selection_checkpoint;
  /// Empty: the checkpoint's thresholds sidecar.
  std::filesystem::path thresholds;
  std::filesystem::path output;
  std::optional<double> bpm;
};

struct ChoreographResult {
  Simfile simfile;
  std::size_t steps = 0;
  double seconds = 0.0;
};

/// Audio to `.sm`. Writes the file even when no peak clears the threshold (an empty chart);
/// callers treat steps == 0 as failure.
ChoreographResult choreograph(const ChoreographRequest& request, const Config& config);

struct EvalRequest {
  std::vector<std::filesystem::path> placement_checkpoints;
  std::vector<std::filesystem::path> selection_checkpoints;
  std::filesystem::path output;
};

/// Test-split metrics of every checkpoint; writes <output>.json and <output>.csv.
std::vector<metrics::ReportRow> evaluate(const Manifest& manifest, const EvalRequest& request, const Config& config);

/// Command-line entry point; returns the process exit status.
int run_cli(int argc, char** argv);

}  // namespace choreo::app
