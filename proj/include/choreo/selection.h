#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "choreo/metrics.h"
#include "choreo/nn/layers.h"
#include "choreo/simfile.h"

namespace choreo::selection {

/// Output tokens are StepCombo indices 0..255; this extra id marks the start of a chart.
inline constexpr int kStartToken = kNumCombos;
/// 16 arrow-state indicators plus the start flag.
inline constexpr int kBagWidth = 17;
inline constexpr int kNumPhases = 4;
inline constexpr double kMaxDeltaSeconds = 60.0;
inline constexpr double kMaxDeltaBeats = 120.0;

/// round(4 * frac(beat)) mod 4, halves rounding up.
int beat_phase_index(double beat);
std::array<float, kNumPhases> beat_phase(double beat);

struct RhythmFeatures {
  double dt_prev = 0.0;
  double dt_next = 0.0;
  double db_prev = 0.0;
  double db_next = 0.0;
  std::array<float, kNumPhases> phase{};
};

/// Deltas to the neighbours of step i, clamped to kMaxDeltaSeconds / kMaxDeltaBeats. The first
/// step copies its next-deltas into its prev-deltas and the last step the reverse; a lone step
/// gets zeros.
RhythmFeatures rhythm_features(std::span<const TimedStep> steps, std::size_t i);

/// Indicator per (arrow, state) at arrow * 4 + state, then the start flag.
std::array<float, kBagWidth> bag_of_arrows(int token);

/// Rhythm inputs a model reads: Δ-time adds 2 values, Δ-beat with beat phase adds 6.
struct FeatureSet {
  bool delta_time = false;
  bool delta_beat = false;

  int width() const { return (delta_time ? 2 : 0) + (delta_beat ? 2 + kNumPhases : 0); }
  /// "none", "time", "beat" or "time+beat".
  std::string to_string() const;
  static FeatureSet parse(const std::string& text);
  bool operator==(const FeatureSet&) const = default;
};

void encode_rhythm(const RhythmFeatures& rhythm, FeatureSet features, float* out);

/// Tokens of one chart with the rhythm of every step.
struct ChartSequence {
  std::string name;
  std::vector<int> tokens;
  std::vector<RhythmFeatures> rhythm;
};

/// Empty optional for a chart without steps.
std::optional<ChartSequence> make_sequence(std::string name, const Chart& chart);

/// Interpolated modified Kneser-Ney n-gram model over tokens [0, vocab), with `vocab` used as START.
class KneserNey {
 public:
  /// Every sequence starts with START and has no other START. Throws Error on an empty corpus.
  static KneserNey train(const std::vector<std::vector<int>>& sequences, int vocab, int order = 5);

  int vocab() const { return vocab_; }
  int order() const { return order_; }
  int start_token() const { return vocab_; }

  /// P(token | context); only the last order-1 context tokens are used.
  double prob(std::span<const int> context, int token) const;
  std::vector<double> distribution(std::span<const int> context) const;

  /// Discount of an n-gram of length `n` (1..order) seen `count` times (the D3+ value for 3 and up).
  double discount(int n, int count) const;
  /// Count used at length n: raw for the top order and for n-grams that start with START,
  /// continuation counts otherwise.
  double count(std::span<const int> ngram) const;

  void save(const std::filesystem::path& path) const;
  static KneserNey load(const std::filesystem::path& path);

 private:
  struct ContextStats {
    double total = 0.0;
    std::array<double, 3> buckets{};
  };

  std::uint64_t key(std::span<const int> tokens) const;
  void finish();
  double prob_at(std::span<const int> context, int token) const;

  int vocab_ = 0;
  int order_ = 0;
  std::vector<std::array<double, 3>> discounts_;
  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> counts_;
  std::vector<std::unordered_map<std::uint64_t, ContextStats>> contexts_;
};

enum class SelectionKind { KN5, MLP5, LSTM };

std::string to_string(SelectionKind kind);
/// Accepts kn5, mlp5, lstm (any case).
SelectionKind parse_selection_kind(const std::string& name);

/// Stateful next-step predictor. Call next() for a step, then observe() with the chosen token.
class Predictor {
 public:
  virtual ~Predictor() = default;
  /// Distribution over the 256 combos for the step with the given rhythm.
  virtual std::vector<double> next(const RhythmFeatures& rhythm) = 0;
  virtual void observe(int token) = 0;
};

class SelectionModel {
 public:
  virtual ~SelectionModel() = default;
  virtual SelectionKind kind() const = 0;
  virtual FeatureSet features() const = 0;
  virtual std::unique_ptr<Predictor> predictor() const = 0;
  /// Distribution of every step given the ground-truth history.
  virtual std::vector<std::vector<double>> chart_distributions(const ChartSequence& chart) const;
  virtual void save(const std::filesystem::path& path) const = 0;
};

class KnSelectionModel : public SelectionModel {
 public:
  explicit KnSelectionModel(KneserNey lm) : lm_(std::move(lm)) {}
  static KnSelectionModel train(std::span<const ChartSequence> charts);

  const KneserNey& lm() const { return lm_; }
  SelectionKind kind() const override { return SelectionKind::KN5; }
  FeatureSet features() const override { return {}; }
  std::unique_ptr<Predictor> predictor() const override;
  void save(const std::filesystem::path& path) const override { lm_.save(path); }

 private:
  KneserNey lm_;
};

struct SelectionArchitecture {
  SelectionKind kind = SelectionKind::LSTM;
  FeatureSet features;
  double dropout = 0.5;

  /// Per-step input: bag-of-arrows plus rhythm; MLP5 concatenates 4 of them.
  int input_width() const;
  std::string to_json() const;
  static SelectionArchitecture from_json(const std::string& text);
};

inline constexpr int kMlpWindow = 4;
inline constexpr int kLstmHidden = 128;

/// Time-major LSTM inputs: row t * batch + b.
struct SequenceBatch {
  int steps = 0;
  int batch = 0;
  nn::Tensor inputs;
  std::vector<int> targets;
  std::vector<float> weights;
};

class NeuralSelectionModel : public SelectionModel {
 public:
  NeuralSelectionModel(SelectionArchitecture arch, std::uint64_t seed = 0);
  NeuralSelectionModel(const NeuralSelectionModel&) = delete;
  NeuralSelectionModel& operator=(const NeuralSelectionModel&) = delete;
  NeuralSelectionModel(NeuralSelectionModel&&) = default;

  const SelectionArchitecture& architecture() const { return arch_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  SelectionKind kind() const override { return arch_.kind; }
  FeatureSet features() const override { return arch_.features; }
  std::unique_ptr<Predictor> predictor() const override;
  std::vector<std::vector<double>> chart_distributions(const ChartSequence& chart) const override;
  void save(const std::filesystem::path& path) const override;
  static NeuralSelectionModel load(const std::filesystem::path& path);

  /// Logits [rows, 256] of the MLP for inputs [rows, input_width].
  nn::Var mlp_logits(nn::Tape& tape, nn::Var inputs, bool training, nn::Rng& rng) const;
  /// Logits [steps * batch, 256] of the LSTM; `state` is the initial state (zero when invalid)
  /// and receives the final one.
  nn::Var lstm_logits(nn::Tape& tape, nn::Var inputs, int steps, std::array<nn::LstmState, 2>& state, bool training,
                      nn::Rng& rng) const;

 private:
  SelectionArchitecture arch_;
  std::uint64_t seed_ = 0;
  nn::ParameterStore params_;
  nn::Dense fc1_, fc2_, out_;
  nn::Lstm lstm1_, lstm2_;
};

/// Input row of the LSTM at step i: bag of token i-1 (START at 0) and the rhythm of step i.
void lstm_input(const ChartSequence& chart, std::size_t i, FeatureSet features, float* out);
/// Input row of the MLP at step i: for slot j = 1..4 the bag of token i-j and the rhythm of
/// step i-j+1. Slot token -1 is START; earlier slots are zeros.
void mlp_input(const ChartSequence& chart, std::size_t i, FeatureSet features, float* out);

/// KN files start with "CHKN", neural checkpoints with "CHCK".
std::unique_ptr<SelectionModel> load_selection_model(const std::filesystem::path& path);

struct SelectionTrainConfig {
  double learning_rate = 0.01;
  double clip_norm = 5.0;
  int batch_size = 64;
  /// LSTM unroll; each chunk starts from a zero state.
  int unroll = 64;
  int max_epochs = 100;
  int patience = 10;
  /// 0 means every batch of the epoch.
  int max_batches_per_epoch = 0;
  std::uint64_t seed = 0;
};

struct SelectionEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_cross_entropy = 0.0;
};

struct SelectionTrainResult {
  int best_epoch = 0;
  double best_valid_cross_entropy = 0.0;
  std::vector<SelectionEpochLog> history;
};

/// Teacher-forced minibatch SGD with clipping; early stopping on mean validation per-step
/// cross-entropy. The model keeps the best-validation parameters.
SelectionTrainResult train(NeuralSelectionModel& model, std::span<const ChartSequence> train_charts,
                           std::span<const ChartSequence> valid_charts, const SelectionTrainConfig& cfg,
                           const std::function<void(const SelectionEpochLog&)>& on_epoch = {});

/// Mean over charts of the per-step cross-entropy (natural log).
double mean_cross_entropy(const SelectionModel& model, std::span<const ChartSequence> charts);

/// Perplexity and argmax accuracy per chart, averaged over charts. No validity mask.
metrics::SelectionScores evaluate(const SelectionModel& model, std::span<const ChartSequence> charts);

/// Which tokens keep hold states consistent given the arrows currently held. The all-Off
/// token is always invalid.
std::array<bool, kNumCombos> valid_tokens(const std::array<bool, kNumArrows>& held);

struct GenerateOptions {
  bool validity_mask = true;
  double temperature = 1.0;
};

/// Samples one combo per time, feeding each sample back as history. `beats` (same length as
/// `times`) is required when the model reads Δ-beat features.
std::vector<StepCombo> generate(const SelectionModel& model, std::span<const double> times,
                                std::optional<std::span<const double>> beats, nn::Rng& rng,
                                const GenerateOptions& options = {});

}  // namespace choreo::selection
