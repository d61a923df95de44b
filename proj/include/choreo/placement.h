#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "choreo/audio.h"
#include "choreo/difficulty.h"
#include "choreo/nn/checkpoint.h"
#include "choreo/nn/layers.h"
#include "choreo/peakpick.h"
#include "choreo/simfile.h"

namespace choreo::placement {

enum class ModelKind { LogReg, MLP, CNN, CLSTM };

std::string to_string(ModelKind kind);
/// Accepts logreg, mlp, cnn, clstm (any case).
ModelKind parse_model_kind(const std::string& name);

/// Labels and evaluation range of one chart over its song's frames.
struct ChartTarget {
  std::string name;
  int difficulty = 0;
  /// Author class, or -1 when author conditioning is off or the author is unknown.
  int author = -1;
  /// 1 on the frame nearest each step time.
  std::vector<float> labels;
  /// Inclusive frame range from the first to the last step.
  int first_frame = 0;
  int last_frame = -1;
  /// Step times in seconds, sorted, restricted to the audio.
  std::vector<double> step_times;

  std::span<const float> range_labels() const {
    return std::span<const float>(labels).subspan(static_cast<std::size_t>(first_frame),
                                                  static_cast<std::size_t>(last_frame - first_frame + 1));
  }
};

struct PlacementSong {
  std::string name;
  /// Normalized features.
  MelSpectrogram features;
  std::vector<ChartTarget> charts;
};

/// Builds the target of one chart. Steps outside the audio are dropped with a warning; a
/// chart left without steps yields an empty optional.
std::optional<ChartTarget> make_target(const std::string& name, const Chart& chart, int frames, int author = -1);

PlacementSong make_song(const std::string& name, MelSpectrogram features, const Simfile& simfile,
                        const std::map<std::string, int>& authors = {});

/// Fraction of positive labels over every chart's evaluation range.
double label_prevalence(std::span<const PlacementSong> songs);

struct Architecture {
  ModelKind kind = ModelKind::CLSTM;
  /// Width of the author one-hot; 0 disables author conditioning.
  int num_authors = 0;
  double dropout = 0.5;

  int condition_width() const { return kNumDifficulties + num_authors; }
  std::string to_json() const;
  static Architecture from_json(const std::string& text);
};

/// Expected per-example shape of one intermediate value.
struct LayerShape {
  std::string name;
  nn::Shape shape;
};

/// Intermediate shapes of a forward pass, batch axis omitted. The forward pass asserts each.
std::vector<LayerShape> architecture_table(const Architecture& arch);

/// Conditioning of one row: difficulty class and optional author class.
struct Condition {
  int difficulty = 0;
  int author = -1;
};

/// Hidden and cell values of every LSTM layer, carried between chunks.
struct RecurrentState {
  std::vector<nn::Tensor> h;
  std::vector<nn::Tensor> c;
  bool empty() const { return h.empty(); }
};

/// Writes the 3 x 15 x 80 (channel, time, band) context window of frame t.
void encode_window(const MelSpectrogram& spectrogram, int t, float* out);

class Model {
 public:
  explicit Model(Architecture arch, std::uint64_t seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;

  const Architecture& architecture() const { return arch_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }
  nn::Parameter& output_bias() { return out_.bias(); }

  /// Logits [rows, 1] for framewise models. `windows` holds N encoded windows [N, 3, 15, 80];
  /// row r uses window `window_of[r]` with condition `conditions[r]`.
  nn::Var frame_logits(nn::Tape& tape, const nn::Tensor& windows, const std::vector<int>& window_of,
                       const std::vector<Condition>& conditions, bool training, nn::Rng& rng) const;

  /// Logits [steps * S, 1] of the CLSTM in time-major order (row t * S + s). `windows` holds
  /// chunks of `steps` consecutive windows [chunks * steps, 3, 15, 80]; sequence s reads chunk
  /// `chunk_of[s]`. `state` supplies the initial state (zero when empty) and receives the final one.
  nn::Var sequence_logits(nn::Tape& tape, const nn::Tensor& windows, int steps, const std::vector<int>& chunk_of,
                          const std::vector<Condition>& conditions, RecurrentState& state, bool training,
                          nn::Rng& rng) const;

 private:
  nn::Var conv_features(nn::Tape& tape, const nn::Tensor& windows) const;
  nn::Tensor condition_matrix(const std::vector<Condition>& conditions, const std::vector<int>& order) const;
  nn::Var head(nn::Tape& tape, nn::Var x, bool training, nn::Rng& rng) const;

  Architecture arch_;
  nn::ParameterStore params_;
  nn::Conv2d conv1_, conv2_;
  nn::Lstm lstm1_, lstm2_;
  nn::Dense fc1_, fc2_, out_;
};

/// Unroll length for CLSTM training and the chunk length for stateful inference.
inline constexpr int kUnroll = 100;

/// Per-frame step probabilities for several conditions on one song. The CLSTM runs each
/// condition with state carried across chronological chunks of kUnroll frames.
std::vector<std::vector<float>> predict_song(const Model& model, const MelSpectrogram& features,
                                             const std::vector<Condition>& conditions);

struct TrainConfig {
  double learning_rate = 0.01;
  double clip_norm = 5.0;
  /// Examples (chart frames) per minibatch.
  int batch_size = 256;
  int unroll = kUnroll;
  int max_epochs = 100;
  int patience = 10;
  /// 0 means every batch of the epoch.
  int max_batches_per_epoch = 0;
  std::uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_auc_pr = 0.0;
};

struct TrainResult {
  int best_epoch = 0;
  double best_valid_auc_pr = 0.0;
  double first_batch_loss = 0.0;
  std::vector<EpochLog> history;
};

/// Minibatch SGD with global-norm clipping and early stopping on mean validation AUC-PR.
/// The model is left holding the best-validation parameters.
TrainResult train(Model& model, std::span<const PlacementSong> train_songs, std::span<const PlacementSong> valid_songs,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

/// Mean per-chart AUC-PR over every chart's evaluation range; charts without positives are skipped.
double mean_auc_pr(const Model& model, std::span<const PlacementSong> songs);

/// A placement model with the normalization it was trained against.
struct Trained {
  Model model;
  NormalizationStats normalization;
  std::uint64_t seed = 0;
};

void save(const std::filesystem::path& path, const Model& model, const NormalizationStats& stats, std::uint64_t seed);
Trained load(const std::filesystem::path& path);

/// predict_song for one condition, after checking that the features were normalized with the
/// checkpoint's statistics.
std::vector<float> predict_probs(const Trained& trained, const MelSpectrogram& features, Condition condition);

/// Smoothed probabilities and ground truth of every chart, ready for peak picking.
std::vector<peakpick::ChartPeaks> chart_peaks(const Model& model, std::span<const PlacementSong> songs,
                                              int hamming_width = peakpick::kDefaultHammingWidth);

/// Per-difficulty thresholds calibrated on validation songs.
peakpick::Thresholds calibrate(const Model& model, std::span<const PlacementSong> valid_songs,
                               int hamming_width = peakpick::kDefaultHammingWidth);

struct Evaluation {
  double perplexity = 0.0;
  double auc_pr = 0.0;
  double fscore_c = 0.0;
  double fscore_m = 0.0;
  double precision_m = 0.0;
  double recall_m = 0.0;
  std::size_t charts = 0;
};

/// Frame perplexity and AUC-PR averaged over charts, plus both F-scores. Micro counts use each
/// chart's difficulty threshold.
Evaluation evaluate(const Model& model, std::span<const PlacementSong> songs, const peakpick::Thresholds& thresholds,
                    int hamming_width = peakpick::kDefaultHammingWidth);

}  // namespace choreo::placement
