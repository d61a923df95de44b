#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>

#include "choreo/error.h"
#include "choreo/log.h"
#include "choreo/nn/checkpoint.h"
#include "choreo/nn/optim.h"
#include "choreo/selection.h"

namespace choreo::selection {

namespace {

constexpr int kInferenceBlock = 512;

std::vector<double> softmax_row(const float* logits) {
  std::vector<double> out(kNumCombos);
  double hi = logits[0];
  for (int k = 1; k < kNumCombos; ++k) hi = std::max<double>(hi, logits[k]);
  double total = 0.0;
  for (int k = 0; k < kNumCombos; ++k) total += out[static_cast<std::size_t>(k)] = std::exp(logits[k] - hi);
  for (double& v : out) v /= total;
  return out;
}

std::vector<std::vector<double>> softmax_rows(const nn::Tensor& logits) {
  std::vector<std::vector<double>> out;
  for (int r = 0; r < logits.rows(); ++r) out.push_back(softmax_row(logits.data() + static_cast<std::size_t>(r) * kNumCombos));
  return out;
}

class KnPredictor : public Predictor {
 public:
  explicit KnPredictor(const KneserNey& lm) : lm_(lm), history_{kStartToken} {}
  std::vector<double> next(const RhythmFeatures&) override { return lm_.distribution(history_); }
  void observe(int token) override { history_.push_back(token); }

 private:
  const KneserNey& lm_;
  std::vector<int> history_;
};

class MlpPredictor : public Predictor {
 public:
  explicit MlpPredictor(const NeuralSelectionModel& model) : model_(model) {}

  std::vector<double> next(const RhythmFeatures& rhythm) override {
    if (history_.rhythm.size() != history_.tokens.size()) throw Error("predictor: next() called twice without observe()");
    history_.rhythm.push_back(rhythm);
    const int width = model_.architecture().input_width();
    nn::Tensor x({1, width});
    mlp_input(history_, history_.tokens.size(), model_.features(), x.data());
    nn::Tape tape;
    nn::Rng rng;
    const nn::Var logits = model_.mlp_logits(tape, tape.constant(std::move(x)), false, rng);
    return softmax_row(tape.value(logits).data());
  }

  void observe(int token) override {
    if (history_.rhythm.size() != history_.tokens.size() + 1) throw Error("predictor: observe() without next()");
    history_.tokens.push_back(token);
  }

 private:
  const NeuralSelectionModel& model_;
  ChartSequence history_;
};

class LstmPredictor : public Predictor {
 public:
  explicit LstmPredictor(const NeuralSelectionModel& model) : model_(model) {}

  std::vector<double> next(const RhythmFeatures& rhythm) override {
    if (pending_) throw Error("predictor: next() called twice without observe()");
    const FeatureSet features = model_.features();
    nn::Tensor x({1, kBagWidth + features.width()});
    const auto bag = bag_of_arrows(previous_);
    std::copy(bag.begin(), bag.end(), x.data());
    encode_rhythm(rhythm, features, x.data() + kBagWidth);
    nn::Tape tape;
    std::array<nn::LstmState, 2> state{};
    if (!h_.empty()) {
      for (std::size_t l = 0; l < 2; ++l) state[l] = {tape.constant(h_[l]), tape.constant(c_[l])};
    }
    nn::Rng rng;
    const nn::Var logits = model_.lstm_logits(tape, tape.constant(std::move(x)), 1, state, false, rng);
    h_.clear();
    c_.clear();
    for (const nn::LstmState& s : state) {
      h_.push_back(tape.value(s.h));
      c_.push_back(tape.value(s.c));
    }
    pending_ = true;
    return softmax_row(tape.value(logits).data());
  }

  void observe(int token) override {
    if (!pending_) throw Error("predictor: observe() without next()");
    previous_ = token;
    pending_ = false;
  }

 private:
  const NeuralSelectionModel& model_;
  int previous_ = kStartToken;
  bool pending_ = false;
  std::vector<nn::Tensor> h_, c_;
};

double chart_cross_entropy(const std::vector<std::vector<double>>& dists, const ChartSequence& chart) {
  double ce = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    ce -= std::log(std::max(dists[i][static_cast<std::size_t>(chart.tokens[i])], 1e-300));
  }
  return ce / static_cast<double>(dists.size());
}

}  // namespace

std::vector<std::vector<double>> SelectionModel::chart_distributions(const ChartSequence& chart) const {
  std::vector<std::vector<double>> out;
  auto p = predictor();
  for (std::size_t i = 0; i < chart.tokens.size(); ++i) {
    out.push_back(p->next(chart.rhythm[i]));
    p->observe(chart.tokens[i]);
  }
  return out;
}

KnSelectionModel KnSelectionModel::train(std::span<const ChartSequence> charts) {
  std::vector<std::vector<int>> sequences;
  for (const ChartSequence& c : charts) {
    std::vector<int> seq{kStartToken};
    seq.insert(seq.end(), c.tokens.begin(), c.tokens.end());
    sequences.push_back(std::move(seq));
  }
  return KnSelectionModel(KneserNey::train(sequences, kNumCombos, 5));
}

std::unique_ptr<Predictor> KnSelectionModel::predictor() const { return std::make_unique<KnPredictor>(lm_); }

int SelectionArchitecture::input_width() const {
  const int step = kBagWidth + features.width();
  return kind == SelectionKind::MLP5 ? kMlpWindow * step : step;
}

std::string SelectionArchitecture::to_json() const {
  nlohmann::ordered_json j;
  j["type"] = "selection";
  j["kind"] = selection::to_string(kind);
  j["features"] = features.to_string();
  j["dropout"] = dropout;
  return j.dump();
}

SelectionArchitecture SelectionArchitecture::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("selection architecture: ") + e.what());
  }
  if (j.value("type", "") != "selection") throw FormatError("checkpoint is not a selection model");
  SelectionArchitecture a;
  a.kind = parse_selection_kind(j.at("kind").get<std::string>());
  if (a.kind == SelectionKind::KN5) throw FormatError("KN5 is not a neural selection model");
  a.features = FeatureSet::parse(j.at("features").get<std::string>());
  a.dropout = j.at("dropout").get<double>();
  return a;
}

NeuralSelectionModel::NeuralSelectionModel(SelectionArchitecture arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
  if (arch_.kind == SelectionKind::KN5) throw Error("KN5 is not a neural selection model");
  if (arch_.dropout < 0.0 || arch_.dropout >= 1.0) throw Error("dropout must be in [0, 1)");
  nn::Rng rng(seed);
  if (arch_.kind == SelectionKind::MLP5) {
    fc1_ = nn::Dense(params_, "fc1", arch_.input_width(), 256, rng);
    fc2_ = nn::Dense(params_, "fc2", 256, 128, rng);
    out_ = nn::Dense(params_, "out", 128, kNumCombos, rng);
  } else {
    lstm1_ = nn::Lstm(params_, "lstm1", arch_.input_width(), kLstmHidden, rng);
    lstm2_ = nn::Lstm(params_, "lstm2", kLstmHidden, kLstmHidden, rng);
    out_ = nn::Dense(params_, "out", kLstmHidden, kNumCombos, rng);
  }
}

nn::Var NeuralSelectionModel::mlp_logits(nn::Tape& tape, nn::Var inputs, bool training, nn::Rng& rng) const {
  if (arch_.kind != SelectionKind::MLP5) throw Error("mlp_logits on a non-MLP model");
  nn::Var h = nn::dropout(tape, nn::relu(tape, fc1_(tape, inputs)), arch_.dropout, training, rng);
  h = nn::dropout(tape, nn::relu(tape, fc2_(tape, h)), arch_.dropout, training, rng);
  return out_(tape, h);
}

nn::Var NeuralSelectionModel::lstm_logits(nn::Tape& tape, nn::Var inputs, int steps, std::array<nn::LstmState, 2>& state,
                                          bool training, nn::Rng& rng) const {
  if (arch_.kind != SelectionKind::LSTM) throw Error("lstm_logits on a non-LSTM model");
  const int batch = tape.value(inputs).rows() / std::max(steps, 1);
  if (!state[0].h.valid()) state = {lstm1_.zero_state(tape, batch), lstm2_.zero_state(tape, batch)};
  nn::Var h = nn::dropout(tape, lstm1_.run(tape, inputs, steps, state[0]), arch_.dropout, training, rng);
  h = nn::dropout(tape, lstm2_.run(tape, h, steps, state[1]), arch_.dropout, training, rng);
  return out_(tape, h);
}

std::unique_ptr<Predictor> NeuralSelectionModel::predictor() const {
  if (arch_.kind == SelectionKind::MLP5) return std::make_unique<MlpPredictor>(*this);
  return std::make_unique<LstmPredictor>(*this);
}

std::vector<std::vector<double>> NeuralSelectionModel::chart_distributions(const ChartSequence& chart) const {
  std::vector<std::vector<double>> out;
  const int width = arch_.input_width();
  const int n = static_cast<int>(chart.tokens.size());
  nn::Rng rng;
  std::vector<nn::Tensor> h, c;
  for (int start = 0; start < n; start += kInferenceBlock) {
    const int len = std::min(kInferenceBlock, n - start);
    nn::Tensor x({len, width});
    for (int i = 0; i < len; ++i) {
      float* row = x.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(width);
      if (arch_.kind == SelectionKind::MLP5) {
        mlp_input(chart, static_cast<std::size_t>(start + i), arch_.features, row);
      } else {
        lstm_input(chart, static_cast<std::size_t>(start + i), arch_.features, row);
      }
    }
    nn::Tape tape;
    nn::Var logits;
    if (arch_.kind == SelectionKind::MLP5) {
      logits = mlp_logits(tape, tape.constant(std::move(x)), false, rng);
    } else {
      std::array<nn::LstmState, 2> state{};
      if (!h.empty()) {
        for (std::size_t l = 0; l < 2; ++l) state[l] = {tape.constant(h[l]), tape.constant(c[l])};
      }
      logits = lstm_logits(tape, tape.constant(std::move(x)), len, state, false, rng);
      h.clear();
      c.clear();
      for (const nn::LstmState& s : state) {
        h.push_back(tape.value(s.h));
        c.push_back(tape.value(s.c));
      }
    }
    for (auto& row : softmax_rows(tape.value(logits))) out.push_back(std::move(row));
  }
  return out;
}

void NeuralSelectionModel::save(const std::filesystem::path& path) const {
  nn::save_checkpoint(path, nn::make_checkpoint(params_, arch_.to_json(), seed_));
}

NeuralSelectionModel NeuralSelectionModel::load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  NeuralSelectionModel model(SelectionArchitecture::from_json(ckpt.architecture), ckpt.seed);
  nn::load_parameters(ckpt, model.params_);
  return model;
}

std::unique_ptr<SelectionModel> load_selection_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string(magic, 4) == "CHKN") return std::make_unique<KnSelectionModel>(KneserNey::load(path));
  if (std::string(magic, 4) == "CHCK") return std::make_unique<NeuralSelectionModel>(NeuralSelectionModel::load(path));
  throw FormatError(path.string() + ": not a selection model file");
}

double mean_cross_entropy(const SelectionModel& model, std::span<const ChartSequence> charts) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const ChartSequence& c : charts) {
    if (c.tokens.empty()) continue;
    total += chart_cross_entropy(model.chart_distributions(c), c);
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted) : 0.0;
}

metrics::SelectionScores evaluate(const SelectionModel& model, std::span<const ChartSequence> charts) {
  metrics::SelectionScores out;
  double ppl = 0.0, acc = 0.0;
  for (const ChartSequence& c : charts) {
    if (c.tokens.empty()) continue;
    std::vector<metrics::SelectionPrediction> preds;
    auto dists = model.chart_distributions(c);
    for (std::size_t i = 0; i < dists.size(); ++i) preds.push_back({std::move(dists[i]), c.tokens[i]});
    const metrics::SelectionScores one = metrics::selection_metrics({preds});
    ppl += one.perplexity;
    acc += one.accuracy;
    ++out.charts;
  }
  if (out.charts > 0) {
    out.perplexity = ppl / static_cast<double>(out.charts);
    out.accuracy = acc / static_cast<double>(out.charts);
  }
  return out;
}

namespace {

struct Position {
  int chart = 0;
  int step = 0;
};

double mlp_step(const NeuralSelectionModel& model, std::span<const ChartSequence> charts, std::span<const Position> batch,
                nn::Rng& rng) {
  const int width = model.architecture().input_width();
  nn::Tensor x({static_cast<int>(batch.size()), width});
  std::vector<int> targets;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const ChartSequence& c = charts[static_cast<std::size_t>(batch[r].chart)];
    mlp_input(c, static_cast<std::size_t>(batch[r].step), model.features(), x.data() + r * static_cast<std::size_t>(width));
    targets.push_back(c.tokens[static_cast<std::size_t>(batch[r].step)]);
  }
  nn::Tape tape;
  const nn::Var loss = nn::softmax_cross_entropy(tape, model.mlp_logits(tape, tape.constant(std::move(x)), true, rng), targets);
  tape.backward(loss);
  return tape.value(loss)[0];
}

struct Chunk {
  int chart = 0;
  int start = 0;
  int length = 0;
};

double lstm_step(const NeuralSelectionModel& model, std::span<const ChartSequence> charts, std::span<const Chunk> batch,
                 nn::Rng& rng) {
  const int width = model.architecture().input_width();
  int steps = 0;
  for (const Chunk& c : batch) steps = std::max(steps, c.length);
  const int b = static_cast<int>(batch.size());
  nn::Tensor x({steps * b, width});
  std::vector<int> targets(static_cast<std::size_t>(steps * b), 0);
  std::vector<float> weights(targets.size(), 0.0f);
  for (int s = 0; s < b; ++s) {
    const Chunk& ch = batch[static_cast<std::size_t>(s)];
    const ChartSequence& c = charts[static_cast<std::size_t>(ch.chart)];
    for (int t = 0; t < ch.length; ++t) {
      const std::size_t row = static_cast<std::size_t>(t * b + s);
      lstm_input(c, static_cast<std::size_t>(ch.start + t), model.features(), x.data() + row * static_cast<std::size_t>(width));
      targets[row] = c.tokens[static_cast<std::size_t>(ch.start + t)];
      weights[row] = 1.0f;
    }
  }
  nn::Tape tape;
  std::array<nn::LstmState, 2> state{};
  const nn::Var logits = model.lstm_logits(tape, tape.constant(std::move(x)), steps, state, true, rng);
  const nn::Var loss = nn::softmax_cross_entropy(tape, logits, targets, weights);
  tape.backward(loss);
  return tape.value(loss)[0];
}

}  // namespace

SelectionTrainResult train(NeuralSelectionModel& model, std::span<const ChartSequence> train_charts,
                           std::span<const ChartSequence> valid_charts, const SelectionTrainConfig& cfg,
                           const std::function<void(const SelectionEpochLog&)>& on_epoch) {
  auto steps_in = [](std::span<const ChartSequence> charts) {
    std::size_t n = 0;
    for (const ChartSequence& c : charts) n += c.tokens.size();
    return n;
  };
  if (steps_in(train_charts) == 0) throw Error("selection training split is empty");
  if (steps_in(valid_charts) == 0) throw Error("selection validation split is empty");
  const nn::SgdConfig sgd{cfg.learning_rate, cfg.clip_norm, cfg.batch_size};
  sgd.validate();
  if (cfg.unroll <= 0 || cfg.max_epochs <= 0 || cfg.patience <= 0) throw Error("unroll, max_epochs and patience must be positive");

  nn::Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 7);
  const bool recurrent = model.kind() == SelectionKind::LSTM;
  std::vector<Position> positions;
  std::vector<Chunk> chunks;
  for (int c = 0; c < static_cast<int>(train_charts.size()); ++c) {
    const int n = static_cast<int>(train_charts[static_cast<std::size_t>(c)].tokens.size());
    if (recurrent) {
      for (int s = 0; s < n; s += cfg.unroll) chunks.push_back({c, s, std::min(cfg.unroll, n - s)});
    } else {
      for (int s = 0; s < n; ++s) positions.push_back({c, s});
    }
  }

  SelectionTrainResult result;
  result.best_valid_cross_entropy = std::numeric_limits<double>::infinity();
  std::vector<nn::Tensor> best = model.parameters().snapshot();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const std::size_t items = recurrent ? chunks.size() : positions.size();
    if (recurrent) {
      rng.shuffle(chunks);
    } else {
      rng.shuffle(positions);
    }
    std::size_t batches = (items + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
    if (cfg.max_batches_per_epoch > 0) batches = std::min(batches, static_cast<std::size_t>(cfg.max_batches_per_epoch));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t len = std::min(static_cast<std::size_t>(cfg.batch_size), items - lo);
      loss_sum += recurrent ? lstm_step(model, train_charts, std::span<const Chunk>(chunks).subspan(lo, len), rng)
                            : mlp_step(model, train_charts, std::span<const Position>(positions).subspan(lo, len), rng);
      auto params = model.parameters().all();
      nn::clip_and_step(params, sgd);
      model.parameters().zero_grad();
    }
    SelectionEpochLog entry{epoch, batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0,
                            mean_cross_entropy(model, valid_charts)};
    result.history.push_back(entry);
    log().info("selection {} epoch {}: train loss {:.5f}, valid cross-entropy {:.5f}", to_string(model.kind()), epoch,
               entry.train_loss, entry.valid_cross_entropy);
    if (on_epoch) on_epoch(entry);
    if (entry.valid_cross_entropy < result.best_valid_cross_entropy) {
      result.best_valid_cross_entropy = entry.valid_cross_entropy;
      result.best_epoch = epoch;
      best = model.parameters().snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model.parameters().restore(best);
  return result;
}

}  // namespace choreo::selection
