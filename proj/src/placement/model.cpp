#include <algorithm>
#include <cctype>
#include <cmath>

#include <json.hpp>

#include "choreo/error.h"
#include "choreo/placement.h"

namespace choreo::placement {

namespace {

constexpr int kConv1Filters = 10;
constexpr int kConv2Filters = 20;
constexpr int kFlatWidth = 1120;
constexpr int kLstmWidth = 200;
constexpr int kFc1Width = 256;
constexpr int kFc2Width = 128;

void audit(const nn::Tape& tape, nn::Var v, const LayerShape& expected) {
  const nn::Shape& got = tape.shape(v);
  const nn::Shape tail(got.begin() + 1, got.end());
  if (tail != expected.shape) {
    throw ShapeError("layer " + expected.name + " produced " + nn::shape_string(got) + ", architecture expects [batch, " +
                     nn::shape_string(expected.shape).substr(1));
  }
}

const LayerShape& entry(const std::vector<LayerShape>& table, const std::string& name) {
  for (const LayerShape& e : table) {
    if (e.name == name) return e;
  }
  throw Error("architecture table has no layer " + name);
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LogReg: return "logreg";
    case ModelKind::MLP: return "mlp";
    case ModelKind::CNN: return "cnn";
    case ModelKind::CLSTM: return "clstm";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (ModelKind k : {ModelKind::LogReg, ModelKind::MLP, ModelKind::CNN, ModelKind::CLSTM}) {
    if (n == to_string(k)) return k;
  }
  if (n == "c-lstm") return ModelKind::CLSTM;
  throw Error("unknown placement model '" + name + "' (expected logreg, mlp, cnn or clstm)");
}

std::string Architecture::to_json() const {
  nlohmann::ordered_json j;
  j["type"] = "placement";
  j["kind"] = placement::to_string(kind);
  j["num_authors"] = num_authors;
  j["dropout"] = dropout;
  return j.dump();
}

Architecture Architecture::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("type", "") != "placement") throw FormatError("not a placement checkpoint");
  Architecture a;
  a.kind = parse_model_kind(j.at("kind").get<std::string>());
  a.num_authors = j.at("num_authors").get<int>();
  a.dropout = j.at("dropout").get<double>();
  if (a.num_authors < 0) throw FormatError("negative author count");
  return a;
}

std::vector<LayerShape> architecture_table(const Architecture& arch) {
  const int cw = arch.condition_width();
  std::vector<LayerShape> t;
  if (arch.kind == ModelKind::LogReg || arch.kind == ModelKind::MLP) {
    t.push_back({"input", {kFeatureValues + cw}});
  } else {
    t.push_back({"window", {kNumChannels, kContextFrames, kNumBands}});
    t.push_back({"conv1", {kConv1Filters, 9, 78}});
    t.push_back({"pool1", {kConv1Filters, 9, 26}});
    t.push_back({"conv2", {kConv2Filters, 7, 24}});
    t.push_back({"pool2", {kConv2Filters, 7, 8}});
    t.push_back({"flatten", {kFlatWidth}});
    t.push_back({"input", {kFlatWidth + cw}});
    if (arch.kind == ModelKind::CLSTM) {
      t.push_back({"lstm1", {kLstmWidth}});
      t.push_back({"lstm2", {kLstmWidth}});
    }
  }
  if (arch.kind != ModelKind::LogReg) {
    t.push_back({"fc1", {kFc1Width}});
    t.push_back({"fc2", {kFc2Width}});
  }
  t.push_back({"output", {1}});
  return t;
}

void encode_window(const MelSpectrogram& spectrogram, int t, float* out) {
  for (int c = 0; c < kNumChannels; ++c) {
    for (int k = 0; k < kContextFrames; ++k) {
      float* row = out + (static_cast<std::size_t>(c) * kContextFrames + k) * kNumBands;
      const int src = t - kContextRadius + k;
      if (src < 0 || src >= spectrogram.frames) {
        std::fill(row, row + kNumBands, 0.0f);
        continue;
      }
      const float* frame = spectrogram.data.data() + static_cast<std::size_t>(src) * kFrameValues;
      for (int b = 0; b < kNumBands; ++b) row[b] = frame[b * kNumChannels + c];
    }
  }
}

Model::Model(Architecture arch, std::uint64_t seed) : arch_(arch) {
  if (arch_.dropout < 0.0 || arch_.dropout >= 1.0) throw Error("dropout must lie in [0, 1)");
  nn::Rng rng(seed);
  const int cw = arch_.condition_width();
  int head_in = kFeatureValues + cw;
  if (arch_.kind == ModelKind::CNN || arch_.kind == ModelKind::CLSTM) {
    conv1_ = nn::Conv2d(params_, "conv1", kNumChannels, kConv1Filters, 7, 3, rng);
    conv2_ = nn::Conv2d(params_, "conv2", kConv1Filters, kConv2Filters, 3, 3, rng);
    head_in = kFlatWidth + cw;
  }
  if (arch_.kind == ModelKind::CLSTM) {
    lstm1_ = nn::Lstm(params_, "lstm1", head_in, kLstmWidth, rng);
    lstm2_ = nn::Lstm(params_, "lstm2", kLstmWidth, kLstmWidth, rng);
    head_in = kLstmWidth;
  }
  if (arch_.kind != ModelKind::LogReg) {
    fc1_ = nn::Dense(params_, "fc1", head_in, kFc1Width, rng);
    fc2_ = nn::Dense(params_, "fc2", kFc1Width, kFc2Width, rng);
    head_in = kFc2Width;
  }
  out_ = nn::Dense(params_, "output", head_in, 1, rng);
}

nn::Var Model::conv_features(nn::Tape& tape, const nn::Tensor& windows) const {
  const auto table = architecture_table(arch_);
  const int n = windows.dim(0);
  nn::Var x = tape.constant(windows);
  audit(tape, x, entry(table, "window"));
  x = conv1_(tape, x);
  audit(tape, x, entry(table, "conv1"));
  x = nn::maxpool_freq(tape, nn::relu(tape, x));
  audit(tape, x, entry(table, "pool1"));
  x = conv2_(tape, x);
  audit(tape, x, entry(table, "conv2"));
  x = nn::maxpool_freq(tape, nn::relu(tape, x));
  audit(tape, x, entry(table, "pool2"));
  x = nn::reshape(tape, x, {n, kFlatWidth});
  audit(tape, x, entry(table, "flatten"));
  return x;
}

nn::Tensor Model::condition_matrix(const std::vector<Condition>& conditions, const std::vector<int>& order) const {
  const int cw = arch_.condition_width();
  nn::Tensor m({static_cast<int>(order.size()), cw});
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Condition& c = conditions[static_cast<std::size_t>(order[r])];
    if (c.difficulty < 0 || c.difficulty >= kNumDifficulties) throw Error("difficulty class out of range");
    m.at(static_cast<int>(r), c.difficulty) = 1.0f;
    if (c.author >= 0 && c.author < arch_.num_authors) m.at(static_cast<int>(r), kNumDifficulties + c.author) = 1.0f;
  }
  return m;
}

nn::Var Model::head(nn::Tape& tape, nn::Var x, bool training, nn::Rng& rng) const {
  const auto table = architecture_table(arch_);
  if (arch_.kind != ModelKind::LogReg) {
    x = nn::dropout(tape, nn::relu(tape, fc1_(tape, x)), arch_.dropout, training, rng);
    audit(tape, x, entry(table, "fc1"));
    x = nn::dropout(tape, nn::relu(tape, fc2_(tape, x)), arch_.dropout, training, rng);
    audit(tape, x, entry(table, "fc2"));
  }
  x = out_(tape, x);
  audit(tape, x, entry(table, "output"));
  return x;
}

nn::Var Model::frame_logits(nn::Tape& tape, const nn::Tensor& windows, const std::vector<int>& window_of,
                            const std::vector<Condition>& conditions, bool training, nn::Rng& rng) const {
  if (arch_.kind == ModelKind::CLSTM) throw Error("frame_logits is for framewise models; use sequence_logits");
  if (window_of.size() != conditions.size()) throw ShapeError("one condition per row required");
  const int n = windows.dim(0);
  nn::Var features;
  if (arch_.kind == ModelKind::CNN) {
    features = conv_features(tape, windows);
  } else {
    nn::Tensor flat = windows;
    flat.reshape({n, kFeatureValues});
    features = tape.constant(std::move(flat));
  }
  std::vector<int> identity(conditions.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = static_cast<int>(i);
  nn::Var x = nn::concat_cols(tape, std::vector<nn::Var>{nn::gather_rows(tape, features, window_of),
                                                         tape.constant(condition_matrix(conditions, identity))});
  audit(tape, x, entry(architecture_table(arch_), "input"));
  return head(tape, x, training, rng);
}

nn::Var Model::sequence_logits(nn::Tape& tape, const nn::Tensor& windows, int steps, const std::vector<int>& chunk_of,
                               const std::vector<Condition>& conditions, RecurrentState& state, bool training,
                               nn::Rng& rng) const {
  if (arch_.kind != ModelKind::CLSTM) throw Error("sequence_logits needs a CLSTM model");
  if (chunk_of.size() != conditions.size()) throw ShapeError("one condition per sequence required");
  if (steps <= 0 || windows.dim(0) % steps != 0) throw ShapeError("window count is not a multiple of the unroll length");
  const auto table = architecture_table(arch_);
  const int seqs = static_cast<int>(chunk_of.size());
  const nn::Var features = conv_features(tape, windows);

  std::vector<int> rows, cond_rows;
  rows.reserve(static_cast<std::size_t>(steps * seqs));
  for (int t = 0; t < steps; ++t) {
    for (int s = 0; s < seqs; ++s) {
      rows.push_back(chunk_of[static_cast<std::size_t>(s)] * steps + t);
      cond_rows.push_back(s);
    }
  }
  nn::Var x = nn::concat_cols(tape, std::vector<nn::Var>{nn::gather_rows(tape, features, rows),
                                                         tape.constant(condition_matrix(conditions, cond_rows))});
  audit(tape, x, entry(table, "input"));

  const nn::Lstm* layers[] = {&lstm1_, &lstm2_};
  const bool fresh = state.empty();
  RecurrentState next;
  for (int l = 0; l < 2; ++l) {
    nn::LstmState s;
    if (fresh) {
      s = layers[l]->zero_state(tape, seqs);
    } else {
      if (state.h.size() != 2 || state.h[static_cast<std::size_t>(l)].shape() != nn::Shape{seqs, kLstmWidth}) {
        throw ShapeError("recurrent state does not match " + std::to_string(seqs) + " sequences");
      }
      s = {tape.constant(state.h[static_cast<std::size_t>(l)]), tape.constant(state.c[static_cast<std::size_t>(l)])};
    }
    x = layers[l]->run(tape, x, steps, s);
    audit(tape, x, entry(table, l == 0 ? "lstm1" : "lstm2"));
    x = nn::dropout(tape, x, arch_.dropout, training, rng);
    next.h.push_back(tape.value(s.h));
    next.c.push_back(tape.value(s.c));
  }
  state = std::move(next);
  return head(tape, x, training, rng);
}

std::vector<std::vector<float>> predict_song(const Model& model, const MelSpectrogram& features,
                                             const std::vector<Condition>& conditions) {
  const int frames = features.frames;
  const int k = static_cast<int>(conditions.size());
  std::vector<std::vector<float>> out(conditions.size(), std::vector<float>(static_cast<std::size_t>(frames)));
  nn::Rng unused(0);
  const bool recurrent = model.architecture().kind == ModelKind::CLSTM;
  const int block = recurrent ? kUnroll : 128;
  RecurrentState state;
  for (int start = 0; start < frames; start += block) {
    const int n = std::min(block, frames - start);
    nn::Tensor windows({n, kNumChannels, kContextFrames, kNumBands});
    for (int i = 0; i < n; ++i) encode_window(features, start + i, windows.data() + static_cast<std::size_t>(i) * kFeatureValues);
    nn::Tape tape(false);
    if (recurrent) {
      const std::vector<int> chunk_of(conditions.size(), 0);
      const auto& logits = tape.value(model.sequence_logits(tape, windows, n, chunk_of, conditions, state, false, unused));
      for (int t = 0; t < n; ++t)
        for (int s = 0; s < k; ++s)
          out[static_cast<std::size_t>(s)][static_cast<std::size_t>(start + t)] =
              static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logits[static_cast<std::size_t>(t * k + s)]))));
    } else {
      std::vector<int> window_of;
      std::vector<Condition> conds;
      for (int s = 0; s < k; ++s)
        for (int i = 0; i < n; ++i) {
          window_of.push_back(i);
          conds.push_back(conditions[static_cast<std::size_t>(s)]);
        }
      const auto& logits = tape.value(model.frame_logits(tape, windows, window_of, conds, false, unused));
      for (int s = 0; s < k; ++s)
        for (int i = 0; i < n; ++i)
          out[static_cast<std::size_t>(s)][static_cast<std::size_t>(start + i)] =
              static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logits[static_cast<std::size_t>(s * n + i)]))));
    }
  }
  return out;
}

void save(const std::filesystem::path& path, const Model& model, const NormalizationStats& stats, std::uint64_t seed) {
  nn::save_checkpoint(path, nn::make_checkpoint(model.parameters(), model.architecture().to_json(), seed, stats));
}

Trained load(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (!ckpt.normalization) throw FormatError(path.string() + ": placement checkpoint lacks normalization statistics");
  Trained trained{Model(Architecture::from_json(ckpt.architecture)), *ckpt.normalization, ckpt.seed};
  nn::load_parameters(ckpt, trained.model.parameters());
  return trained;
}

std::vector<float> predict_probs(const Trained& trained, const MelSpectrogram& features, Condition condition) {
  if (features.stats_hash != trained.normalization.hash()) {
    throw Error("features were not normalized with this checkpoint's statistics");
  }
  return predict_song(trained.model, features, {condition}).front();
}

}  // namespace choreo::placement
