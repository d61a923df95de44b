#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "charts.h"
#include "choreo/error.h"
#include "choreo/nn/rng.h"
#include "choreo/selection.h"
#include "oracles.h"

using namespace choreo;
using namespace choreo::selection;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("choreo_selection_" + name);
}

std::vector<TimedStep> steps_at(const std::vector<double>& beats, double bpm) {
  std::vector<TimedStep> out;
  for (double b : beats) out.push_back({b, b * 60.0 / bpm, StepCombo::from_string("1000")});
  return out;
}

/// Every context of length 0..max_len over tokens [0, vocab), optionally opening with START.
std::vector<std::vector<int>> all_contexts(int vocab, int max_len) {
  std::vector<std::vector<int>> out{{}};
  std::vector<std::vector<int>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& c : frontier) {
      for (int v = 0; v < vocab; ++v) {
        auto e = c;
        e.push_back(v);
        next.push_back(e);
      }
    }
    for (const auto& c : next) out.push_back(c);
    frontier = next;
  }
  const std::size_t plain = out.size();
  for (std::size_t i = 0; i < plain; ++i) {
    if (static_cast<int>(out[i].size()) >= max_len) continue;
    std::vector<int> s{vocab};
    s.insert(s.end(), out[i].begin(), out[i].end());
    out.push_back(s);
  }
  return out;
}

std::vector<std::vector<int>> random_corpus(nn::Rng& rng, int vocab, int sequences, int length) {
  std::vector<std::vector<int>> out;
  for (int s = 0; s < sequences; ++s) {
    std::vector<int> seq{vocab};
    for (int i = 0; i < length; ++i) seq.push_back(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(vocab))));
    out.push_back(seq);
  }
  return out;
}

void check_against_oracle(const std::vector<std::vector<int>>& corpus, int vocab) {
  const KneserNey lm = KneserNey::train(corpus, vocab, 5);
  const testing::KnOracle oracle(corpus, vocab, 5);
  for (const auto& ctx : all_contexts(vocab, 4)) {
    double total = 0.0;
    for (int w = 0; w < vocab; ++w) {
      const double p = lm.prob(ctx, w);
      CHECK(p == doctest::Approx(oracle.prob(ctx, w)).epsilon(1e-9));
      CHECK(p > 0.0);
      total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

}  // namespace

TEST_SUITE("selection") {

TEST_CASE("beat phase") {
  CHECK(beat_phase_index(3.0) == 0);
  CHECK(beat_phase_index(3.25) == 1);
  CHECK(beat_phase_index(3.5) == 2);
  CHECK(beat_phase_index(3.75) == 3);
  CHECK(beat_phase_index(3.13) == 1);
  CHECK(beat_phase_index(3.9) == 0);
  CHECK(beat_phase(3.25) == std::array<float, 4>{0, 1, 0, 0});
}

TEST_CASE("rhythm features") {
  const auto steps = steps_at({4.0, 4.5}, 120.0);
  const RhythmFeatures second = rhythm_features(steps, 1);
  CHECK(second.db_prev == doctest::Approx(0.5));
  CHECK(second.dt_prev == doctest::Approx(0.25));
  CHECK(second.db_next == doctest::Approx(0.5));
  const RhythmFeatures first = rhythm_features(steps, 0);
  CHECK(first.db_prev == doctest::Approx(0.5));
  CHECK(first.db_next == doctest::Approx(0.5));
  CHECK(first.dt_prev == doctest::Approx(0.25));

  const auto lone = steps_at({7.0}, 120.0);
  const RhythmFeatures r = rhythm_features(lone, 0);
  CHECK(r.dt_prev == 0.0);
  CHECK(r.dt_next == 0.0);
  CHECK(r.db_prev == 0.0);
  CHECK(r.db_next == 0.0);
  CHECK_THROWS_AS(rhythm_features(lone, 1), Error);

  const auto far = steps_at({0.0, 400.0}, 120.0);
  CHECK(rhythm_features(far, 1).db_prev == kMaxDeltaBeats);
  CHECK(rhythm_features(far, 1).dt_prev == kMaxDeltaSeconds);
}

TEST_CASE("rhythm is unchanged by mirroring") {
  nn::Rng rng(11);
  const Simfile sm = testing::random_simfile(rng, 3, 5);
  for (const Chart& chart : sm.charts) {
    if (chart.steps.empty()) continue;
    const Chart m = mirror_chart(chart, MirrorAxis::LeftRight);
    const auto a = make_sequence("a", chart);
    const auto b = make_sequence("b", m);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    for (std::size_t i = 0; i < a->rhythm.size(); ++i) {
      CHECK(a->rhythm[i].dt_prev == b->rhythm[i].dt_prev);
      CHECK(a->rhythm[i].db_next == b->rhythm[i].db_next);
      CHECK(a->rhythm[i].phase == b->rhythm[i].phase);
    }
  }
}

TEST_CASE("bag of arrows") {
  const auto bag = bag_of_arrows(StepCombo::from_string("1002").index());
  std::array<float, kBagWidth> expected{};
  expected[0 * 4 + 1] = 1;
  expected[1 * 4 + 0] = 1;
  expected[2 * 4 + 0] = 1;
  expected[3 * 4 + 2] = 1;
  CHECK(bag == expected);
  const auto start = bag_of_arrows(kStartToken);
  for (int k = 0; k < kBagWidth - 1; ++k) CHECK(start[static_cast<std::size_t>(k)] == 0.0f);
  CHECK(start[kBagWidth - 1] == 1.0f);
  CHECK_THROWS_AS(bag_of_arrows(-1), Error);
}

TEST_CASE("feature sets and input widths") {
  CHECK(FeatureSet::parse("time+beat") == FeatureSet{true, true});
  CHECK(FeatureSet::parse("beat").width() == 6);
  CHECK(FeatureSet::parse("time").width() == 2);
  CHECK(FeatureSet::parse("beat+time").to_string() == "time+beat");
  CHECK_THROWS_AS(FeatureSet::parse("tempo"), Error);
  CHECK(SelectionArchitecture{SelectionKind::MLP5, {}, 0.5}.input_width() == 68);
  CHECK(SelectionArchitecture{SelectionKind::LSTM, {false, true}, 0.5}.input_width() == 23);
  CHECK(parse_selection_kind("LSTM") == SelectionKind::LSTM);
  CHECK(parse_selection_kind("kn5") == SelectionKind::KN5);
  CHECK_THROWS_AS(parse_selection_kind("gru"), Error);
}

TEST_CASE("MLP input slots") {
  auto seqs = testing::toy_sequences(true, 1, 6, 3);
  const ChartSequence& c = seqs[0];
  const FeatureSet f{false, true};
  const int slot = kBagWidth + f.width();
  std::vector<float> row(static_cast<std::size_t>(kMlpWindow * slot));
  mlp_input(c, 0, f, row.data());
  CHECK(row[kBagWidth - 1] == 1.0f);
  for (int k = slot; k < kMlpWindow * slot; ++k) CHECK(row[static_cast<std::size_t>(k)] == 0.0f);
  mlp_input(c, 5, f, row.data());
  const auto bag = bag_of_arrows(c.tokens[4]);
  for (int k = 0; k < kBagWidth; ++k) CHECK(row[static_cast<std::size_t>(k)] == bag[static_cast<std::size_t>(k)]);
  CHECK(row[kBagWidth] == static_cast<float>(c.rhythm[5].db_prev));
}

TEST_CASE("KN matches the brute-force oracle") {
  nn::Rng rng(21);
  check_against_oracle(random_corpus(rng, 2, 1, 20), 2);
  for (int trial = 0; trial < 4; ++trial) {
    const int vocab = 2 + static_cast<int>(rng.uniform_index(2));
    check_against_oracle(random_corpus(rng, vocab, 1 + static_cast<int>(rng.uniform_index(3)), 12), vocab);
  }
}

TEST_CASE("KN distributions are proper") {
  nn::Rng rng(22);
  const auto corpus = random_corpus(rng, 256, 6, 50);
  const KneserNey lm = KneserNey::train(corpus, 256, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ctx;
    const auto& s = corpus[rng.uniform_index(corpus.size())];
    const std::size_t end = 1 + rng.uniform_index(s.size() - 1);
    ctx.assign(s.begin() + static_cast<long>(end > 6 ? end - 6 : 0), s.begin() + static_cast<long>(end));
    const auto d = lm.distribution(ctx);
    double total = 0.0;
    for (double p : d) {
      CHECK(p > 0.0);
      total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(KneserNey::train({}, 4, 5), Error);
}

TEST_CASE("KN save and load") {
  nn::Rng rng(23);
  const auto corpus = random_corpus(rng, 5, 3, 30);
  const KneserNey lm = KneserNey::train(corpus, 5, 5);
  const auto path = temp_path("kn.bin");
  lm.save(path);
  const KneserNey back = KneserNey::load(path);
  const auto loaded = load_selection_model(path);
  CHECK(loaded->kind() == SelectionKind::KN5);
  for (const auto& ctx : all_contexts(5, 2)) {
    for (int w = 0; w < 5; ++w) CHECK(back.prob(ctx, w) == lm.prob(ctx, w));
  }
  std::filesystem::remove(path);
}

TEST_CASE("untrained neural models are near uniform") {
  const auto charts = testing::toy_sequences(false, 2, 40, 4);
  for (SelectionKind kind : {SelectionKind::MLP5, SelectionKind::LSTM}) {
    NeuralSelectionModel model({kind, {true, true}, 0.5}, 7);
    const auto scores = evaluate(model, charts);
    CHECK(scores.perplexity > 200.0);
    CHECK(scores.perplexity < 320.0);
  }
}

TEST_CASE("validity mask") {
  std::array<bool, kNumArrows> held{};
  auto valid = valid_tokens(held);
  CHECK_FALSE(valid[0]);
  CHECK_FALSE(valid[static_cast<std::size_t>(StepCombo::from_string("3000").index())]);
  CHECK(valid[static_cast<std::size_t>(StepCombo::from_string("2001").index())]);
  held[0] = true;
  valid = valid_tokens(held);
  CHECK(valid[static_cast<std::size_t>(StepCombo::from_string("3000").index())]);
  CHECK_FALSE(valid[static_cast<std::size_t>(StepCombo::from_string("1000").index())]);
  CHECK_FALSE(valid[static_cast<std::size_t>(StepCombo::from_string("2000").index())]);
  CHECK(valid[static_cast<std::size_t>(StepCombo::from_string("0100").index())]);
}

TEST_CASE("generation is seeded and respects holds") {
  nn::Rng corpus_rng(31);
  const Simfile sm = testing::random_simfile(corpus_rng, 3, 8);
  std::vector<ChartSequence> charts;
  for (const Chart& c : sm.charts) {
    if (auto s = make_sequence("c", c)) charts.push_back(*s);
  }
  REQUIRE_FALSE(charts.empty());
  const KnSelectionModel kn = KnSelectionModel::train(charts);
  NeuralSelectionModel lstm({SelectionKind::LSTM, {true, true}, 0.5}, 3);
  std::vector<double> times, beats;
  for (int i = 0; i < 300; ++i) {
    beats.push_back(i * 0.5);
    times.push_back(i * 0.25);
  }
  for (const SelectionModel* model : {static_cast<const SelectionModel*>(&kn), static_cast<const SelectionModel*>(&lstm)}) {
    nn::Rng a(5), b(5);
    const auto first = generate(*model, times, std::span<const double>(beats), a);
    const auto second = generate(*model, times, std::span<const double>(beats), b);
    CHECK(first == second);
    std::vector<TimedStep> steps;
    for (std::size_t i = 0; i < first.size(); ++i) {
      CHECK_FALSE(first[i].empty());
      steps.push_back({beats[i], times[i], first[i]});
    }
    CHECK_FALSE(find_hold_violation(steps).has_value());
  }
  nn::Rng c(5);
  CHECK_THROWS_AS(generate(lstm, times, std::nullopt, c), Error);
  GenerateOptions cold;
  cold.temperature = 0.0;
  CHECK_THROWS_AS(generate(kn, times, std::span<const double>(beats), c, cold), Error);
}

TEST_CASE("neural checkpoint round trip") {
  const auto charts = testing::toy_sequences(true, 2, 20, 5);
  for (SelectionKind kind : {SelectionKind::MLP5, SelectionKind::LSTM}) {
    NeuralSelectionModel model({kind, {false, true}, 0.3}, 9);
    const auto path = temp_path(to_string(kind) + ".ckpt");
    model.save(path);
    const auto loaded = load_selection_model(path);
    CHECK(loaded->kind() == kind);
    CHECK(loaded->features() == model.features());
    CHECK(loaded->chart_distributions(charts[0]) == model.chart_distributions(charts[0]));
    std::filesystem::remove(path);
  }
}

TEST_CASE("the LSTM learns a deterministic corpus") {
  const auto train_charts = testing::toy_sequences(false, 8, 32, 6);
  const auto valid_charts = testing::toy_sequences(false, 2, 32, 7);
  NeuralSelectionModel model({SelectionKind::LSTM, {}, 0.0}, 1);
  SelectionTrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.unroll = 16;
  cfg.batch_size = 16;
  cfg.max_epochs = 15;
  const auto result = train(model, train_charts, valid_charts, cfg);
  CHECK(result.history.front().train_loss > result.history.back().train_loss);
  const auto scores = evaluate(model, valid_charts);
  CHECK(scores.accuracy == 1.0);
  CHECK(scores.perplexity < 1.5);
}

}
