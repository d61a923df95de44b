#include <algorithm>
#include <cctype>
#include <cmath>

#include "choreo/error.h"
#include "choreo/selection.h"

namespace choreo::selection {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

int beat_phase_index(double beat) {
  const double frac = beat - std::floor(beat);
  return static_cast<int>(std::floor(4.0 * frac + 0.5)) % kNumPhases;
}

std::array<float, kNumPhases> beat_phase(double beat) {
  std::array<float, kNumPhases> out{};
  out[static_cast<std::size_t>(beat_phase_index(beat))] = 1.0f;
  return out;
}

RhythmFeatures rhythm_features(std::span<const TimedStep> steps, std::size_t i) {
  if (i >= steps.size()) throw Error("rhythm_features: step index out of range");
  RhythmFeatures r;
  r.phase = beat_phase(std::max(0.0, steps[i].beat));
  if (steps.size() == 1) return r;
  auto dt = [](double v) { return std::clamp(v, 0.0, kMaxDeltaSeconds); };
  auto db = [](double v) { return std::clamp(v, 0.0, kMaxDeltaBeats); };
  if (i > 0) {
    r.dt_prev = dt(steps[i].time - steps[i - 1].time);
    r.db_prev = db(steps[i].beat - steps[i - 1].beat);
  }
  if (i + 1 < steps.size()) {
    r.dt_next = dt(steps[i + 1].time - steps[i].time);
    r.db_next = db(steps[i + 1].beat - steps[i].beat);
  }
  if (i == 0) {
    r.dt_prev = r.dt_next;
    r.db_prev = r.db_next;
  } else if (i + 1 == steps.size()) {
    r.dt_next = r.dt_prev;
    r.db_next = r.db_prev;
  }
  return r;
}

std::array<float, kBagWidth> bag_of_arrows(int token) {
  std::array<float, kBagWidth> out{};
  if (token == kStartToken) {
    out[kBagWidth - 1] = 1.0f;
    return out;
  }
  if (token < 0 || token >= kNumCombos) throw Error("bag_of_arrows: token " + std::to_string(token) + " out of range");
  const StepCombo combo = StepCombo::from_index(token);
  for (int a = 0; a < kNumArrows; ++a) {
    out[static_cast<std::size_t>(a * 4 + static_cast<int>(combo.arrows[static_cast<std::size_t>(a)]))] = 1.0f;
  }
  return out;
}

std::string FeatureSet::to_string() const {
  if (delta_time && delta_beat) return "time+beat";
  if (delta_time) return "time";
  if (delta_beat) return "beat";
  return "none";
}

FeatureSet FeatureSet::parse(const std::string& text) {
  const std::string t = lower(text);
  if (t == "none" || t.empty()) return {};
  if (t == "time") return {true, false};
  if (t == "beat") return {false, true};
  if (t == "time+beat" || t == "beat+time") return {true, true};
  throw Error("unknown selection feature set '" + text + "' (expected none, time, beat or time+beat)");
}

void encode_rhythm(const RhythmFeatures& rhythm, FeatureSet features, float* out) {
  if (features.delta_time) {
    *out++ = static_cast<float>(rhythm.dt_prev);
    *out++ = static_cast<float>(rhythm.dt_next);
  }
  if (features.delta_beat) {
    *out++ = static_cast<float>(rhythm.db_prev);
    *out++ = static_cast<float>(rhythm.db_next);
    for (float p : rhythm.phase) *out++ = p;
  }
}

std::optional<ChartSequence> make_sequence(std::string name, const Chart& chart) {
  if (chart.steps.empty()) return std::nullopt;
  ChartSequence seq;
  seq.name = std::move(name);
  for (std::size_t i = 0; i < chart.steps.size(); ++i) {
    seq.tokens.push_back(chart.steps[i].combo.index());
    seq.rhythm.push_back(rhythm_features(chart.steps, i));
  }
  return seq;
}

void lstm_input(const ChartSequence& chart, std::size_t i, FeatureSet features, float* out) {
  const auto bag = bag_of_arrows(i == 0 ? kStartToken : chart.tokens[i - 1]);
  std::copy(bag.begin(), bag.end(), out);
  encode_rhythm(chart.rhythm[i], features, out + kBagWidth);
}

void mlp_input(const ChartSequence& chart, std::size_t i, FeatureSet features, float* out) {
  const int slot_width = kBagWidth + features.width();
  std::fill(out, out + kMlpWindow * slot_width, 0.0f);
  for (int j = 1; j <= kMlpWindow; ++j) {
    float* slot = out + (j - 1) * slot_width;
    const long token_at = static_cast<long>(i) - j;
    if (token_at < -1) break;
    const auto bag = bag_of_arrows(token_at == -1 ? kStartToken : chart.tokens[static_cast<std::size_t>(token_at)]);
    std::copy(bag.begin(), bag.end(), slot);
    encode_rhythm(chart.rhythm[static_cast<std::size_t>(token_at + 1)], features, slot + kBagWidth);
  }
}

std::array<bool, kNumCombos> valid_tokens(const std::array<bool, kNumArrows>& held) {
  std::array<bool, kNumCombos> out{};
  for (int t = 1; t < kNumCombos; ++t) {
    const StepCombo c = StepCombo::from_index(t);
    bool ok = true;
    for (int a = 0; a < kNumArrows && ok; ++a) {
      const ArrowState s = c.arrows[static_cast<std::size_t>(a)];
      const bool h = held[static_cast<std::size_t>(a)];
      if (h && (s == ArrowState::Tap || s == ArrowState::HoldStart)) ok = false;
      if (!h && s == ArrowState::HoldEnd) ok = false;
    }
    out[static_cast<std::size_t>(t)] = ok;
  }
  return out;
}

std::string to_string(SelectionKind kind) {
  switch (kind) {
    case SelectionKind::KN5: return "kn5";
    case SelectionKind::MLP5: return "mlp5";
    case SelectionKind::LSTM: return "lstm";
  }
  return "?";
}

SelectionKind parse_selection_kind(const std::string& name) {
  const std::string n = lower(name);
  if (n == "kn5") return SelectionKind::KN5;
  if (n == "mlp5") return SelectionKind::MLP5;
  if (n == "lstm") return SelectionKind::LSTM;
  throw Error("unknown selection model '" + name + "' (expected kn5, mlp5 or lstm)");
}

}  // namespace choreo::selection
