#include "choreo/simfile.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "choreo/error.h"
#include "choreo/log.h"

namespace choreo {

namespace {

constexpr int kTicksPerBeat = kMaxRowsPerMeasure / kBeatsPerMeasure;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<int> to_int(std::string_view s) {
  s = trim(s);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

double tick_to_beat(long long tick) { return static_cast<double>(tick) / kTicksPerBeat; }

/// Maps byte offsets of the source text to 1-based line numbers.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text) {
    starts_.push_back(0);
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] == '\n') starts_.push_back(i + 1);
    }
  }

  std::size_t line_of(std::size_t offset) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), offset);
    return static_cast<std::size_t>(it - starts_.begin());
  }

 private:
  std::vector<std::size_t> starts_;
};

struct Tag {
  std::string key;
  std::string_view value;
  std::size_t value_offset = 0;
  std::size_t line = 0;
};

/// Blanks `//` comments while keeping every newline so offsets stay valid.
std::string strip_comments(std::string_view text) {
  std::string out(text);
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    if (out[i] == '/' && out[i + 1] == '/') {
      while (i < out.size() && out[i] != '\n') out[i++] = ' ';
    }
  }
  return out;
}

std::vector<Tag> split_tags(std::string_view text, const LineIndex& lines) {
  std::vector<Tag> tags;
  std::size_t pos = 0;
  while ((pos = text.find('#', pos)) != std::string_view::npos) {
    const std::size_t line = lines.line_of(pos);
    const std::size_t colon = text.find(':', pos);
    const std::size_t semi = text.find(';', pos);
    if (colon == std::string_view::npos || (semi != std::string_view::npos && semi < colon)) {
      throw ParseError(line, "malformed tag: missing ':'");
    }
    if (semi == std::string_view::npos) {
      throw ParseError(line, "malformed tag: missing terminating ';'");
    }
    Tag tag;
    tag.key = upper(trim(text.substr(pos + 1, colon - pos - 1)));
    tag.value = text.substr(colon + 1, semi - colon - 1);
    tag.value_offset = colon + 1;
    tag.line = line;
    tags.push_back(std::move(tag));
    pos = semi + 1;
  }
  return tags;
}

std::vector<TempoChange> parse_bpms(const Tag& tag) {
  std::vector<TempoChange> map;
  std::string_view rest = tag.value;
  while (!trim(rest).empty()) {
    const std::size_t comma = rest.find(',');
    std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (trim(item).empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) throw ParseError(tag.line, "malformed BPMS entry '" + std::string(trim(item)) + "'");
    auto beat = to_double(item.substr(0, eq));
    auto bpm = to_double(item.substr(eq + 1));
    if (!beat || !bpm) throw ParseError(tag.line, "malformed BPMS entry '" + std::string(trim(item)) + "'");
    if (*bpm <= 0.0) throw ParseError(tag.line, "non-positive BPM " + format_number(*bpm));
    map.push_back({*beat, *bpm});
  }
  if (map.empty()) throw ParseError(tag.line, "empty BPMS");
  try {
    validate_tempo_map(map);
  } catch (const Error& e) {
    throw ParseError(tag.line, e.what());
  }
  return map;
}

std::vector<std::string_view> split_fields(std::string_view value, std::vector<std::size_t>& offsets) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t colon = value.find(':', start);
    fields.push_back(value.substr(start, colon == std::string_view::npos ? value.npos : colon - start));
    offsets.push_back(start);
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  return fields;
}

/// Decodes note data into steps (times left at zero) and enforces hold validity.
std::vector<TimedStep> parse_note_data(std::string_view data, std::size_t base_offset, const LineIndex& lines) {
  struct Row {
    StepCombo combo;
    std::size_t line;
  };
  std::vector<TimedStep> steps;
  std::vector<Row> measure;
  std::array<bool, kNumArrows> held{};
  long long measure_index = 0;
  std::size_t measure_line = lines.line_of(base_offset);

  auto flush_measure = [&](bool last) {
    if (measure.empty() && last) return;
    const int rows = static_cast<int>(measure.size());
    if (std::find(kMeasureRowCounts.begin(), kMeasureRowCounts.end(), rows) == kMeasureRowCounts.end()) {
      throw ParseError(measure_line, "measure " + std::to_string(measure_index) + " has " + std::to_string(rows) +
                                         " rows; expected one of 4/8/12/16/24/32/48/64/96/192");
    }
    const int ticks_per_row = kMaxRowsPerMeasure / rows;
    for (int r = 0; r < rows; ++r) {
      const Row& row = measure[static_cast<std::size_t>(r)];
      for (int a = 0; a < kNumArrows; ++a) {
        const ArrowState s = row.combo.arrows[static_cast<std::size_t>(a)];
        bool& h = held[static_cast<std::size_t>(a)];
        if ((s == ArrowState::Tap || s == ArrowState::HoldStart) && h) {
          throw ParseError(row.line, "hold-state violation: arrow " + std::to_string(a) + " is held");
        }
        if (s == ArrowState::HoldEnd && !h) {
          throw ParseError(row.line, "hold-state violation: release of arrow " + std::to_string(a) + " that is not held");
        }
        if (s == ArrowState::HoldStart) h = true;
        if (s == ArrowState::HoldEnd) h = false;
      }
      if (row.combo.empty()) continue;
      const long long tick = measure_index * kMaxRowsPerMeasure + static_cast<long long>(r) * ticks_per_row;
      steps.push_back({tick_to_beat(tick), 0.0, row.combo});
    }
    measure.clear();
    ++measure_index;
  };

  std::size_t i = 0;
  bool measure_started = false;
  while (i < data.size()) {
    const char c = data[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == ',') {
      if (!measure_started) measure_line = lines.line_of(base_offset + i);
      flush_measure(false);
      measure_started = false;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < data.size() && !std::isspace(static_cast<unsigned char>(data[j])) && data[j] != ',') ++j;
    const std::string_view token = data.substr(i, j - i);
    const std::size_t line = lines.line_of(base_offset + i);
    if (!measure_started) {
      measure_line = line;
      measure_started = true;
    }
    for (char d : token) {
      if (d < '0' || d > '3') {
        throw ParseError(line, std::string("unknown step character '") + d + "'");
      }
    }
    if (token.size() != kNumArrows) {
      throw ParseError(line, "row '" + std::string(token) + "' does not have 4 columns");
    }
    measure.push_back({StepCombo::from_string(token), line});
    i = j;
  }
  flush_measure(true);
  return steps;
}

}  // namespace

int StepCombo::index() const {
  int idx = 0;
  for (ArrowState s : arrows) idx = idx * 4 + static_cast<int>(s);
  return idx;
}

StepCombo StepCombo::from_index(int index) {
  StepCombo combo;
  for (int a = kNumArrows - 1; a >= 0; --a) {
    combo.arrows[static_cast<std::size_t>(a)] = static_cast<ArrowState>(index % 4);
    index /= 4;
  }
  return combo;
}

std::string StepCombo::to_string() const {
  std::string s(kNumArrows, '0');
  for (int a = 0; a < kNumArrows; ++a) s[static_cast<std::size_t>(a)] = static_cast<char>('0' + static_cast<int>(arrows[static_cast<std::size_t>(a)]));
  return s;
}

StepCombo StepCombo::from_string(std::string_view digits) {
  if (digits.size() != kNumArrows) throw Error("step combo needs 4 digits, got '" + std::string(digits) + "'");
  StepCombo combo;
  for (int a = 0; a < kNumArrows; ++a) {
    const char d = digits[static_cast<std::size_t>(a)];
    if (d < '0' || d > '3') throw Error(std::string("unknown step character '") + d + "'");
    combo.arrows[static_cast<std::size_t>(a)] = static_cast<ArrowState>(d - '0');
  }
  return combo;
}

bool StepCombo::empty() const { return count(ArrowState::Off) == kNumArrows; }

int StepCombo::count(ArrowState state) const {
  return static_cast<int>(std::count(arrows.begin(), arrows.end(), state));
}

void validate_tempo_map(std::span<const TempoChange> tempo_map) {
  if (tempo_map.empty()) throw Error("tempo map is empty");
  if (tempo_map.front().beat != 0.0) throw Error("tempo map must start at beat 0");
  for (std::size_t i = 0; i < tempo_map.size(); ++i) {
    if (!(tempo_map[i].bpm > 0.0) || !std::isfinite(tempo_map[i].bpm)) {
      throw Error("non-positive BPM " + format_number(tempo_map[i].bpm));
    }
    if (i > 0 && !(tempo_map[i].beat > tempo_map[i - 1].beat)) {
      throw Error("tempo change beats must be strictly increasing");
    }
  }
}

double beat_to_time(double beat, std::span<const TempoChange> tempo_map, double offset) {
  double seconds = -offset;
  for (std::size_t i = 0; i < tempo_map.size(); ++i) {
    const double start = tempo_map[i].beat;
    const bool last = i + 1 == tempo_map.size();
    const double end = last ? beat : std::min(beat, tempo_map[i + 1].beat);
    if (end <= start) break;
    seconds += (end - start) * 60.0 / tempo_map[i].bpm;
    if (!last && beat <= tempo_map[i + 1].beat) break;
  }
  return seconds;
}

void retime(Chart& chart, std::span<const TempoChange> tempo_map, double offset) {
  for (TimedStep& step : chart.steps) step.time = beat_to_time(step.beat, tempo_map, offset);
}

Simfile parse_simfile(std::string_view text) {
  const std::string clean = strip_comments(text);
  const LineIndex lines(clean);
  const std::vector<Tag> tags = split_tags(clean, lines);

  Simfile sim;
  bool have_title = false, have_offset = false, have_bpms = false;
  std::size_t notes_blocks = 0;
  for (const Tag& tag : tags) {
    if (tag.key == "TITLE") {
      sim.title = std::string(trim(tag.value));
      have_title = true;
    } else if (tag.key == "ARTIST") {
      sim.artist = std::string(trim(tag.value));
    } else if (tag.key == "MUSIC") {
      sim.audio_path = std::string(trim(tag.value));
    } else if (tag.key == "OFFSET") {
      auto v = to_double(tag.value);
      if (!v) throw ParseError(tag.line, "malformed OFFSET '" + std::string(trim(tag.value)) + "'");
      sim.offset = *v;
      have_offset = true;
    } else if (tag.key == "BPMS") {
      sim.tempo_map = parse_bpms(tag);
      have_bpms = true;
    } else if (tag.key == "STOPS" || tag.key == "FREEZES") {
      if (!trim(tag.value).empty()) throw ParseError(tag.line, "stops are not supported");
    } else if (tag.key == "NOTES") {
      ++notes_blocks;
      std::vector<std::size_t> offsets;
      const auto fields = split_fields(tag.value, offsets);
      if (fields.size() != 6) {
        throw ParseError(tag.line, "malformed NOTES: expected 6 ':'-separated fields, got " + std::to_string(fields.size()));
      }
      const std::string type(trim(fields[0]));
      if (type != "dance-single") {
        log().warn("skipping '{}' chart at line {}", type, tag.line);
        continue;
      }
      Chart chart;
      chart.author = std::string(trim(fields[1]));
      chart.difficulty_name = std::string(trim(fields[2]));
      auto rating = to_int(fields[3]);
      if (!rating) throw ParseError(lines.line_of(tag.value_offset + offsets[3]), "malformed difficulty rating");
      chart.difficulty_rating = *rating;
      chart.steps = parse_note_data(fields[5], tag.value_offset + offsets[5], lines);
      sim.charts.push_back(std::move(chart));
    }
  }
  if (!have_title) throw ParseError(1, "missing #TITLE");
  if (!have_offset) throw ParseError(1, "missing #OFFSET");
  if (!have_bpms) throw ParseError(1, "missing #BPMS");
  if (notes_blocks == 0) throw ParseError(1, "missing #NOTES");
  if (sim.charts.empty()) throw ParseError(1, "no dance-single charts");
  for (Chart& chart : sim.charts) retime(chart, sim.tempo_map, sim.offset);
  return sim;
}

namespace {

std::string sanitize(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == ';' || c == ':' || c == '#' || c == '\n' || c == '\r') continue;
    if (c == '/' && !out.empty() && out.back() == '/') continue;
    out.push_back(c);
  }
  if (out != s) log().warn("metadata '{}' contains characters the .sm format cannot carry; written as '{}'", s, out);
  return std::string(trim(out));
}

int rows_for_measure(std::span<const int> offsets_in_measure, int quantization) {
  for (int rows : kMeasureRowCounts) {
    if (rows > quantization || quantization % rows != 0) continue;
    const int step = quantization / rows;
    if (std::all_of(offsets_in_measure.begin(), offsets_in_measure.end(), [&](int t) { return t % step == 0; })) {
      return rows;
    }
  }
  return quantization;
}

struct SnappedRow {
  long long tick;
  StepCombo combo;
};

std::vector<SnappedRow> snap_chart(const Chart& chart, int quantization) {
  std::map<long long, StepCombo> rows;
  const double ticks_per_beat = static_cast<double>(quantization) / kBeatsPerMeasure;
  for (const TimedStep& step : chart.steps) {
    const long long tick = std::llround(step.beat * ticks_per_beat);
    auto [it, inserted] = rows.try_emplace(tick, step.combo);
    if (!inserted) {
      for (int a = 0; a < kNumArrows; ++a) {
        auto& dst = it->second.arrows[static_cast<std::size_t>(a)];
        dst = std::max(dst, step.combo.arrows[static_cast<std::size_t>(a)]);
      }
    }
  }
  std::vector<SnappedRow> out;
  std::array<bool, kNumArrows> held{};
  for (auto& [tick, combo] : rows) {
    if (tick < 0) {
      log().warn("dropping step before beat 0 in chart '{}'", chart.difficulty_name);
      continue;
    }
    for (int a = 0; a < kNumArrows; ++a) {
      auto& s = combo.arrows[static_cast<std::size_t>(a)];
      bool& h = held[static_cast<std::size_t>(a)];
      const bool conflict = ((s == ArrowState::Tap || s == ArrowState::HoldStart) && h) || (s == ArrowState::HoldEnd && !h);
      if (conflict) {
        log().warn("dropping conflicting hold event on arrow {} at tick {} in chart '{}'", a, tick, chart.difficulty_name);
        s = ArrowState::Off;
      }
      if (s == ArrowState::HoldStart) h = true;
      if (s == ArrowState::HoldEnd) h = false;
    }
    if (!combo.empty()) out.push_back({tick, combo});
  }
  return out;
}

}  // namespace

std::string write_simfile(const Simfile& simfile, int quantization) {
  if (std::find(kMeasureRowCounts.begin(), kMeasureRowCounts.end(), quantization) == kMeasureRowCounts.end()) {
    throw Error("unsupported quantization " + std::to_string(quantization));
  }
  validate_tempo_map(simfile.tempo_map);

  std::ostringstream os;
  os << "#TITLE:" << sanitize(simfile.title) << ";\n";
  os << "#ARTIST:" << sanitize(simfile.artist) << ";\n";
  os << "#MUSIC:" << sanitize(simfile.audio_path) << ";\n";
  os << "#OFFSET:" << format_number(simfile.offset) << ";\n";
  os << "#BPMS:";
  for (std::size_t i = 0; i < simfile.tempo_map.size(); ++i) {
    if (i) os << ",";
    os << format_number(simfile.tempo_map[i].beat) << "=" << format_number(simfile.tempo_map[i].bpm);
  }
  os << ";\n";
  os << "#STOPS:;\n";

  for (const Chart& chart : simfile.charts) {
    const auto rows = snap_chart(chart, quantization);
    os << "\n//---------------dance-single - " << sanitize(chart.author) << "----------------\n";
    os << "#NOTES:\n";
    os << "     dance-single:\n";
    os << "     " << sanitize(chart.author) << ":\n";
    os << "     " << sanitize(chart.difficulty_name) << ":\n";
    os << "     " << chart.difficulty_rating << ":\n";
    os << "     0,0,0,0,0:\n";
    const long long num_measures = rows.empty() ? 1 : rows.back().tick / quantization + 1;
    std::size_t next = 0;
    for (long long m = 0; m < num_measures; ++m) {
      std::vector<int> offsets;
      std::vector<const SnappedRow*> in_measure;
      while (next < rows.size() && rows[next].tick / quantization == m) {
        offsets.push_back(static_cast<int>(rows[next].tick % quantization));
        in_measure.push_back(&rows[next]);
        ++next;
      }
      const int nrows = rows_for_measure(offsets, quantization);
      const int stride = quantization / nrows;
      std::vector<std::string> lines(static_cast<std::size_t>(nrows), "0000");
      for (std::size_t k = 0; k < in_measure.size(); ++k) {
        lines[static_cast<std::size_t>(offsets[k] / stride)] = in_measure[k]->combo.to_string();
      }
      if (m > 0) os << ",\n";
      for (const auto& line : lines) os << line << "\n";
    }
    os << ";\n";
  }
  return os.str();
}

StepCombo mirror(const StepCombo& combo, MirrorAxis axis) {
  StepCombo out = combo;
  if (axis == MirrorAxis::LeftRight || axis == MirrorAxis::Both) std::swap(out.arrows[0], out.arrows[3]);
  if (axis == MirrorAxis::UpDown || axis == MirrorAxis::Both) std::swap(out.arrows[1], out.arrows[2]);
  return out;
}

Chart mirror_chart(const Chart& chart, MirrorAxis axis) {
  Chart out = chart;
  for (TimedStep& step : out.steps) step.combo = mirror(step.combo, axis);
  return out;
}

std::vector<Chart> augment_dataset(std::span<const Chart> charts) {
  std::vector<Chart> out;
  out.reserve(charts.size() * 4);
  for (const Chart& chart : charts) {
    out.push_back(chart);
    out.push_back(mirror_chart(chart, MirrorAxis::LeftRight));
    out.push_back(mirror_chart(chart, MirrorAxis::UpDown));
    out.push_back(mirror_chart(chart, MirrorAxis::Both));
  }
  return out;
}

std::optional<HoldViolation> find_hold_violation(std::span<const TimedStep> steps) {
  std::array<bool, kNumArrows> held{};
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (int a = 0; a < kNumArrows; ++a) {
      const ArrowState s = steps[i].combo.arrows[static_cast<std::size_t>(a)];
      bool& h = held[static_cast<std::size_t>(a)];
      if ((s == ArrowState::Tap || s == ArrowState::HoldStart) && h) return HoldViolation{i, a, "arrow is held"};
      if (s == ArrowState::HoldEnd && !h) return HoldViolation{i, a, "release without hold"};
      if (s == ArrowState::HoldStart) h = true;
      if (s == ArrowState::HoldEnd) h = false;
    }
  }
  return std::nullopt;
}

Subdivision subdivision_class(double beat) {
  constexpr double kTolerance = 1e-4;
  constexpr std::array<std::pair<int, Subdivision>, 6> grids = {{
      {1, Subdivision::Quarter},
      {2, Subdivision::Eighth},
      {3, Subdivision::Twelfth},
      {4, Subdivision::Sixteenth},
      {6, Subdivision::TwentyFourth},
      {8, Subdivision::ThirtySecond},
  }};
  for (auto [per_beat, cls] : grids) {
    const double scaled = beat * per_beat;
    if (std::abs(scaled - std::round(scaled)) <= kTolerance * per_beat) return cls;
  }
  return Subdivision::Other;
}

std::string_view subdivision_name(Subdivision subdivision) {
  switch (subdivision) {
    case Subdivision::Quarter: return "4th";
    case Subdivision::Eighth: return "8th";
    case Subdivision::Twelfth: return "12th";
    case Subdivision::Sixteenth: return "16th";
    case Subdivision::TwentyFourth: return "24th";
    case Subdivision::ThirtySecond: return "32nd";
    case Subdivision::Other: return "other";
  }
  return "other";
}

std::array<std::size_t, kNumSubdivisions> subdivision_histogram(const Chart& chart) {
  std::array<std::size_t, kNumSubdivisions> hist{};
  for (const TimedStep& step : chart.steps) ++hist[static_cast<std::size_t>(subdivision_class(step.beat))];
  return hist;
}

}  // namespace choreo
