#include <chrono>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "choreo/app.h"
#include "choreo/error.h"
#include "choreo/log.h"

namespace choreo::app {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::filesystem::path sidecar(const std::filesystem::path& checkpoint, const std::string& suffix) {
  return checkpoint.string() + suffix;
}

std::map<std::string, int> author_classes(const std::vector<LoadedSong>& songs) {
  std::map<std::string, int> authors;
  for (const LoadedSong& s : songs) {
    for (const Chart& c : s.simfile.charts) authors.emplace(c.author, 0);
  }
  int next = 0;
  for (auto& [name, index] : authors) index = next++;
  return authors;
}

std::vector<placement::PlacementSong> placement_songs(std::vector<LoadedSong>& songs, const std::map<std::string, int>& authors) {
  std::vector<placement::PlacementSong> out;
  for (LoadedSong& s : songs) out.push_back(placement::make_song(s.entry->name, std::move(s.features), s.simfile, authors));
  return out;
}

nlohmann::ordered_json evaluation_json(const placement::Evaluation& ev) {
  return {{"perplexity", ev.perplexity}, {"auc_pr", ev.auc_pr},       {"fscore_c", ev.fscore_c},
          {"fscore_m", ev.fscore_m},     {"precision_m", ev.precision_m}, {"recall_m", ev.recall_m},
          {"charts", ev.charts}};
}

std::string model_name(const std::filesystem::path& checkpoint) { return checkpoint.stem().string(); }

}  // namespace

std::filesystem::path placement_checkpoint_path(const Config& config, const std::string& kind) {
  return std::filesystem::path(config.models_dir) / ("placement-" + kind + "-" + config.dataset + ".ckpt");
}

std::filesystem::path selection_checkpoint_path(const Config& config, const std::string& kind) {
  return std::filesystem::path(config.models_dir) / ("selection-" + kind + "-" + config.dataset + ".ckpt");
}

std::filesystem::path thresholds_path(const std::filesystem::path& checkpoint) { return sidecar(checkpoint, ".thresholds.json"); }

std::map<std::string, int> read_authors(const std::filesystem::path& checkpoint) {
  const auto path = sidecar(checkpoint, ".authors.json");
  if (!std::filesystem::exists(path)) return {};
  try {
    return nlohmann::json::parse(read_text(path)).get<std::map<std::string, int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

PlacementRun train_placement(const Manifest& manifest, const Config& config, std::filesystem::path checkpoint) {
  const PlacementSettings& s = config.placement;
  const placement::ModelKind kind = placement::parse_model_kind(s.kind);
  auto train_loaded = load_split(manifest, Split::Train, "placement training", config, true);
  auto valid_loaded = load_split(manifest, Split::Valid, "placement early stopping and calibration", config, true);
  const auto authors = s.author_conditioning ? author_classes(train_loaded) : std::map<std::string, int>{};
  const auto train_songs = placement_songs(train_loaded, authors);
  const auto valid_songs = placement_songs(valid_loaded, authors);

  placement::Model model({kind, static_cast<int>(authors.size()), s.dropout}, config.seed);
  placement::TrainConfig tc;
  tc.learning_rate = s.learning_rate;
  tc.clip_norm = s.clip_norm;
  tc.batch_size = s.batch_size;
  tc.unroll = s.unroll;
  tc.max_epochs = s.max_epochs;
  tc.patience = s.patience;
  tc.max_batches_per_epoch = s.max_batches_per_epoch;
  tc.seed = config.seed;

  PlacementRun run;
  run.training = placement::train(model, train_songs, valid_songs, tc);
  run.thresholds = placement::calibrate(model, valid_songs, s.hamming_width);
  run.validation = placement::evaluate(model, valid_songs, run.thresholds, s.hamming_width);
  run.checkpoint = checkpoint.empty() ? placement_checkpoint_path(config, placement::to_string(kind)) : checkpoint;

  if (run.checkpoint.has_parent_path()) std::filesystem::create_directories(run.checkpoint.parent_path());
  placement::save(run.checkpoint, model, read_normalization(manifest.normalization), config.seed);
  write_text(thresholds_path(run.checkpoint), peakpick::thresholds_json(run.thresholds));
  if (!authors.empty()) write_text(sidecar(run.checkpoint, ".authors.json"), nlohmann::json(authors).dump(2) + "\n");
  nlohmann::ordered_json valid = evaluation_json(run.validation);
  valid["best_epoch"] = run.training.best_epoch;
  valid["best_valid_auc_pr"] = run.training.best_valid_auc_pr;
  write_text(sidecar(run.checkpoint, ".valid.json"), valid.dump(2) + "\n");
  return run;
}

std::vector<selection::ChartSequence> selection_sequences(const std::vector<LoadedSong>& songs, bool augment) {
  static constexpr std::array<const char*, 4> kVariants = {"", ":mirror-lr", ":mirror-ud", ":mirror-both"};
  std::vector<selection::ChartSequence> out;
  for (const LoadedSong& s : songs) {
    const std::vector<Chart> charts = augment ? augment_dataset(s.simfile.charts) : s.simfile.charts;
    for (std::size_t k = 0; k < charts.size(); ++k) {
      const std::string suffix = augment ? kVariants[k % 4] : "";
      auto seq = selection::make_sequence(s.entry->name + ":" + charts[k].difficulty_name + suffix, charts[k]);
      if (seq) out.push_back(std::move(*seq));
    }
  }
  return out;
}

SelectionRun train_selection(const Manifest& manifest, const Config& config, std::filesystem::path checkpoint) {
  const SelectionSettings& s = config.selection;
  const selection::SelectionKind kind = selection::parse_selection_kind(s.kind);
  const auto train_loaded = load_split(manifest, Split::Train, "selection training", config, false);
  const auto valid_loaded = load_split(manifest, Split::Valid, "selection early stopping", config, false);
  const auto train_seqs = selection_sequences(train_loaded, s.augment);
  const auto valid_seqs = selection_sequences(valid_loaded, false);

  SelectionRun run;
  run.training_sequences = train_seqs.size();
  run.checkpoint = checkpoint.empty() ? selection_checkpoint_path(config, selection::to_string(kind)) : checkpoint;
  if (run.checkpoint.has_parent_path()) std::filesystem::create_directories(run.checkpoint.parent_path());
  if (kind == selection::SelectionKind::KN5) {
    const auto model = selection::KnSelectionModel::train(train_seqs);
    model.save(run.checkpoint);
    run.validation = selection::evaluate(model, valid_seqs);
  } else {
    selection::NeuralSelectionModel model({kind, selection::FeatureSet::parse(s.features), s.dropout}, config.seed);
    selection::SelectionTrainConfig tc;
    tc.learning_rate = s.learning_rate;
    tc.clip_norm = s.clip_norm;
    tc.batch_size = s.batch_size;
    tc.unroll = s.unroll;
    tc.max_epochs = s.max_epochs;
    tc.patience = s.patience;
    tc.max_batches_per_epoch = s.max_batches_per_epoch;
    tc.seed = config.seed;
    run.training = selection::train(model, train_seqs, valid_seqs, tc);
    model.save(run.checkpoint);
    run.validation = selection::evaluate(model, valid_seqs);
  }
  nlohmann::ordered_json valid{{"perplexity", run.validation.perplexity},
                               {"accuracy", run.validation.accuracy},
                               {"charts", run.validation.charts},
                               {"training_sequences", run.training_sequences}};
  write_text(sidecar(run.checkpoint, ".valid.json"), valid.dump(2) + "\n");
  return run;
}

ChoreographResult choreograph(const ChoreographRequest& request, const Config& config) {
  const auto started = std::chrono::steady_clock::now();
  const int difficulty = difficulty_index(request.difficulty);
  if (request.bpm && !(*request.bpm > 0.0)) throw Error("--bpm must be positive");

  const placement::Trained trained = placement::load(request.placement_checkpoint);
  const auto selector = selection::load_selection_model(request.selection_checkpoint);
  const auto thresholds = peakpick::parse_thresholds_json(
      read_text(request.thresholds.empty() ? thresholds_path(request.placement_checkpoint) : request.thresholds));

  MelSpectrogram features = compute_mel_spectrogram(load_audio(request.audio));
  apply_normalization(features, trained.normalization);
  const auto probs = placement::predict_probs(trained, features, {difficulty, -1});
  const auto smoothed = peakpick::smooth(probs, config.placement.hamming_width);
  const auto peaks = peakpick::pick_peaks(smoothed, thresholds[static_cast<std::size_t>(difficulty)]);

  const double bpm = request.bpm.value_or(config.generation.grid_bpm);
  std::vector<double> times, beats;
  for (int f : peaks) {
    times.push_back(features.frame_time(f));
    beats.push_back(times.back() * bpm / 60.0);
  }
  nn::Rng rng(config.seed);
  const auto combos = selection::generate(*selector, times, request.bpm ? std::optional<std::span<const double>>(beats) : std::nullopt,
                                          rng, {config.generation.validity_mask, config.generation.temperature});

  static constexpr std::array<int, kNumDifficulties> kRatings = {1, 3, 5, 7, 9};
  Simfile sim;
  sim.title = request.audio.stem().string();
  sim.artist = "choreo";
  sim.offset = 0.0;
  sim.tempo_map = {{0.0, bpm}};
  sim.audio_path = request.audio.filename().string();
  Chart chart{std::string(kDifficultyNames[static_cast<std::size_t>(difficulty)]),
              kRatings[static_cast<std::size_t>(difficulty)], "choreo", {}};
  for (std::size_t i = 0; i < combos.size(); ++i) chart.steps.push_back({beats[i], times[i], combos[i]});
  sim.charts = {chart};

  const std::string text = write_simfile(sim, config.generation.quantization);
  write_text(request.output, text);

  ChoreographResult result;
  result.simfile = parse_simfile(text);
  result.steps = result.simfile.charts.empty() ? 0 : result.simfile.charts.front().steps.size();
  if (result.steps == 0) {
    log().warn("no peaks cleared the {} threshold; wrote an empty chart", chart.difficulty_name);
  } else if (auto v = find_hold_violation(result.simfile.charts.front().steps)) {
    log().warn("generated chart has a hold violation at step {}: {}", v->step_index, v->reason);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::vector<metrics::ReportRow> evaluate(const Manifest& manifest, const EvalRequest& request, const Config& config) {
  std::vector<metrics::ReportRow> rows;
  const auto test = load_split(manifest, Split::Test, "evaluation", config, false);
  for (const auto& path : request.placement_checkpoints) {
    const placement::Trained trained = placement::load(path);
    const auto authors = read_authors(path);
    std::vector<placement::PlacementSong> songs(test.size());
    parallel_for(test.size(), config.jobs, [&](std::size_t i) {
      MelSpectrogram f = read_feature_cache(test[i].entry->features);
      apply_normalization(f, trained.normalization);
      songs[i] = placement::make_song(test[i].entry->name, std::move(f), test[i].simfile, authors);
    });
    const auto thresholds = peakpick::parse_thresholds_json(read_text(thresholds_path(path)));
    const auto ev = placement::evaluate(trained.model, songs, thresholds, config.placement.hamming_width);
    rows.push_back({model_name(path), config.dataset, "test",
                    {{"perplexity", ev.perplexity},
                     {"auc_pr", ev.auc_pr},
                     {"fscore_c", ev.fscore_c},
                     {"fscore_m", ev.fscore_m},
                     {"precision_m", ev.precision_m},
                     {"recall_m", ev.recall_m},
                     {"charts", static_cast<double>(ev.charts)}}});
  }
  if (!request.selection_checkpoints.empty()) {
    const auto seqs = selection_sequences(test, false);
    for (const auto& path : request.selection_checkpoints) {
      const auto model = selection::load_selection_model(path);
      const auto scores = selection::evaluate(*model, seqs);
      rows.push_back({model_name(path), config.dataset, "test",
                      {{"perplexity", scores.perplexity}, {"accuracy", scores.accuracy}, {"charts", static_cast<double>(scores.charts)}}});
    }
  }
  if (!request.output.empty()) {
    auto base = request.output;
    if (base.extension() == ".json" || base.extension() == ".csv") base.replace_extension();
    write_text(base.string() + ".json", metrics::report_json(rows));
    write_text(base.string() + ".csv", metrics::report_csv(rows));
  }
  return rows;
}

}  // namespace choreo::app
