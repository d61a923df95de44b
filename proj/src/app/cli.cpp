#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "choreo/app.h"
#include "choreo/error.h"
#include "choreo/log.h"

namespace choreo::app {

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNoSteps = 3;

nlohmann::ordered_json stats_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["num_songs"] = s.num_songs;
  j["num_charts"] = s.num_charts;
  j["total_audio_hours"] = s.total_audio_hours;
  j["total_chart_hours"] = s.total_chart_hours;
  j["steps_per_sec"] = s.steps_per_sec;
  j["vocab_size"] = s.vocab_size;
  j["total_steps"] = s.total_steps;
  j["single_arrow_fraction"] = s.single_arrow_fraction;
  nlohmann::ordered_json subdivisions;
  for (const auto& [difficulty, counts] : s.subdivisions) {
    nlohmann::ordered_json row;
    for (int k = 0; k < kNumSubdivisions; ++k) {
      row[std::string(subdivision_name(static_cast<Subdivision>(k)))] = counts[static_cast<std::size_t>(k)];
    }
    subdivisions[difficulty] = row;
  }
  j["subdivisions"] = subdivisions;
  j["missing_audio"] = s.missing_audio;
  return j;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App cli{"Step chart generation from audio: data preparation, training, evaluation and choreography."};
  cli.require_subcommand(0, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> dataset, cache_dir, models_dir;
  bool show_config = false, verbose = false;
  cli.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  cli.add_option("--seed", seed, "Random seed");
  cli.add_option("--jobs", jobs, "Worker threads for per-song stages")->check(CLI::PositiveNumber);
  cli.add_option("--dataset", dataset, "Dataset name used in checkpoint paths and reports");
  cli.add_option("--cache-dir", cache_dir, std::string("Feature cache directory (default $") + kCacheEnv + ")");
  cli.add_option("--models-dir", models_dir, "Checkpoint directory");
  cli.add_flag("--show-config", show_config, "Print the effective configuration and exit");
  cli.add_flag("-v,--verbose", verbose, "Log progress at info level");

  auto* prepare_cmd = cli.add_subcommand("prepare", "Split a pack and cache its features");
  std::string pack_dir, manifest_out = "manifest.json";
  prepare_cmd->add_option("pack_dir", pack_dir, "Directory of .sm files with WAV audio")->required();
  prepare_cmd->add_option("-o,--out", manifest_out, "Manifest to write");

  auto* stats_cmd = cli.add_subcommand("stats", "Dataset statistics of a pack");
  std::string stats_dir, stats_out;
  stats_cmd->add_option("pack_dir", stats_dir, "Directory of .sm files")->required();
  stats_cmd->add_option("-o,--out", stats_out, "JSON output (default stdout)");

  std::string manifest_path, checkpoint_out, kind, features, augment;
  std::optional<double> learning_rate;
  std::optional<int> max_epochs;

  auto* tp_cmd = cli.add_subcommand("train-placement", "Train a step placement model");
  tp_cmd->add_option("--manifest", manifest_path, "Prepared manifest")->required()->check(CLI::ExistingFile);
  tp_cmd->add_option("--kind", kind, "logreg, mlp, cnn or clstm");
  tp_cmd->add_option("--learning-rate", learning_rate, "SGD learning rate");
  tp_cmd->add_option("--max-epochs", max_epochs, "Epoch limit");
  tp_cmd->add_option("-o,--out", checkpoint_out, "Checkpoint path (default models/placement-<kind>-<dataset>.ckpt)");

  auto* ts_cmd = cli.add_subcommand("train-selection", "Train a step selection model");
  ts_cmd->add_option("--manifest", manifest_path, "Prepared manifest")->required()->check(CLI::ExistingFile);
  ts_cmd->add_option("--kind", kind, "kn5, mlp5 or lstm");
  ts_cmd->add_option("--features", features, "none, time, beat or time+beat");
  ts_cmd->add_option("--augment", augment, "on or off")->check(CLI::IsMember({"on", "off"}));
  ts_cmd->add_option("--learning-rate", learning_rate, "SGD learning rate");
  ts_cmd->add_option("--max-epochs", max_epochs, "Epoch limit");
  ts_cmd->add_option("-o,--out", checkpoint_out, "Checkpoint path (default models/selection-<kind>-<dataset>.ckpt)");

  auto* ch_cmd = cli.add_subcommand("choreograph", "Write a .sm chart for a WAV file");
  ChoreographRequest request;
  std::string audio_path, placement_path, selection_path, thresholds, output;
  std::optional<double> bpm, temperature;
  bool no_mask = false;
  ch_cmd->add_option("audio", audio_path, "Input WAV")->required()->check(CLI::ExistingFile);
  ch_cmd->add_option("--difficulty", request.difficulty, "Beginner, Easy, Medium, Hard or Challenge");
  ch_cmd->add_option("--placement", placement_path, "Placement checkpoint")->required()->check(CLI::ExistingFile);
  ch_cmd->add_option("--selection", selection_path, "Selection checkpoint")->required()->check(CLI::ExistingFile);
  ch_cmd->add_option("--thresholds", thresholds, "Thresholds JSON (default: the checkpoint sidecar)");
  ch_cmd->add_option("--bpm", bpm, "Known tempo; enables beat features and sets the output grid");
  ch_cmd->add_option("--temperature", temperature, "Sampling temperature");
  ch_cmd->add_flag("--no-mask", no_mask, "Sample without the hold validity mask");
  ch_cmd->add_option("-o,--out", output, "Output .sm")->required();

  auto* ev_cmd = cli.add_subcommand("eval", "Test-split metrics of trained checkpoints");
  EvalRequest eval_request;
  std::vector<std::string> placement_ckpts, selection_ckpts;
  std::string report = "report";
  ev_cmd->add_option("--manifest", manifest_path, "Prepared manifest")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--placement", placement_ckpts, "Placement checkpoints")->check(CLI::ExistingFile);
  ev_cmd->add_option("--selection", selection_ckpts, "Selection checkpoints")->check(CLI::ExistingFile);
  ev_cmd->add_option("-o,--out", report, "Report path without extension (writes .json and .csv)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int status = cli.exit(e);
    return status == 0 ? 0 : kExitUsage;
  }

  try {
    if (verbose) log().set_level(spdlog::level::info);
    Config config = config_path.empty() ? Config{} : Config::load(config_path);
    if (seed) config.seed = *seed;
    if (jobs) config.jobs = *jobs;
    if (dataset) config.dataset = *dataset;
    if (cache_dir) config.cache_dir = *cache_dir;
    if (models_dir) config.models_dir = *models_dir;
    if (*tp_cmd) {
      if (!kind.empty()) config.placement.kind = kind;
      if (learning_rate) config.placement.learning_rate = *learning_rate;
      if (max_epochs) config.placement.max_epochs = *max_epochs;
    }
    if (*ts_cmd) {
      if (!kind.empty()) config.selection.kind = kind;
      if (!features.empty()) config.selection.features = features;
      if (!augment.empty()) config.selection.augment = augment == "on";
      if (learning_rate) config.selection.learning_rate = *learning_rate;
      if (max_epochs) config.selection.max_epochs = *max_epochs;
    }
    if (*ch_cmd) {
      if (temperature) config.generation.temperature = *temperature;
      if (no_mask) config.generation.validity_mask = false;
    }
    config.validate();

    if (show_config) {
      std::cout << config.to_json();
      return 0;
    }
    if (*prepare_cmd) {
      const Manifest m = prepare(pack_dir, config);
      m.save(manifest_out);
      const auto sizes = split_sizes(m.entries.size());
      std::cout << "prepared " << m.entries.size() << " songs (train " << sizes[0] << ", valid " << sizes[1] << ", test "
                << sizes[2] << "), skipped " << m.skipped.size() << "\n";
      for (const std::string& s : m.skipped) std::cout << "  skipped " << s << "\n";
      return 0;
    }
    if (*stats_cmd) {
      const auto records = pack_records(stats_dir);
      emit(stats_json(dataset_stats(records)).dump(2) + "\n", stats_out);
      return 0;
    }
    if (*tp_cmd) {
      const Manifest m = Manifest::load(manifest_path);
      const PlacementRun run = train_placement(m, config, checkpoint_out);
      std::cout << "wrote " << run.checkpoint.string() << " (best epoch " << run.training.best_epoch << ", valid AUC-PR "
                << run.validation.auc_pr << ", valid F-score^m " << run.validation.fscore_m << ")\n";
      return 0;
    }
    if (*ts_cmd) {
      const Manifest m = Manifest::load(manifest_path);
      const SelectionRun run = train_selection(m, config, checkpoint_out);
      std::cout << "wrote " << run.checkpoint.string() << " (" << run.training_sequences << " training sequences, valid PPL "
                << run.validation.perplexity << ", accuracy " << run.validation.accuracy << ")\n";
      return 0;
    }
    if (*ch_cmd) {
      request.audio = audio_path;
      request.placement_checkpoint = placement_path;
      request.selection_checkpoint = selection_path;
      request.thresholds = thresholds;
      request.output = output;
      request.bpm = bpm;
      const ChoreographResult r = choreograph(request, config);
      if (r.steps == 0) {
        std::cerr << "error: no peaks above the " << request.difficulty << " threshold; wrote an empty chart to " << output
                  << "\n";
        return kExitNoSteps;
      }
      std::cout << "wrote " << output << " with " << r.steps << " steps\n";
      return 0;
    }
    if (*ev_cmd) {
      const Manifest m = Manifest::load(manifest_path);
      for (const auto& p : placement_ckpts) eval_request.placement_checkpoints.emplace_back(p);
      for (const auto& p : selection_ckpts) eval_request.selection_checkpoints.emplace_back(p);
      if (eval_request.placement_checkpoints.empty() && eval_request.selection_checkpoints.empty()) {
        throw Error("eval needs at least one --placement or --selection checkpoint");
      }
      eval_request.output = report;
      evaluate(m, eval_request, config);
      std::cout << "wrote " << report << ".json and " << report << ".csv\n";
      return 0;
    }
    std::cout << cli.help();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace choreo::app
