#include <doctest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "choreo/app.h"
#include "choreo/error.h"
#include "synth.h"

using namespace choreo;
using namespace choreo::app;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  fs::path pack;
  Config config;
};

const Workspace& workspace() {
  static const Workspace ws = [] {
    Workspace w;
    w.root = fs::temp_directory_path() / "choreo_app_test";
    fs::remove_all(w.root);
    w.pack = w.root / "pack";
    testing::SynthOptions opt;
    opt.songs = 10;
    opt.seconds = 3.0;
    opt.seed = 8;
    testing::write_pack(w.pack, testing::click_corpus(opt));
    w.config.seed = 4;
    w.config.cache_dir = (w.root / "cache").string();
    w.config.models_dir = (w.root / "models").string();
    w.config.dataset = "toy";
    w.config.placement.kind = "logreg";
    w.config.placement.learning_rate = 0.01;
    w.config.placement.max_epochs = 2;
    w.config.selection.kind = "kn5";
    return w;
  }();
  return ws;
}

const Manifest& prepared() {
  static const Manifest m = prepare(workspace().pack, workspace().config);
  return m;
}

bool touched_test(const Manifest& m) {
  for (const auto& a : m.accesses()) {
    if (a.split == Split::Test) return true;
  }
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("app") {

TEST_CASE("split sizes") {
  CHECK(split_sizes(10) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(split_sizes(90) == std::array<std::size_t, 3>{72, 9, 9});
  CHECK(split_sizes(9) == std::array<std::size_t, 3>{9, 0, 0});
  CHECK(parse_split("valid") == Split::Valid);
  CHECK(to_string(Split::Test) == "test");
}

TEST_CASE("config JSON") {
  Config c;
  c.seed = 9;
  c.placement.kind = "cnn";
  c.selection.features = "time+beat";
  c.generation.grid_bpm = 150.0;
  const Config back = Config::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(Config::from_json("{\"seed\": 3}").placement.kind == "clstm");
  CHECK_THROWS_AS(Config::from_json("{\"sed\": 3}"), Error);
  CHECK_THROWS_AS(Config::from_json("{\"placement\": {\"lr\": 1}}"), Error);
  Config bad;
  bad.placement.kind = "rnn";
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = Config{};
  bad.placement.hamming_width = 4;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::atomic<int> sum{0};
  parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
  CHECK(sum == 4950);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw Error("boom");
                  }),
                  Error);
}

TEST_CASE("the seeded split is reproducible") {
  const Manifest a = scan_pack(workspace().pack, 4);
  const Manifest b = scan_pack(workspace().pack, 4);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.entries.size() == 10);
  std::array<int, 3> counts{};
  for (const auto& e : a.entries) ++counts[static_cast<std::size_t>(e.split)];
  CHECK(counts == std::array<int, 3>{8, 1, 1});
  bool differs = false;
  for (std::uint64_t seed = 5; seed < 10 && !differs; ++seed) differs = scan_pack(workspace().pack, seed).to_json() != a.to_json();
  CHECK(differs);
  CHECK(Manifest::from_json(a.to_json()).to_json() == a.to_json());
}

TEST_CASE("prepare caches features and fits normalization") {
  const Manifest& m = prepared();
  CHECK(m.skipped.empty());
  CHECK(fs::exists(m.normalization));
  for (const auto& e : m.entries) CHECK(fs::exists(e.features));
  const auto again = prepare(workspace().pack, workspace().config);
  CHECK(again.to_json() == m.to_json());
}

TEST_CASE("training never reads the test split") {
  const Manifest m = Manifest::from_json(prepared().to_json());
  const auto start = std::chrono::steady_clock::now();
  const PlacementRun run = train_placement(m, workspace().config);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 60.0);
  CHECK(fs::exists(run.checkpoint));
  CHECK(fs::exists(thresholds_path(run.checkpoint)));
  CHECK(run.validation.charts > 0);
  train_selection(m, workspace().config);
  CHECK_FALSE(touched_test(m));
  CHECK_FALSE(m.accesses().empty());
}

TEST_CASE("augmentation quadruples the selection corpus") {
  Config on = workspace().config;
  Config off = on;
  off.selection.augment = false;
  const auto a = train_selection(prepared(), on, workspace().root / "sel_on.kn");
  const auto b = train_selection(prepared(), off, workspace().root / "sel_off.kn");
  CHECK(b.training_sequences > 0);
  CHECK(a.training_sequences == 4 * b.training_sequences);
}

TEST_CASE("a reloaded placement checkpoint reproduces its validation metrics") {
  const Config& cfg = workspace().config;
  const fs::path ckpt = workspace().root / "reload.ckpt";
  const PlacementRun run = train_placement(prepared(), cfg, ckpt);
  const placement::Trained trained = placement::load(ckpt);
  const auto songs = load_split(prepared(), Split::Valid, "reload check", cfg, true);
  std::vector<placement::PlacementSong> ps;
  for (const auto& s : songs) ps.push_back(placement::make_song(s.entry->name, s.features, s.simfile));
  const auto thresholds = peakpick::parse_thresholds_json(slurp(thresholds_path(ckpt)));
  CHECK(thresholds == run.thresholds);
  const auto eval = placement::evaluate(trained.model, ps, thresholds, cfg.placement.hamming_width);
  CHECK(eval.auc_pr == run.validation.auc_pr);
  CHECK(eval.fscore_m == run.validation.fscore_m);
  CHECK(eval.perplexity == run.validation.perplexity);
}

TEST_CASE("choreograph and evaluate") {
  const Config& cfg = workspace().config;
  const fs::path p = placement_checkpoint_path(cfg, "logreg");
  const fs::path s = selection_checkpoint_path(cfg, "kn5");
  if (!fs::exists(p)) train_placement(prepared(), cfg);
  if (!fs::exists(s)) train_selection(prepared(), cfg);

  ChoreographRequest req;
  req.audio = prepared().entries.front().audio;
  req.difficulty = "Hard";
  req.placement_checkpoint = p;
  req.selection_checkpoint = s;
  req.output = workspace().root / "out.sm";
  const auto result = choreograph(req, cfg);
  const Simfile back = parse_simfile(slurp(req.output));
  REQUIRE(back.charts.size() == 1);
  CHECK(back.charts[0].steps.size() == result.steps);
  CHECK_FALSE(find_hold_violation(back.charts[0].steps).has_value());
  const std::string first = slurp(req.output);
  choreograph(req, cfg);
  CHECK(slurp(req.output) == first);

  const Manifest m = Manifest::from_json(prepared().to_json());
  EvalRequest er{{p}, {s}, workspace().root / "report"};
  const auto rows = evaluate(m, er, cfg);
  CHECK(rows.size() == 2);
  CHECK(touched_test(m));
  CHECK(fs::exists(workspace().root / "report.csv"));
  CHECK(fs::exists(workspace().root / "report.json"));
}

TEST_CASE("CLI exit codes") {
  std::vector<std::string> help{"choreo", "--help"};
  std::vector<std::string> bogus{"choreo", "frobnicate"};
  std::vector<std::string> missing{"choreo", "train-placement"};
  auto run = [](std::vector<std::string> args) {
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
  };
  CHECK(run(help) == 0);
  CHECK(run(bogus) == 2);
  CHECK(run(missing) == 2);
}

}
