#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "choreo/app.h"
#include "choreo/error.h"

namespace choreo::app {

namespace {

using Json = nlohmann::ordered_json;

/// Reads the keys of one object into fields, rejecting any key it does not know.
class Reader {
 public:
  Reader(const Json& object, std::string where) : object_(object), where_(std::move(where)) {
    if (!object_.is_object()) throw Error("config: " + where_ + " must be an object");
  }

  template <typename T>
  Reader& field(const char* key, T& out) {
    known_.emplace_back(key);
    if (auto it = object_.find(key); it != object_.end()) {
      try {
        out = it->template get<T>();
      } catch (const nlohmann::json::exception&) {
        throw Error("config: " + where_ + key + " has the wrong type");
      }
    }
    return *this;
  }

  const Json* section(const char* key) {
    known_.emplace_back(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (std::find(known_.begin(), known_.end(), key) == known_.end()) throw Error("config: unknown key " + where_ + key);
    }
  }

 private:
  const Json& object_;
  std::string where_;
  std::vector<std::string> known_;
};

}  // namespace

std::string Config::to_json() const {
  Json j;
  j["seed"] = seed;
  j["jobs"] = jobs;
  j["cache_dir"] = cache_dir;
  j["dataset"] = dataset;
  j["models_dir"] = models_dir;
  const PlacementSettings& p = placement;
  j["placement"] = {{"kind", p.kind},
                    {"learning_rate", p.learning_rate},
                    {"clip_norm", p.clip_norm},
                    {"batch_size", p.batch_size},
                    {"unroll", p.unroll},
                    {"max_epochs", p.max_epochs},
                    {"patience", p.patience},
                    {"max_batches_per_epoch", p.max_batches_per_epoch},
                    {"dropout", p.dropout},
                    {"author_conditioning", p.author_conditioning},
                    {"hamming_width", p.hamming_width}};
  const SelectionSettings& s = selection;
  j["selection"] = {{"kind", s.kind},
                    {"features", s.features},
                    {"learning_rate", s.learning_rate},
                    {"clip_norm", s.clip_norm},
                    {"batch_size", s.batch_size},
                    {"unroll", s.unroll},
                    {"max_epochs", s.max_epochs},
                    {"patience", s.patience},
                    {"max_batches_per_epoch", s.max_batches_per_epoch},
                    {"dropout", s.dropout},
                    {"augment", s.augment}};
  const GenerationSettings& g = generation;
  j["generation"] = {{"temperature", g.temperature},
                     {"validity_mask", g.validity_mask},
                     {"grid_bpm", g.grid_bpm},
                     {"quantization", g.quantization}};
  return j.dump(2) + "\n";
}

Config Config::from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  Config c;
  Reader root(j, "");
  root.field("seed", c.seed).field("jobs", c.jobs).field("cache_dir", c.cache_dir).field("dataset", c.dataset);
  root.field("models_dir", c.models_dir);
  if (const Json* p = root.section("placement")) {
    PlacementSettings& s = c.placement;
    Reader r(*p, "placement.");
    r.field("kind", s.kind).field("learning_rate", s.learning_rate).field("clip_norm", s.clip_norm);
    r.field("batch_size", s.batch_size).field("unroll", s.unroll).field("max_epochs", s.max_epochs);
    r.field("patience", s.patience).field("max_batches_per_epoch", s.max_batches_per_epoch).field("dropout", s.dropout);
    r.field("author_conditioning", s.author_conditioning).field("hamming_width", s.hamming_width);
    r.finish();
  }
  if (const Json* p = root.section("selection")) {
    SelectionSettings& s = c.selection;
    Reader r(*p, "selection.");
    r.field("kind", s.kind).field("features", s.features).field("learning_rate", s.learning_rate);
    r.field("clip_norm", s.clip_norm).field("batch_size", s.batch_size).field("unroll", s.unroll);
    r.field("max_epochs", s.max_epochs).field("patience", s.patience);
    r.field("max_batches_per_epoch", s.max_batches_per_epoch).field("dropout", s.dropout).field("augment", s.augment);
    r.finish();
  }
  if (const Json* p = root.section("generation")) {
    GenerationSettings& s = c.generation;
    Reader r(*p, "generation.");
    r.field("temperature", s.temperature).field("validity_mask", s.validity_mask).field("grid_bpm", s.grid_bpm);
    r.field("quantization", s.quantization);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void Config::validate() const {
  if (jobs < 1) throw Error("config: jobs must be at least 1");
  placement::parse_model_kind(placement.kind);
  selection::parse_selection_kind(selection.kind);
  selection::FeatureSet::parse(selection.features);
  if (placement.hamming_width < 1 || placement.hamming_width % 2 == 0) throw Error("config: hamming_width must be odd");
  if (placement.dropout < 0.0 || placement.dropout >= 1.0 || selection.dropout < 0.0 || selection.dropout >= 1.0) {
    throw Error("config: dropout must be in [0, 1)");
  }
  if (!(generation.temperature > 0.0)) throw Error("config: temperature must be positive");
  if (!(generation.grid_bpm > 0.0)) throw Error("config: grid_bpm must be positive");
  if (generation.quantization <= 0 || kMaxRowsPerMeasure % generation.quantization != 0) {
    throw Error("config: quantization must divide 192");
  }
}

std::filesystem::path Config::resolved_cache_dir() const {
  if (!cache_dir.empty()) return cache_dir;
  if (const char* env = std::getenv(kCacheEnv); env != nullptr && *env != '\0') return env;
  return kDefaultCacheDir;
}

}  // namespace choreo::app
