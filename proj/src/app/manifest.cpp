#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "choreo/app.h"
#include "choreo/error.h"
#include "choreo/log.h"
#include "choreo/nn/rng.h"

namespace choreo::app {

namespace {

constexpr int kManifestVersion = 1;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_wav(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".wav";
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void assign_splits(Manifest& m) {
  std::sort(m.entries.begin(), m.entries.end(), [](const ManifestSong& a, const ManifestSong& b) { return a.name < b.name; });
  std::vector<std::size_t> order(m.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  nn::Rng rng(m.seed);
  rng.shuffle(order);
  const auto sizes = split_sizes(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    m.entries[order[k]].split = k < sizes[0] ? Split::Train : k < sizes[0] + sizes[1] ? Split::Valid : Split::Test;
  }
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  throw Error("unknown split '" + name + "'");
}

std::array<std::size_t, 3> split_sizes(std::size_t songs) {
  const std::size_t tenth = songs / 10;
  return {songs - 2 * tenth, tenth, tenth};
}

std::vector<const ManifestSong*> Manifest::songs(Split split, const std::string& purpose) const {
  accesses_.push_back({split, purpose});
  log().info("manifest: {} split read for {}", to_string(split), purpose);
  std::vector<const ManifestSong*> out;
  for (const ManifestSong& s : entries) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = kManifestVersion;
  j["seed"] = seed;
  j["pack_dir"] = pack_dir.generic_string();
  j["normalization"] = normalization.generic_string();
  j["songs"] = nlohmann::ordered_json::array();
  for (const ManifestSong& s : entries) {
    j["songs"].push_back({{"name", s.name},
                          {"split", to_string(s.split)},
                          {"simfile", s.simfile.generic_string()},
                          {"audio", s.audio.generic_string()},
                          {"features", s.features.generic_string()}});
  }
  j["skipped"] = skipped;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != kManifestVersion) throw FormatError("unsupported manifest version");
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.pack_dir = j.at("pack_dir").get<std::string>();
    m.normalization = j.at("normalization").get<std::string>();
    for (const auto& s : j.at("songs")) {
      m.entries.push_back({s.at("name").get<std::string>(), s.at("simfile").get<std::string>(),
                           s.at("audio").get<std::string>(), s.at("features").get<std::string>(),
                           parse_split(s.at("split").get<std::string>())});
    }
    m.skipped = j.at("skipped").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

void Manifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << to_json();
}

Manifest Manifest::load(const std::filesystem::path& path) { return from_json(read_text(path)); }

namespace {

struct PackFile {
  std::string name;
  std::filesystem::path simfile;
  std::optional<Simfile> parsed;
  std::string error;
  std::filesystem::path audio;
};

std::vector<PackFile> list_pack(const std::filesystem::path& pack_dir) {
  if (!std::filesystem::is_directory(pack_dir)) throw Error("pack directory " + pack_dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(pack_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".sm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::filesystem::path, int> per_dir;
  for (const auto& f : files) ++per_dir[f.parent_path()];

  std::vector<PackFile> out;
  for (const auto& sm : files) {
    PackFile pf;
    const auto dir = sm.parent_path();
    const auto rel = std::filesystem::relative(per_dir[dir] > 1 ? dir / sm.stem() : dir, pack_dir);
    pf.name = rel.empty() || rel == "." ? sm.stem().string() : rel.generic_string();
    pf.simfile = sm;
    try {
      pf.parsed = parse_simfile(read_text(sm));
    } catch (const Error& e) {
      pf.error = e.what();
      out.push_back(std::move(pf));
      continue;
    }
    const std::string& music = pf.parsed->audio_path;
    if (!music.empty() && is_wav(music) && std::filesystem::exists(dir / music)) {
      pf.audio = dir / music;
    } else {
      std::vector<std::filesystem::path> wavs;
      for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && is_wav(e.path())) wavs.push_back(e.path());
      }
      if (wavs.size() == 1) pf.audio = wavs.front();
    }
    out.push_back(std::move(pf));
  }
  return out;
}

}  // namespace

Manifest scan_pack(const std::filesystem::path& pack_dir, std::uint64_t seed) {
  Manifest m;
  m.seed = seed;
  m.pack_dir = pack_dir;
  for (const PackFile& pf : list_pack(pack_dir)) {
    if (!pf.parsed) {
      m.skipped.push_back(pf.name + ": " + pf.error);
    } else if (pf.audio.empty()) {
      m.skipped.push_back(pf.name + ": no WAV audio found");
    } else {
      m.entries.push_back({pf.name, pf.simfile, pf.audio, {}, Split::Train});
    }
  }
  assign_splits(m);
  return m;
}

std::vector<SongRecord> pack_records(const std::filesystem::path& pack_dir) {
  std::vector<SongRecord> out;
  for (PackFile& pf : list_pack(pack_dir)) {
    if (!pf.parsed) {
      log().warn("{}: skipped ({})", pf.name, pf.error);
      continue;
    }
    SongRecord r{pf.name, std::move(*pf.parsed), std::nullopt};
    if (!pf.audio.empty()) {
      try {
        const WavData wav = read_wav(pf.audio);
        if (!wav.channels.empty() && wav.sample_rate > 0) {
          r.audio_seconds = static_cast<double>(wav.channels.front().size()) / wav.sample_rate;
        }
      } catch (const Error& e) {
        log().warn("{}: unreadable audio ({})", pf.name, e.what());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

Manifest prepare(const std::filesystem::path& pack_dir, const Config& config) {
  Manifest m = scan_pack(pack_dir, config.seed);
  const auto cache = config.resolved_cache_dir();
  std::filesystem::create_directories(cache / "features");
  std::vector<std::string> failures(m.entries.size());
  parallel_for(m.entries.size(), config.jobs, [&](std::size_t i) {
    ManifestSong& s = m.entries[i];
    const auto size = std::filesystem::file_size(s.audio);
    std::string stem = s.name;
    std::replace(stem.begin(), stem.end(), '/', '_');
    s.features = cache / "features" /
                 (stem + "-" + hex(fnv1a(std::filesystem::absolute(s.audio).generic_string() + ":" + std::to_string(size))) +
                  ".feat");
    if (std::filesystem::exists(s.features)) {
      try {
        read_feature_cache(s.features);
        return;
      } catch (const Error&) {
        log().warn("{}: stale feature cache, recomputing", s.name);
      }
    }
    try {
      write_feature_cache(s.features, compute_mel_spectrogram(load_audio(s.audio)));
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });
  std::vector<ManifestSong> kept;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (failures[i].empty()) {
      kept.push_back(m.entries[i]);
    } else {
      m.skipped.push_back(m.entries[i].name + ": " + failures[i]);
      log().warn("{}: skipped ({})", m.entries[i].name, failures[i]);
    }
  }
  m.entries = std::move(kept);
  if (m.entries.empty()) throw Error("no usable songs in " + pack_dir.string());
  assign_splits(m);

  std::vector<MelSpectrogram> train;
  for (const ManifestSong* s : m.songs(Split::Train, "normalization fit")) train.push_back(read_feature_cache(s->features));
  std::vector<const MelSpectrogram*> ptrs;
  for (const auto& t : train) ptrs.push_back(&t);
  const NormalizationStats stats = fit_normalization(ptrs);
  m.normalization = cache / ("normalization-" + hex(stats.hash()) + ".bin");
  write_normalization(m.normalization, stats);
  return m;
}

std::vector<LoadedSong> load_split(const Manifest& manifest, Split split, const std::string& purpose, const Config& config,
                                   bool with_features) {
  const auto entries = manifest.songs(split, purpose);
  std::vector<LoadedSong> out(entries.size());
  std::optional<NormalizationStats> stats;
  if (with_features) stats = read_normalization(manifest.normalization);
  parallel_for(entries.size(), config.jobs, [&](std::size_t i) {
    LoadedSong& song = out[i];
    song.entry = entries[i];
    song.simfile = parse_simfile(read_text(entries[i]->simfile));
    if (with_features) {
      song.features = read_feature_cache(entries[i]->features);
      apply_normalization(song.features, *stats);
    }
  });
  return out;
}

}  // namespace choreo::app
