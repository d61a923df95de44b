#include <algorithm>
#include <cmath>

#include "choreo/error.h"
#include "choreo/log.h"
#include "choreo/metrics.h"
#include "choreo/nn/optim.h"
#include "choreo/placement.h"

namespace choreo::placement {

namespace {

struct Position {
  int song = 0;
  int frame = 0;
};

bool in_range(const ChartTarget& c, int frame) { return frame >= c.first_frame && frame <= c.last_frame; }

std::size_t total_charts(std::span<const PlacementSong> songs) {
  std::size_t n = 0;
  for (const PlacementSong& s : songs) n += s.charts.size();
  return n;
}

Condition condition_of(const ChartTarget& c) { return {c.difficulty, c.author}; }

std::vector<Position> positions(std::span<const PlacementSong> songs) {
  std::vector<Position> out;
  for (int s = 0; s < static_cast<int>(songs.size()); ++s) {
    const PlacementSong& song = songs[static_cast<std::size_t>(s)];
    for (int f = 0; f < song.features.frames; ++f) {
      if (std::any_of(song.charts.begin(), song.charts.end(), [f](const ChartTarget& c) { return in_range(c, f); })) {
        out.push_back({s, f});
      }
    }
  }
  return out;
}

/// One framewise minibatch: distinct positions plus one row per chart covering each position.
struct FrameBatch {
  std::vector<Position> positions;
};

std::vector<FrameBatch> frame_batches(std::span<const PlacementSong> songs, std::vector<Position> all, int batch_size,
                                      nn::Rng& rng) {
  rng.shuffle(all);
  std::vector<FrameBatch> batches;
  FrameBatch current;
  int rows = 0;
  for (const Position& p : all) {
    current.positions.push_back(p);
    for (const ChartTarget& c : songs[static_cast<std::size_t>(p.song)].charts) rows += in_range(c, p.frame) ? 1 : 0;
    if (rows >= batch_size) {
      batches.push_back(std::move(current));
      current = {};
      rows = 0;
    }
  }
  if (!current.positions.empty()) batches.push_back(std::move(current));
  return batches;
}

double frame_step(Model& model, std::span<const PlacementSong> songs, const FrameBatch& batch, nn::Rng& rng,
                  const nn::SgdConfig& sgd) {
  const int n = static_cast<int>(batch.positions.size());
  nn::Tensor windows({n, kNumChannels, kContextFrames, kNumBands});
  std::vector<int> window_of;
  std::vector<Condition> conditions;
  std::vector<float> labels;
  for (int i = 0; i < n; ++i) {
    const Position& p = batch.positions[static_cast<std::size_t>(i)];
    const PlacementSong& song = songs[static_cast<std::size_t>(p.song)];
    encode_window(song.features, p.frame, windows.data() + static_cast<std::size_t>(i) * kFeatureValues);
    for (const ChartTarget& c : song.charts) {
      if (!in_range(c, p.frame)) continue;
      window_of.push_back(i);
      conditions.push_back(condition_of(c));
      labels.push_back(c.labels[static_cast<std::size_t>(p.frame)]);
    }
  }
  nn::Tape tape;
  const nn::Var logits = model.frame_logits(tape, windows, window_of, conditions, true, rng);
  const nn::Var loss = nn::sigmoid_bce_with_logits(tape, logits, labels);
  tape.backward(loss);
  auto params = model.parameters().all();
  nn::clip_and_step(params, sgd);
  model.parameters().zero_grad();
  return tape.value(loss)[0];
}

struct Chunk {
  int song = 0;
  int start = 0;
  int length = 0;
};

std::vector<std::vector<Chunk>> chunk_batches(std::span<const PlacementSong> songs, int unroll, int batch_size,
                                              nn::Rng& rng) {
  std::vector<Chunk> chunks;
  for (int s = 0; s < static_cast<int>(songs.size()); ++s) {
    const PlacementSong& song = songs[static_cast<std::size_t>(s)];
    if (song.charts.empty()) continue;
    int lo = song.features.frames, hi = -1;
    for (const ChartTarget& c : song.charts) {
      lo = std::min(lo, c.first_frame);
      hi = std::max(hi, c.last_frame);
    }
    const int length = std::min(unroll, song.features.frames);
    // A random phase each epoch varies where chunk boundaries fall.
    const int phase = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(length)));
    for (int start = lo - phase; start <= hi; start += length) {
      chunks.push_back({s, std::clamp(start, 0, song.features.frames - length), length});
    }
  }
  rng.shuffle(chunks);
  std::vector<std::vector<Chunk>> batches;
  std::vector<Chunk> current;
  int rows = 0;
  for (const Chunk& c : chunks) {
    if (!current.empty() && current.front().length != c.length) {
      batches.push_back(std::move(current));
      current = {};
      rows = 0;
    }
    current.push_back(c);
    rows += c.length * static_cast<int>(songs[static_cast<std::size_t>(c.song)].charts.size());
    if (rows >= batch_size) {
      batches.push_back(std::move(current));
      current = {};
      rows = 0;
    }
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

double sequence_step(Model& model, std::span<const PlacementSong> songs, const std::vector<Chunk>& batch, nn::Rng& rng,
                     const nn::SgdConfig& sgd) {
  const int steps = batch.front().length;
  nn::Tensor windows({static_cast<int>(batch.size()) * steps, kNumChannels, kContextFrames, kNumBands});
  struct Sequence {
    int chunk;
    const ChartTarget* chart;
  };
  std::vector<Sequence> seqs;
  for (int k = 0; k < static_cast<int>(batch.size()); ++k) {
    const Chunk& c = batch[static_cast<std::size_t>(k)];
    const PlacementSong& song = songs[static_cast<std::size_t>(c.song)];
    for (int t = 0; t < steps; ++t) {
      encode_window(song.features, c.start + t, windows.data() + (static_cast<std::size_t>(k) * steps + t) * kFeatureValues);
    }
    for (const ChartTarget& chart : song.charts) {
      if (chart.first_frame <= c.start + steps - 1 && chart.last_frame >= c.start) seqs.push_back({k, &chart});
    }
  }
  if (seqs.empty()) return std::nan("");
  std::vector<int> chunk_of;
  std::vector<Condition> conditions;
  for (const Sequence& s : seqs) {
    chunk_of.push_back(s.chunk);
    conditions.push_back(condition_of(*s.chart));
  }
  const int n = static_cast<int>(seqs.size());
  std::vector<float> labels(static_cast<std::size_t>(steps * n)), weights(labels.size());
  for (int t = 0; t < steps; ++t) {
    for (int s = 0; s < n; ++s) {
      const int frame = batch[static_cast<std::size_t>(seqs[static_cast<std::size_t>(s)].chunk)].start + t;
      const ChartTarget& chart = *seqs[static_cast<std::size_t>(s)].chart;
      const std::size_t row = static_cast<std::size_t>(t * n + s);
      labels[row] = chart.labels[static_cast<std::size_t>(frame)];
      weights[row] = in_range(chart, frame) ? 1.0f : 0.0f;
    }
  }
  nn::Tape tape;
  RecurrentState state;
  const nn::Var logits = model.sequence_logits(tape, windows, steps, chunk_of, conditions, state, true, rng);
  const nn::Var loss = nn::sigmoid_bce_with_logits(tape, logits, labels, weights);
  tape.backward(loss);
  auto params = model.parameters().all();
  nn::clip_and_step(params, sgd);
  model.parameters().zero_grad();
  return tape.value(loss)[0];
}

}  // namespace

double mean_auc_pr(const Model& model, std::span<const PlacementSong> songs) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const PlacementSong& song : songs) {
    std::vector<Condition> conditions;
    for (const ChartTarget& c : song.charts) conditions.push_back(condition_of(c));
    if (conditions.empty()) continue;
    const auto probs = predict_song(model, song.features, conditions);
    for (std::size_t k = 0; k < song.charts.size(); ++k) {
      const ChartTarget& c = song.charts[k];
      const auto scores = std::span<const float>(probs[k]).subspan(static_cast<std::size_t>(c.first_frame),
                                                                   static_cast<std::size_t>(c.last_frame - c.first_frame + 1));
      if (auto auc = metrics::auc_pr(scores, c.range_labels())) {
        total += *auc;
        ++counted;
      } else {
        log().warn("{}: no positive frames; excluded from AUC-PR", c.name);
      }
    }
  }
  return counted > 0 ? total / static_cast<double>(counted) : 0.0;
}

TrainResult train(Model& model, std::span<const PlacementSong> train_songs, std::span<const PlacementSong> valid_songs,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  if (total_charts(train_songs) == 0) throw Error("placement training split is empty");
  if (total_charts(valid_songs) == 0) throw Error("placement validation split is empty");
  const nn::SgdConfig sgd{cfg.learning_rate, cfg.clip_norm, cfg.batch_size};
  sgd.validate();
  if (cfg.unroll <= 0 || cfg.max_epochs <= 0 || cfg.patience <= 0) throw Error("unroll, max_epochs and patience must be positive");

  nn::Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 1);
  const bool recurrent = model.architecture().kind == ModelKind::CLSTM;

  const double prevalence = std::clamp(label_prevalence(train_songs), 1e-4, 1.0 - 1e-4);
  model.output_bias().value[0] = static_cast<float>(std::log(prevalence / (1.0 - prevalence)));

  const std::vector<Position> all_positions = recurrent ? std::vector<Position>{} : positions(train_songs);
  TrainResult result;
  std::vector<nn::Tensor> best = model.parameters().snapshot();
  result.best_valid_auc_pr = -1.0;
  int since_best = 0;
  bool first = true;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    int batches_run = 0;
    auto run = [&](auto&& batch_list, auto&& step) {
      std::size_t limit = batch_list.size();
      if (cfg.max_batches_per_epoch > 0) limit = std::min(limit, static_cast<std::size_t>(cfg.max_batches_per_epoch));
      for (std::size_t b = 0; b < limit; ++b) {
        const double loss = step(batch_list[b]);
        if (std::isnan(loss)) continue;
        if (first) {
          result.first_batch_loss = loss;
          first = false;
        }
        loss_sum += loss;
        ++batches_run;
      }
    };
    if (recurrent) {
      run(chunk_batches(train_songs, cfg.unroll, cfg.batch_size, rng),
          [&](const std::vector<Chunk>& b) { return sequence_step(model, train_songs, b, rng, sgd); });
    } else {
      run(frame_batches(train_songs, all_positions, cfg.batch_size, rng),
          [&](const FrameBatch& b) { return frame_step(model, train_songs, b, rng, sgd); });
    }

    EpochLog entry{epoch, batches_run > 0 ? loss_sum / batches_run : 0.0, mean_auc_pr(model, valid_songs)};
    result.history.push_back(entry);
    log().info("placement {} epoch {}: train loss {:.5f}, valid AUC-PR {:.4f}", to_string(model.architecture().kind), epoch,
               entry.train_loss, entry.valid_auc_pr);
    if (on_epoch) on_epoch(entry);
    if (entry.valid_auc_pr > result.best_valid_auc_pr) {
      result.best_valid_auc_pr = entry.valid_auc_pr;
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

}  // namespace choreo::placement
