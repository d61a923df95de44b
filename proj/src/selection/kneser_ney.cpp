#include <algorithm>
#include <cmath>

#include "binary_io.h"
#include "choreo/error.h"
#include "choreo/selection.h"

namespace choreo::selection {

namespace {

constexpr int kTokenBits = 9;
constexpr std::uint64_t kTokenMask = (1u << kTokenBits) - 1;
constexpr std::uint32_t kKnVersion = 1;

std::vector<int> unpack(std::uint64_t key) {
  const int n = static_cast<int>(key >> 56);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<int>(key & kTokenMask);
    key >>= kTokenBits;
  }
  return out;
}

/// Chen and Goodman's estimates from count-of-counts n1..n4. A value that is undefined or
/// outside (0, k] falls back to k / 2.
std::array<double, 3> estimate_discounts(const std::array<double, 4>& n) {
  std::array<double, 3> d{};
  const double y = n[0] + 2.0 * n[1] > 0.0 ? n[0] / (n[0] + 2.0 * n[1]) : 0.0;
  for (int k = 1; k <= 3; ++k) {
    const double lo = n[static_cast<std::size_t>(k - 1)], hi = n[static_cast<std::size_t>(k)];
    double v = lo > 0.0 ? k - (k + 1) * y * hi / lo : -1.0;
    if (!std::isfinite(v) || v <= 0.0 || v > k) v = 0.5 * k;
    d[static_cast<std::size_t>(k - 1)] = v;
  }
  return d;
}

}  // namespace

std::uint64_t KneserNey::key(std::span<const int> tokens) const {
  std::uint64_t k = 0;
  for (int t : tokens) k = (k << kTokenBits) | static_cast<std::uint64_t>(t);
  return k | (static_cast<std::uint64_t>(tokens.size()) << 56);
}

KneserNey KneserNey::train(const std::vector<std::vector<int>>& sequences, int vocab, int order) {
  if (vocab <= 0 || vocab >= static_cast<int>(kTokenMask)) throw Error("KN vocabulary size out of range");
  if (order < 1 || order > 6) throw Error("KN order must be in 1..6");
  KneserNey lm;
  lm.vocab_ = vocab;
  lm.order_ = order;
  const int start = vocab;

  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> raw(static_cast<std::size_t>(order));
  std::size_t tokens = 0;
  for (const auto& seq : sequences) {
    if (seq.empty() || seq.front() != start) throw Error("KN training sequence must start with START");
    for (std::size_t i = 1; i < seq.size(); ++i) {
      if (seq[i] < 0 || seq[i] >= vocab) throw Error("KN training token " + std::to_string(seq[i]) + " out of range");
      ++tokens;
      for (int n = 1; n <= order && static_cast<std::size_t>(n) <= i + 1; ++n) {
        ++raw[static_cast<std::size_t>(n - 1)][lm.key(std::span<const int>(seq).subspan(i + 1 - n, n))];
      }
    }
  }
  if (tokens == 0) throw Error("KN training corpus is empty");

  lm.counts_.assign(static_cast<std::size_t>(order), {});
  lm.counts_.back() = raw.back();
  for (int n = order - 1; n >= 1; --n) {
    auto& out = lm.counts_[static_cast<std::size_t>(n - 1)];
    for (const auto& [k, c] : raw[static_cast<std::size_t>(n - 1)]) {
      if (unpack(k).front() == start) out[k] = c;
    }
    for (const auto& [k, c] : raw[static_cast<std::size_t>(n)]) {
      const auto g = unpack(k);
      if (g[1] == start) continue;
      ++out[lm.key(std::span<const int>(g).subspan(1))];
    }
  }

  lm.discounts_.clear();
  for (const auto& table : lm.counts_) {
    std::array<double, 4> n{};
    for (const auto& [k, c] : table) {
      if (c >= 1 && c <= 4) n[c - 1] += 1.0;
    }
    lm.discounts_.push_back(estimate_discounts(n));
  }
  lm.finish();
  return lm;
}

void KneserNey::finish() {
  contexts_.assign(static_cast<std::size_t>(order_), {});
  for (int n = 1; n <= order_; ++n) {
    for (const auto& [k, c] : counts_[static_cast<std::size_t>(n - 1)]) {
      if (c == 0) continue;
      const auto g = unpack(k);
      ContextStats& s = contexts_[static_cast<std::size_t>(n - 1)][key(std::span<const int>(g).first(g.size() - 1))];
      s.total += c;
      s.buckets[std::min<std::size_t>(c, 3) - 1] += 1.0;
    }
  }
}

double KneserNey::discount(int n, int count) const {
  if (n < 1 || n > order_) throw Error("KN discount order out of range");
  if (count <= 0) return 0.0;
  return discounts_[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(std::min(count, 3) - 1)];
}

double KneserNey::count(std::span<const int> ngram) const {
  if (ngram.empty() || static_cast<int>(ngram.size()) > order_) return 0.0;
  const auto& table = counts_[ngram.size() - 1];
  const auto it = table.find(key(ngram));
  return it == table.end() ? 0.0 : it->second;
}

double KneserNey::prob_at(std::span<const int> context, int token) const {
  const double lower = context.empty() ? 1.0 / vocab_ : prob_at(context.subspan(1), token);
  const std::size_t n = context.size() + 1;
  const auto& stats = contexts_[n - 1];
  const auto it = stats.find(key(context));
  if (it == stats.end() || it->second.total <= 0.0) return lower;
  std::vector<int> g(context.begin(), context.end());
  g.push_back(token);
  const double c = count(g);
  const auto& d = discounts_[n - 1];
  const ContextStats& s = it->second;
  const double gamma = (d[0] * s.buckets[0] + d[1] * s.buckets[1] + d[2] * s.buckets[2]) / s.total;
  return std::max(c - discount(static_cast<int>(n), static_cast<int>(c)), 0.0) / s.total + gamma * lower;
}

double KneserNey::prob(std::span<const int> context, int token) const {
  if (token < 0 || token >= vocab_) throw Error("KN query token " + std::to_string(token) + " out of range");
  for (int t : context) {
    if (t < 0 || t > vocab_) throw Error("KN context token " + std::to_string(t) + " out of range");
  }
  const std::size_t keep = std::min(context.size(), static_cast<std::size_t>(order_ - 1));
  return prob_at(context.last(keep), token);
}

std::vector<double> KneserNey::distribution(std::span<const int> context) const {
  std::vector<double> out(static_cast<std::size_t>(vocab_));
  for (int t = 0; t < vocab_; ++t) out[static_cast<std::size_t>(t)] = prob(context, t);
  return out;
}

void KneserNey::save(const std::filesystem::path& path) const {
  detail::BinaryWriter w;
  w.put_magic("CHKN");
  w.put<std::uint32_t>(kKnVersion);
  w.put<std::int32_t>(order_);
  w.put<std::int32_t>(vocab_);
  for (const auto& d : discounts_) w.put_array<double>(d);
  for (const auto& table : counts_) {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> entries(table.begin(), table.end());
    std::sort(entries.begin(), entries.end());
    std::vector<std::uint64_t> keys;
    std::vector<std::uint32_t> values;
    for (const auto& [k, c] : entries) {
      keys.push_back(k);
      values.push_back(c);
    }
    w.put_array<std::uint64_t>(keys);
    w.put_array<std::uint32_t>(values);
  }
  w.save(path);
}

KneserNey KneserNey::load(const std::filesystem::path& path) {
  auto r = detail::BinaryReader::open(path);
  r.expect_magic("CHKN");
  r.expect_version(kKnVersion);
  KneserNey lm;
  lm.order_ = r.get<std::int32_t>();
  lm.vocab_ = r.get<std::int32_t>();
  if (lm.order_ < 1 || lm.order_ > 6 || lm.vocab_ <= 0 || lm.vocab_ >= static_cast<int>(kTokenMask)) {
    r.fail("bad order or vocabulary");
  }
  for (int n = 0; n < lm.order_; ++n) {
    const auto d = r.get_array<double>();
    if (d.size() != 3) r.fail("bad discount table");
    lm.discounts_.push_back({d[0], d[1], d[2]});
  }
  for (int n = 0; n < lm.order_; ++n) {
    const auto keys = r.get_array<std::uint64_t>();
    const auto values = r.get_array<std::uint32_t>();
    if (keys.size() != values.size()) r.fail("count table length mismatch");
    auto& table = lm.counts_.emplace_back();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (static_cast<int>(keys[i] >> 56) != n + 1) r.fail("count table key has the wrong order");
      table[keys[i]] = values[i];
    }
  }
  if (!r.at_end()) r.fail("trailing bytes");
  lm.finish();
  return lm;
}

}  // namespace choreo::selection
