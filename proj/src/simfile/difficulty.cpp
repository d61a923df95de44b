#include "choreo/difficulty.h"

#include <algorithm>
#include <cctype>

#include "choreo/error.h"
#include "choreo/log.h"

namespace choreo {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

int known_class(std::string_view name) {
  const std::string n = lower(name);
  for (int k = 0; k < kNumDifficulties; ++k) {
    if (n == lower(kDifficultyNames[static_cast<std::size_t>(k)])) return k;
  }
  if (n == "expert") return 4;
  return -1;
}

}  // namespace

int difficulty_class(std::string_view name, int rating) {
  if (const int k = known_class(name); k >= 0) return k;
  // Rating buckets: 1-2, 3-4, 5-6, 7-8, 9+.
  const int bucket = std::clamp((std::max(rating, 1) - 1) / 2, 0, kNumDifficulties - 1);
  log().warn("unknown difficulty '{}' (rating {}); using {}", name, rating, kDifficultyNames[static_cast<std::size_t>(bucket)]);
  return bucket;
}

int difficulty_index(std::string_view name) {
  const int k = known_class(name);
  if (k < 0) throw Error("unknown difficulty '" + std::string(name) + "'");
  return k;
}

}  // namespace choreo
