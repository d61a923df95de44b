#pragma once

#include <array>
#include <string>
#include <string_view>

namespace choreo {

inline constexpr int kNumDifficulties = 5;
inline constexpr std::array<std::string_view, kNumDifficulties> kDifficultyNames = {"Beginner", "Easy", "Medium", "Hard",
                                                                                      "Challenge"};

/// Class index of a chart difficulty. Names match case-insensitively ("Expert" is an alias of
/// Challenge); unknown names fall back to the bucket of the numeric rating, with a warning.
int difficulty_class(std::string_view name, int rating);

/// Inverse of kDifficultyNames; throws Error for an unknown name.
int difficulty_index(std::string_view name);

}  // namespace choreo
