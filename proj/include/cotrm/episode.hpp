#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cotrm/grammar.hpp"

namespace cotrm {

// One synthetic preference input: a hidden D x 2 quality table whose column
// sums never tie, observed through noisy features. The observed vector is
// the flattened Q/9 plus noise, then a mode flag (1 for direct, 0 for cot)
// and a constant 1, giving length 2D + 2.
struct PreferenceEpisode {
  std::int64_t id = 0;
  std::vector<std::array<int, 2>> qualities;  // D rows, entries 0..9
  std::vector<double> observed_features;      // length 2D + 2
  int ground_truth = 0;                       // argmax of column sums, 1 or 2
  Mode mode = Mode::cot;

  bool operator==(const PreferenceEpisode&) const = default;
};

}  // namespace cotrm
