// Copyright 2026 The deception-marl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DECEPTION_MATCHING_HPP
#define DECEPTION_MATCHING_HPP

#include <cstddef>
#include <vector>

namespace deception::metrics {

/// Square cost matrix, row-major. Rows are agents, columns landmarks.
struct CostMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * n + col]; }
};

struct Matching {
  std::vector<std::size_t> permutation;  // row -> column
  double total_cost = 0.0;               // summed in row order
  double mean_cost = 0.0;
};

/// Minimum-cost perfect matching (Hungarian method with potentials, O(n^3)).
/// Among optimal assignments the lexicographically smallest permutation wins;
/// costs within 1e-12 relative of the optimum count as ties.
/// Throws std::invalid_argument for non-square, negative or non-finite input.
Matching min_cost_matching(const CostMatrix& cost);

/// Convenience overload taking the dimension explicitly; values.size() must be rows*cols.
Matching min_cost_matching(std::size_t rows, std::size_t cols, const std::vector<double>& values);

}  // namespace deception::metrics

#endif  // DECEPTION_MATCHING_HPP
