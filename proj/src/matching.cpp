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

#include "deception/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace deception::metrics {

namespace {

// Shortest-augmenting-path Hungarian method over the sub-matrix picked by
// `rows` x `cols` (equal sizes). Returns the column chosen for each row.
std::vector<std::size_t> hungarian(const CostMatrix& cost, const std::vector<std::size_t>& rows,
                                   const std::vector<std::size_t>& cols) {
  const std::size_t n = rows.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; index 0 is the virtual source column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t j = 1; j <= n; ++j) assignment[owner[j] - 1] = j - 1;
  return assignment;
}

double assignment_cost(const CostMatrix& cost, const std::vector<std::size_t>& rows,
                       const std::vector<std::size_t>& cols, const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) total += cost.at(rows[k], cols[assignment[k]]);
  return total;
}

double optimal_cost(const CostMatrix& cost, const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>& cols) {
  if (rows.empty()) return 0.0;
  return assignment_cost(cost, rows, cols, hungarian(cost, rows, cols));
}

}  // namespace

Matching min_cost_matching(const CostMatrix& cost) {
  const std::size_t n = cost.n;
  if (cost.values.size() != n * n) {
    throw std::invalid_argument("min_cost_matching: matrix is not square (" + std::to_string(cost.values.size()) +
                                " entries for n = " + std::to_string(n) + ")");
  }
  for (double c : cost.values) {
    if (!std::isfinite(c) || c < 0.0) {
      throw std::invalid_argument("min_cost_matching: costs must be finite and nonnegative");
    }
  }
  Matching result;
  if (n == 0) return result;

  std::vector<std::size_t> all(n);
  for (std::size_t k = 0; k < n; ++k) all[k] = k;
  const double best = optimal_cost(cost, all, all);
  const double tolerance = 1e-12 * std::max(1.0, std::abs(best));

  // Fix rows in order, each to the smallest column that still admits an
  // optimal completion. This yields the lexicographically smallest optimum.
  std::vector<char> taken(n, 0);
  double prefix = 0.0;
  result.permutation.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> rest_rows;
    for (std::size_t r = i + 1; r < n; ++r) rest_rows.push_back(r);
    std::size_t chosen = n;
    double chosen_total = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      std::vector<std::size_t> rest_cols;
      for (std::size_t c = 0; c < n; ++c) {
        if (!taken[c] && c != j) rest_cols.push_back(c);
      }
      const double total = prefix + cost.at(i, j) + optimal_cost(cost, rest_rows, rest_cols);
      if (total <= best + tolerance) {
        chosen = j;
        break;
      }
      if (total < chosen_total) {
        chosen_total = total;
        chosen = j;
      }
    }
    taken[chosen] = 1;
    result.permutation[i] = chosen;
    prefix += cost.at(i, chosen);
  }
  for (std::size_t i = 0; i < n; ++i) result.total_cost += cost.at(i, result.permutation[i]);
  result.mean_cost = result.total_cost / static_cast<double>(n);
  return result;
}

Matching min_cost_matching(std::size_t rows, std::size_t cols, const std::vector<double>& values) {
  if (rows != cols) {
    throw std::invalid_argument("min_cost_matching: matrix is not square (" + std::to_string(rows) + "x" +
                                std::to_string(cols) + ")");
  }
  if (values.size() != rows * cols) {
    throw std::invalid_argument("min_cost_matching: expected " + std::to_string(rows * cols) + " entries, got " +
                                std::to_string(values.size()));
  }
  return min_cost_matching(CostMatrix{rows, values});
}

}  // namespace deception::metrics
