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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace m = deception::metrics;

namespace {

// Exhaustive oracle: minimum over all permutations, ties to the
// lexicographically smallest one (std::next_permutation order).
m::Matching brute_force(const m::CostMatrix& c) {
  std::vector<std::size_t> perm(c.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  m::Matching best;
  bool first = true;
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < c.n; ++r) total += c.at(r, perm[r]);
    if (first || total < best.total_cost) {
      best.permutation = perm;
      best.total_cost = total;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

m::CostMatrix random_matrix(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  m::CostMatrix c{n, std::vector<double>(n * n)};
  for (double& v : c.values) v = u(rng);
  return c;
}

}  // namespace

TEST(Matching, IdentityFavorable) {
  const auto r = m::min_cost_matching(m::CostMatrix{2, {0, 1, 1, 0}});
  EXPECT_EQ(r.permutation, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(r.total_cost, 0.0);
}

TEST(Matching, AllEqualPicksLexicographicallySmallest) {
  for (std::size_t n = 1; n <= 6; ++n) {
    const auto r = m::min_cost_matching(m::CostMatrix{n, std::vector<double>(n * n, 0.7)});
    std::vector<std::size_t> ident(n);
    std::iota(ident.begin(), ident.end(), std::size_t{0});
    EXPECT_EQ(r.permutation, ident);
  }
}

TEST(Matching, NonSquareRejected) {
  EXPECT_THROW(m::min_cost_matching(2, 3, std::vector<double>(6, 1.0)), std::invalid_argument);
}

TEST(Matching, NegativeOrNonFiniteRejected) {
  EXPECT_THROW(m::min_cost_matching(m::CostMatrix{2, {0, -1, 1, 0}}), std::invalid_argument);
  EXPECT_THROW(m::min_cost_matching(m::CostMatrix{2, {0, 1.0 / 0.0, 1, 0}}), std::invalid_argument);
}

TEST(Matching, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto c = random_matrix(rng, n);
      const auto got = m::min_cost_matching(c);
      const auto want = brute_force(c);
      ASSERT_EQ(got.total_cost, want.total_cost) << "n=" << n << " trial=" << trial;
      ASSERT_EQ(got.permutation, want.permutation);
      ASSERT_DOUBLE_EQ(got.mean_cost, want.total_cost / static_cast<double>(n));
    }
  }
}

TEST(Matching, TiesOnIntegerCostsFollowLexicographicOrder) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> u(0, 2);
  for (std::size_t n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 200; ++trial) {
      m::CostMatrix c{n, std::vector<double>(n * n)};
      for (double& v : c.values) v = u(rng);
      const auto got = m::min_cost_matching(c);
      const auto want = brute_force(c);
      ASSERT_EQ(got.total_cost, want.total_cost);
      ASSERT_EQ(got.permutation, want.permutation) << "n=" << n << " trial=" << trial;
    }
  }
}

TEST(Matching, PermutationIsBijection) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = m::min_cost_matching(random_matrix(rng, 5));
    std::vector<std::size_t> sorted = r.permutation;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  }
}
