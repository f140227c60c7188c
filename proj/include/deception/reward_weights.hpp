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

#ifndef DECEPTION_REWARD_WEIGHTS_HPP
#define DECEPTION_REWARD_WEIGHTS_HPP

#include <array>

namespace deception::curriculum {

/// Mixing weights for the team reward. Valid weights are nonnegative and
/// sum to one; construct through from_deception() to get that by design.
struct RewardWeights {
  double coverage = 1.0;
  double deception = 0.0;

  /// (1 - w_dec, w_dec).
  static constexpr RewardWeights from_deception(double w_dec) { return {1.0 - w_dec, w_dec}; }
  constexpr bool valid() const {
    return coverage >= 0.0 && deception >= 0.0 && coverage + deception == 1.0;
  }

  friend constexpr bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

/// Stage-2 weight grid, indices 1..4 in order.
inline constexpr std::array<RewardWeights, 4> kWeightGrid = {{
    {0.9, 0.1},
    {0.8, 0.2},
    {0.7, 0.3},
    {0.6, 0.4},
}};

}  // namespace deception::curriculum

#endif  // DECEPTION_REWARD_WEIGHTS_HPP
