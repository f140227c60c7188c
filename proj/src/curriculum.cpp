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

#include "deception/curriculum.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace deception::curriculum {

bool stage1_converged(std::span<const double> history, const ConvergenceCriterion& criterion) {
  if (criterion.patience == 0 || history.size() < criterion.patience) return false;
  const auto recent = history.last(criterion.patience);
  return std::all_of(recent.begin(), recent.end(), [&](double d) { return d <= criterion.threshold; });
}

RewardWeights weights_for_update(int stage, double target_deception, std::uint64_t update, std::uint64_t planned,
                                 double ramp_fraction) {
  if (stage == static_cast<int>(Stage::Coverage)) return {1.0, 0.0};
  if (stage != static_cast<int>(Stage::Deception)) {
    throw std::invalid_argument("weights_for_update: unknown stage " + std::to_string(stage));
  }
  if (!(target_deception >= 0.0 && target_deception <= 1.0)) {
    throw std::invalid_argument("weights_for_update: deception weight must lie in [0, 1]");
  }
  const double ramp_updates = ramp_fraction * static_cast<double>(planned);
  if (ramp_updates <= 0.0 || static_cast<double>(update) >= ramp_updates) {
    return RewardWeights::from_deception(target_deception);
  }
  return RewardWeights::from_deception(target_deception * static_cast<double>(update) / ramp_updates);
}

}  // namespace deception::curriculum
