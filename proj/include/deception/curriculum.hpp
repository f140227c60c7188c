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

// Two-stage training schedule: coverage-only pretraining until the team
// covers landmarks reliably, then fine-tuning on a weighted mix of coverage
// and deception rewards.

#ifndef DECEPTION_CURRICULUM_HPP
#define DECEPTION_CURRICULUM_HPP

#include "deception/reward_weights.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace deception::curriculum {

struct ConvergenceCriterion {
  double threshold = 0.15;  // mean bipartite distance
  std::size_t patience = 3;  // consecutive evaluations

  friend bool operator==(const ConvergenceCriterion&, const ConvergenceCriterion&) = default;
};

/// True when the last `patience` entries of `history` are all <= threshold.
bool stage1_converged(std::span<const double> history, const ConvergenceCriterion& criterion = {});

enum class Stage : int { Coverage = 1, Deception = 2 };

struct CurriculumPlan {
  ConvergenceCriterion convergence;
  bool stop_on_convergence = true;
  std::uint64_t stage2_steps = 500'000;  // per grid row
  std::vector<double> stage2_deception_weights{0.1, 0.2, 0.3, 0.4};
  double ramp_fraction = 0.1;
  std::size_t eval_every = 10;     // updates between convergence evaluations
  std::size_t eval_episodes = 30;
  /// Team sizes of the stage-2 runs; empty means the stage-1 team size.
  std::vector<std::size_t> agent_schedule;

  friend bool operator==(const CurriculumPlan&, const CurriculumPlan&) = default;
};

/// Stage 1: (1, 0). Stage 2: w_dec ramps linearly from 0 to `target_deception`
/// over the first `ramp_fraction` of the planned updates, then stays there.
/// Throws std::invalid_argument for a stage outside {1, 2} or a target outside [0, 1].
RewardWeights weights_for_update(int stage, double target_deception, std::uint64_t update, std::uint64_t planned,
                                 double ramp_fraction = 0.1);

/// Deception weights at or above this value are reported as expected-unstable.
inline constexpr double kUnstableDeceptionWeight = 0.5;

}  // namespace deception::curriculum

#endif  // DECEPTION_CURRICULUM_HPP
