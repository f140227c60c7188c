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

#ifndef DECEPTION_METRICS_HPP
#define DECEPTION_METRICS_HPP

#include "deception/env.hpp"
#include "deception/matching.hpp"
#include "deception/policy_net.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace deception::metrics {

/// Same value as env::bipartite_distance; provided here for evaluation code.
double bipartite_distance(const env::WorldState& state);

struct EvalConfig {
  std::size_t episodes = 30;
  double threshold = 0.1;
  std::uint64_t seed = 20260101;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

/// Per-step record of one evaluation episode (post-step distances).
struct EpisodeTrace {
  std::uint64_t seed = 0;
  std::size_t target_index = 0;
  std::vector<std::size_t> adversary_choices;
  std::vector<double> bipartite;
  std::vector<double> target_distance;
};

/// Steps at which the adversary steered toward the target landmark.
std::size_t target_select_count(const EpisodeTrace& trace);

struct EpisodeMetrics {
  std::uint64_t seed = 0;
  double bipartite_distance = 0.0;        // mean over steps
  std::size_t good_threshold_steps = 0;   // steps with bipartite distance <= threshold
  double target_distance = 0.0;           // mean adversary-target distance
  std::size_t adversary_threshold_steps = 0;
  std::size_t target_select = 0;

  friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

EpisodeMetrics summarize(const EpisodeTrace& trace, double threshold);

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single episode

  friend bool operator==(const Stat&, const Stat&) = default;
};

Stat mean_and_std(std::span<const double> values);

struct MetricsReport {
  Stat bipartite_distance;
  Stat good_threshold_steps;
  Stat target_distance;
  Stat adversary_threshold_steps;
  Stat target_select;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  std::size_t n_good = 0;
  std::vector<EpisodeMetrics> per_episode;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport aggregate(std::vector<EpisodeMetrics> episodes, std::uint64_t seed, std::size_t n_good);

/// Fills `actions[e]` (one index per good agent) for every live world.
using ActionChooser =
    std::function<void(std::span<const env::WorldState> worlds, std::vector<std::vector<std::size_t>>& actions)>;

/// Runs `config.episodes` seeded episodes side by side with actions from
/// `chooser`. Episode k is reset with derive_seed(config.seed, {eval, k}).
std::vector<EpisodeTrace> run_episodes(const env::EnvConfig& env_config, const EvalConfig& config,
                                       const ActionChooser& chooser);

/// Greedy (argmax) actions from the shared policy.
ActionChooser greedy_policy(const policy::PolicyParams& params);
/// Uniformly random actions drawn from `rng`.
ActionChooser random_policy(std::uint64_t seed);

MetricsReport evaluate(const policy::PolicyParams& params, const env::EnvConfig& env_config,
                       const EvalConfig& config);
MetricsReport evaluate_with(const ActionChooser& chooser, const env::EnvConfig& env_config, const EvalConfig& config);

}  // namespace deception::metrics

#endif  // DECEPTION_METRICS_HPP
