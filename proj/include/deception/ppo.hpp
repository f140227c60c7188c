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

// Clipped-surrogate PPO for the shared team policy.
//
// Rollouts are stored per team-step; every agent of a step shares the team
// reward and the team value (mean of the per-agent critic outputs), so the
// advantage of a step is replicated across its agents.

#ifndef DECEPTION_PPO_HPP
#define DECEPTION_PPO_HPP

#include "deception/diffgraph.hpp"
#include "deception/env.hpp"
#include "deception/policy_net.hpp"
#include "deception/reward_weights.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deception::ppo {

struct TrainConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  std::size_t epochs = 4;
  std::size_t minibatch = 256;  // agent-steps
  std::size_t horizon = 250;    // steps per environment instance per update
  std::size_t n_envs = 8;
  std::uint64_t total_steps = 2'000'000;  // environment steps, summed over instances
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 3e-4;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  double reward_scale = 0.1;   // applied to team rewards before advantage estimation only
  std::uint64_t seed = 1;

  std::uint64_t steps_per_update() const noexcept { return static_cast<std::uint64_t>(horizon) * n_envs; }
  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Raised when an update produces a non-finite loss; carries the reference
/// of the last checkpoint known to be good (may be empty).
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, std::string last_good);
  const std::string& last_good_checkpoint() const noexcept { return last_good_; }

 private:
  std::string last_good_;
};

struct RolloutBatch {
  std::size_t n_envs = 0;
  std::size_t horizon = 0;
  std::size_t agents = 0;
  std::size_t entities = 0;
  std::size_t opponents = 0;

  // Team-step s = env * horizon + t. Per-agent rows are s * agents + a.
  policy::TeamBatch observations;
  std::vector<std::size_t> actions;
  std::vector<double> log_probs;
  std::vector<double> values;       // per-agent critic output
  std::vector<double> rewards;      // per-agent copy of the team reward
  std::vector<double> team_values;  // per team-step
  std::vector<double> team_rewards;
  std::vector<double> coverage;
  std::vector<double> deception;
  std::vector<curriculum::RewardWeights> weights;
  std::vector<std::uint8_t> dones;
  std::vector<std::size_t> adversary_choices;
  std::vector<std::size_t> target_indices;

  std::vector<double> advantages;  // per agent-row, filled by compute_gae
  std::vector<double> returns;

  std::size_t team_steps() const noexcept { return n_envs * horizon; }
  std::size_t rows() const noexcept { return team_steps() * agents; }
};

/// Runs `n_envs` seeded environments for `horizon` steps each with actions
/// sampled from `params`. `horizon` must be a multiple of the episode length.
RolloutBatch collect_rollouts(const env::EnvConfig& env_config, const policy::PolicyParams& params,
                              const curriculum::RewardWeights& weights, std::size_t horizon, std::size_t n_envs,
                              std::uint64_t seed);

/// Generalized advantage estimation over one trajectory. Episodes end where
/// dones[t] is set; the value after an episode end is zero.
std::vector<double> generalized_advantages(std::span<const double> rewards, std::span<const double> values,
                                           std::span<const std::uint8_t> dones, double gamma, double lambda);

/// Fills advantages (normalized to mean 0, std 1 when `normalize`) and
/// returns = raw advantage + team value. The critic learns returns of the
/// rewards multiplied by `reward_scale`; the logged rewards are untouched.
void compute_gae(RolloutBatch& batch, double gamma, double lambda, bool normalize = true, double reward_scale = 1.0);

/// Inputs of one loss evaluation.
struct Minibatch {
  policy::TeamBatch observations;
  std::vector<std::size_t> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
};

Minibatch gather_minibatch(const RolloutBatch& batch, std::span<const std::size_t> team_steps);

struct LossTerms {
  diffgraph::Var total;
  diffgraph::Var policy;   // -mean(min(rho A, clip(rho) A))
  diffgraph::Var value;    // mean((V - R)^2)
  diffgraph::Var entropy;  // mean entropy of the action distributions
  diffgraph::Var ratio;    // rho per row
  diffgraph::Var log_probs;
};

LossTerms ppo_loss(diffgraph::Graph& graph, const policy::BoundParams& params, const Minibatch& mb,
                   const TrainConfig& config);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  std::size_t optimizer_steps = 0;

  friend bool operator==(const UpdateStats&, const UpdateStats&) = default;
};

/// Epochs of shuffled minibatch optimization; one optimizer step per
/// minibatch. Throws NonFiniteLossError on a NaN/Inf loss.
UpdateStats ppo_update(policy::PolicyParams& params, diffgraph::OptimizerState& optimizer, const RolloutBatch& batch,
                       const TrainConfig& config, std::mt19937_64& rng);

/// Everything that evolves during training.
struct TrainerState {
  policy::PolicyParams params;
  diffgraph::OptimizerState optimizer;
  std::uint64_t global_step = 0;
  std::uint64_t updates = 0;

  static TrainerState fresh(const policy::NetworkConfig& net, const TrainConfig& config);

  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

struct UpdateRecord {
  std::uint64_t update = 0;       // 1-based index within the trainer's lifetime
  std::uint64_t global_step = 0;  // after this update
  curriculum::RewardWeights weights;
  UpdateStats stats;
  double mean_team_reward = 0.0;
  double mean_coverage = 0.0;
  double mean_deception = 0.0;
  double episode_return = 0.0;  // mean undiscounted team return per episode
};

using BatchObserver = std::function<void(const RolloutBatch&)>;

/// One collect / advantage / optimize cycle. `observer` sees the batch after
/// advantage estimation and before optimization.
UpdateRecord train_one_update(TrainerState& state, const env::EnvConfig& env_config, const TrainConfig& config,
                              const curriculum::RewardWeights& weights, const BatchObserver& observer = {});

struct LoopHooks {
  /// Weights for the next update, given updates done so far in this loop and
  /// the planned number of updates.
  std::function<curriculum::RewardWeights(std::uint64_t done, std::uint64_t planned)> weights;
  /// Called after every update; return false to stop early.
  std::function<bool(const UpdateRecord&)> after_update;
  BatchObserver on_batch;
};

/// Runs updates until `steps` more environment steps are consumed (rounded up
/// to whole updates) or a hook asks to stop. Returns the records.
std::vector<UpdateRecord> train_loop(TrainerState& state, const env::EnvConfig& env_config, const TrainConfig& config,
                                     std::uint64_t steps, const LoopHooks& hooks);

}  // namespace deception::ppo

#endif  // DECEPTION_PPO_HPP
