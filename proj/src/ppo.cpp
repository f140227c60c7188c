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

#include "deception/ppo.hpp"

#include "deception/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace deception::ppo {

using diffgraph::Graph;
using diffgraph::Tensor;
using diffgraph::Var;

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("train." + field + ": " + why);
  };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma", "must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) fail("lambda", "must lie in (0, 1]");
  if (!(clip > 0.0 && clip < 1.0)) fail("clip", "must lie in (0, 1)");
  if (epochs == 0) fail("epochs", "must be positive");
  if (minibatch == 0) fail("minibatch", "must be positive");
  if (horizon == 0) fail("horizon", "must be positive");
  if (n_envs == 0) fail("n_envs", "must be positive");
  if (total_steps == 0) fail("total_steps", "must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef", "must be nonnegative");
  if (!(value_coef >= 0.0)) fail("value_coef", "must be nonnegative");
  if (!(reward_scale > 0.0)) fail("reward_scale", "must be positive");
}

NonFiniteLossError::NonFiniteLossError(const std::string& what, std::string last_good)
    : std::runtime_error(what + (last_good.empty() ? std::string() : " (last good checkpoint: " + last_good + ")")),
      last_good_(std::move(last_good)) {}

RolloutBatch collect_rollouts(const env::EnvConfig& env_config, const policy::PolicyParams& params,
                              const curriculum::RewardWeights& weights, std::size_t horizon, std::size_t n_envs,
                              std::uint64_t seed) {
  if (horizon == 0 || horizon % env_config.episode_length != 0) {
    throw std::invalid_argument("collect_rollouts: horizon " + std::to_string(horizon) +
                                " is not a positive multiple of the episode length " +
                                std::to_string(env_config.episode_length));
  }
  if (n_envs == 0) throw std::invalid_argument("collect_rollouts: need at least one environment");

  std::vector<env::WorldState> worlds;
  std::vector<std::size_t> episodes(n_envs, 0);
  worlds.reserve(n_envs);
  for (std::size_t e = 0; e < n_envs; ++e) {
    worlds.push_back(env::reset(env_config, derive_seed(seed, {kStreamEpisode, e, 0})));
  }
  std::mt19937_64 action_rng(derive_seed(seed, {kStreamAction}));

  RolloutBatch batch;
  batch.n_envs = n_envs;
  batch.horizon = horizon;
  batch.agents = env_config.n_good;
  const std::size_t A = batch.agents;
  const std::size_t S = batch.team_steps();

  std::vector<std::vector<env::Observation>> teams(n_envs);
  std::vector<std::size_t> actions(A);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t e = 0; e < n_envs; ++e) teams[e] = env::observe_all(worlds[e]);
    const policy::TeamBatch step_batch = policy::make_batch(teams);
    if (t == 0) {
      batch.entities = step_batch.entities;
      batch.opponents = step_batch.opponents;
      batch.observations.teams = S;
      batch.observations.agents = A;
      batch.observations.entities = batch.entities;
      batch.observations.opponents = batch.opponents;
      batch.observations.self = Tensor({S * A, policy::kSelfDim});
      batch.observations.entity = Tensor({S * A * batch.entities, policy::kEntityDim});
      batch.observations.opponent = Tensor({S * A * batch.opponents, policy::kOpponentDim});
      batch.actions.assign(S * A, 0);
      batch.log_probs.assign(S * A, 0.0);
      batch.values.assign(S * A, 0.0);
      batch.rewards.assign(S * A, 0.0);
      batch.team_values.assign(S, 0.0);
      batch.team_rewards.assign(S, 0.0);
      batch.coverage.assign(S, 0.0);
      batch.deception.assign(S, 0.0);
      batch.weights.assign(S, weights);
      batch.dones.assign(S, 0);
      batch.adversary_choices.assign(S, 0);
      batch.target_indices.assign(S, 0);
    }
    const policy::TeamOutput out = policy::evaluate(params, step_batch);

    for (std::size_t e = 0; e < n_envs; ++e) {
      const std::size_t s = e * horizon + t;
      auto copy_rows = [&](const Tensor& from, Tensor& to, std::size_t rows_per_agent) {
        const std::size_t width = from.cols() * rows_per_agent * A;
        std::copy_n(from.values.begin() + static_cast<std::ptrdiff_t>(e * width), width,
                    to.values.begin() + static_cast<std::ptrdiff_t>(s * width));
      };
      copy_rows(step_batch.self, batch.observations.self, 1);
      copy_rows(step_batch.entity, batch.observations.entity, batch.entities);
      copy_rows(step_batch.opponent, batch.observations.opponent, batch.opponents);

      double team_value = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        const policy::ActionDistribution& dist = out.actions[e * A + a];
        actions[a] = dist.sample(action_rng);
        batch.actions[s * A + a] = actions[a];
        batch.log_probs[s * A + a] = dist.log_prob(actions[a]);
        batch.values[s * A + a] = out.values[e * A + a];
        team_value += out.values[e * A + a];
      }
      batch.team_values[s] = team_value / static_cast<double>(A);
      batch.target_indices[s] = worlds[e].target_index;

      const env::StepResult result = env::step(worlds[e], actions, weights, env_config);
      batch.team_rewards[s] = result.reward.weighted_total;
      batch.coverage[s] = result.reward.coverage;
      batch.deception[s] = result.reward.deception;
      batch.dones[s] = result.done ? 1 : 0;
      batch.adversary_choices[s] = result.adversary_choice;
      for (std::size_t a = 0; a < A; ++a) batch.rewards[s * A + a] = result.reward.weighted_total;

      if (result.done) {
        episodes[e] += 1;
        worlds[e] = env::reset(env_config, derive_seed(seed, {kStreamEpisode, e, episodes[e]}));
      }
    }
  }
  return batch;
}

std::vector<double> generalized_advantages(std::span<const double> rewards, std::span<const double> values,
                                           std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("generalized_advantages: rewards, values and dones differ in length");
  }
  std::vector<double> adv(n, 0.0);
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const bool terminal = dones[t] != 0;
    const double next_value = (terminal || t + 1 == n) ? 0.0 : values[t + 1];
    const double delta = rewards[t] + gamma * next_value - values[t];
    running = delta + (terminal ? 0.0 : gamma * lambda * running);
    adv[t] = running;
  }
  return adv;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda, bool normalize, double reward_scale) {
  const std::size_t A = batch.agents;
  const std::size_t H = batch.horizon;
  std::vector<double> scaled(batch.team_rewards);
  for (double& r : scaled) r *= reward_scale;
  std::vector<double> team_adv(batch.team_steps(), 0.0);
  for (std::size_t e = 0; e < batch.n_envs; ++e) {
    const std::size_t off = e * H;
    const auto adv = generalized_advantages(std::span(scaled).subspan(off, H),
                                            std::span(batch.team_values).subspan(off, H),
                                            std::span(batch.dones).subspan(off, H), gamma, lambda);
    std::copy(adv.begin(), adv.end(), team_adv.begin() + static_cast<std::ptrdiff_t>(off));
  }
  batch.advantages.assign(batch.rows(), 0.0);
  batch.returns.assign(batch.rows(), 0.0);
  for (std::size_t s = 0; s < batch.team_steps(); ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      batch.advantages[s * A + a] = team_adv[s];
      batch.returns[s * A + a] = team_adv[s] + batch.team_values[s];
    }
  }
  if (!normalize || batch.advantages.empty()) return;
  const double n = static_cast<double>(batch.advantages.size());
  const double mean = std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / n);
  for (double& a : batch.advantages) a = (a - mean) / (stddev + 1e-8);
}

Minibatch gather_minibatch(const RolloutBatch& batch, std::span<const std::size_t> team_steps) {
  const std::size_t A = batch.agents;
  const std::size_t L = batch.entities;
  const std::size_t M = batch.opponents;
  const std::size_t R = team_steps.size() * A;
  Minibatch mb;
  mb.observations.teams = team_steps.size();
  mb.observations.agents = A;
  mb.observations.entities = L;
  mb.observations.opponents = M;
  mb.observations.self = Tensor({R, policy::kSelfDim});
  mb.observations.entity = Tensor({R * L, policy::kEntityDim});
  mb.observations.opponent = Tensor({R * M, policy::kOpponentDim});
  mb.actions.reserve(R);
  mb.old_log_probs.reserve(R);
  mb.advantages.reserve(R);
  mb.returns.reserve(R);
  auto copy_block = [](const Tensor& from, Tensor& to, std::size_t src_row, std::size_t dst_row, std::size_t nrows) {
    const std::size_t w = from.cols();
    std::copy_n(from.values.begin() + static_cast<std::ptrdiff_t>(src_row * w), nrows * w,
                to.values.begin() + static_cast<std::ptrdiff_t>(dst_row * w));
  };
  for (std::size_t k = 0; k < team_steps.size(); ++k) {
    const std::size_t s = team_steps[k];
    copy_block(batch.observations.self, mb.observations.self, s * A, k * A, A);
    copy_block(batch.observations.entity, mb.observations.entity, s * A * L, k * A * L, A * L);
    copy_block(batch.observations.opponent, mb.observations.opponent, s * A * M, k * A * M, A * M);
    for (std::size_t a = 0; a < A; ++a) {
      mb.actions.push_back(batch.actions[s * A + a]);
      mb.old_log_probs.push_back(batch.log_probs[s * A + a]);
      mb.advantages.push_back(batch.advantages[s * A + a]);
      mb.returns.push_back(batch.returns[s * A + a]);
    }
  }
  return mb;
}

LossTerms ppo_loss(Graph& graph, const policy::BoundParams& params, const Minibatch& mb, const TrainConfig& config) {
  const policy::TeamForward f = policy::forward_team(graph, params, mb.observations);
  const std::size_t R = mb.actions.size();
  LossTerms terms;
  terms.log_probs = diffgraph::pick(f.log_probs, mb.actions);
  const Var old_lp = graph.constant(Tensor::vector(mb.old_log_probs));
  const Var adv = graph.constant(Tensor::vector(mb.advantages));
  terms.ratio = diffgraph::exp(diffgraph::sub(terms.log_probs, old_lp));
  const Var surr1 = diffgraph::mul(terms.ratio, adv);
  const Var surr2 = diffgraph::mul(diffgraph::clip(terms.ratio, 1.0 - config.clip, 1.0 + config.clip), adv);
  terms.policy = diffgraph::scale(diffgraph::mean(diffgraph::minimum(surr1, surr2)), -1.0);

  const Var targets = graph.constant(Tensor({R, 1}, mb.returns));
  terms.value = diffgraph::mean(diffgraph::square(diffgraph::sub(f.values, targets)));

  const Var probs = diffgraph::softmax(f.logits);
  terms.entropy = diffgraph::scale(diffgraph::mean(diffgraph::row_sum(diffgraph::mul(probs, f.log_probs))), -1.0);

  terms.total = diffgraph::sub(diffgraph::add(terms.policy, diffgraph::scale(terms.value, config.value_coef)),
                               diffgraph::scale(terms.entropy, config.entropy_coef));
  return terms;
}

UpdateStats ppo_update(policy::PolicyParams& params, diffgraph::OptimizerState& optimizer, const RolloutBatch& batch,
                       const TrainConfig& config, std::mt19937_64& rng) {
  if (batch.advantages.size() != batch.rows()) throw std::invalid_argument("ppo_update: batch has no advantages");
  optimizer.config.learning_rate = config.learning_rate;
  const std::size_t S = batch.team_steps();
  const std::size_t per_mb = std::max<std::size_t>(1, config.minibatch / std::max<std::size_t>(1, batch.agents));
  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), std::size_t{0});

  UpdateStats stats;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < S; start += per_mb) {
      const std::size_t count = std::min(per_mb, S - start);
      const Minibatch mb = gather_minibatch(batch, std::span(order).subspan(start, count));
      Graph graph;
      const policy::BoundParams bound = policy::bind(graph, params);
      const LossTerms terms = ppo_loss(graph, bound, mb, config);
      const double loss = terms.total.value()[0];
      if (!std::isfinite(loss)) {
        throw NonFiniteLossError("ppo_update: non-finite loss at epoch " + std::to_string(epoch), "");
      }

      const Tensor& ratio = terms.ratio.value();
      const Tensor& new_lp = terms.log_probs.value();
      double kl = 0.0;
      double clipped = 0.0;
      for (std::size_t r = 0; r < ratio.size(); ++r) {
        kl += mb.old_log_probs[r] - new_lp[r];
        if (std::abs(ratio[r] - 1.0) > config.clip) clipped += 1.0;
      }
      stats.approx_kl += kl / static_cast<double>(ratio.size());
      stats.clip_fraction += clipped / static_cast<double>(ratio.size());
      stats.policy_loss += terms.policy.value()[0];
      stats.value_loss += terms.value.value()[0];
      stats.entropy += terms.entropy.value()[0];

      graph.backward(terms.total);
      diffgraph::ParameterSet grads = graph.gradients(params.tensors, bound.vars);
      double sq = 0.0;
      for (std::size_t b = 0; b < grads.size(); ++b) {
        for (double g : grads[b].values) sq += g * g;
      }
      const double norm = std::sqrt(sq);
      stats.grad_norm += norm;
      if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) {
        const double factor = config.max_grad_norm / norm;
        for (std::size_t b = 0; b < grads.size(); ++b) {
          for (double& g : grads[b].values) g *= factor;
        }
      }
      diffgraph::optimizer_step(params.tensors, grads, optimizer);
      stats.optimizer_steps += 1;
    }
  }
  if (stats.optimizer_steps > 0) {
    const double n = static_cast<double>(stats.optimizer_steps);
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.entropy /= n;
    stats.approx_kl /= n;
    stats.clip_fraction /= n;
    stats.grad_norm /= n;
  }
  return stats;
}

TrainerState TrainerState::fresh(const policy::NetworkConfig& net, const TrainConfig& config) {
  TrainerState st;
  st.params = policy::PolicyParams::initialize(net, derive_seed(config.seed, {kStreamInit}));
  diffgraph::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  st.optimizer = diffgraph::OptimizerState::for_params(st.params.tensors, adam);
  return st;
}

UpdateRecord train_one_update(TrainerState& state, const env::EnvConfig& env_config, const TrainConfig& config,
                              const curriculum::RewardWeights& weights, const BatchObserver& observer) {
  const std::uint64_t index = state.updates;
  RolloutBatch batch = collect_rollouts(env_config, state.params, weights, config.horizon, config.n_envs,
                                        derive_seed(config.seed, {kStreamRollout, index}));
  compute_gae(batch, config.gamma, config.lambda, true, config.reward_scale);
  if (observer) observer(batch);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, {kStreamShuffle, index}));

  UpdateRecord rec;
  rec.stats = ppo_update(state.params, state.optimizer, batch, config, shuffle_rng);
  state.updates += 1;
  state.global_step += config.steps_per_update();
  rec.update = state.updates;
  rec.global_step = state.global_step;
  rec.weights = weights;
  const double S = static_cast<double>(batch.team_steps());
  rec.mean_team_reward = std::accumulate(batch.team_rewards.begin(), batch.team_rewards.end(), 0.0) / S;
  rec.mean_coverage = std::accumulate(batch.coverage.begin(), batch.coverage.end(), 0.0) / S;
  rec.mean_deception = std::accumulate(batch.deception.begin(), batch.deception.end(), 0.0) / S;
  const double episodes =
      static_cast<double>(std::count(batch.dones.begin(), batch.dones.end(), std::uint8_t{1}));
  rec.episode_return = episodes > 0 ? rec.mean_team_reward * S / episodes : 0.0;
  return rec;
}

std::vector<UpdateRecord> train_loop(TrainerState& state, const env::EnvConfig& env_config, const TrainConfig& config,
                                     std::uint64_t steps, const LoopHooks& hooks) {
  config.validate();
  const std::uint64_t per_update = config.steps_per_update();
  const std::uint64_t planned = (steps + per_update - 1) / per_update;
  std::vector<UpdateRecord> records;
  for (std::uint64_t done = 0; done < planned; ++done) {
    const curriculum::RewardWeights w = hooks.weights ? hooks.weights(done, planned) : curriculum::RewardWeights{};
    records.push_back(train_one_update(state, env_config, config, w, hooks.on_batch));
    if (hooks.after_update && !hooks.after_update(records.back())) break;
  }
  return records;
}

}  // namespace deception::ppo
