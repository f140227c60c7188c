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

#include "deception/metrics.hpp"
#include "deception/ppo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

namespace dg = deception::diffgraph;
namespace env = deception::env;
namespace policy = deception::policy;
using namespace deception::ppo;
using deception::curriculum::RewardWeights;

namespace {

policy::PolicyParams small_params(std::uint64_t seed, std::size_t hidden = 8) {
  policy::NetworkConfig net;
  net.hidden = hidden;
  net.policy_head_scale = 1.0;
  return policy::PolicyParams::initialize(net, seed);
}

env::EnvConfig env_config(std::size_t n = 2) {
  env::EnvConfig c;
  c.n_good = n;
  return c;
}

Minibatch random_minibatch(std::mt19937_64& rng, const policy::PolicyParams& p, std::size_t teams, std::size_t agents) {
  std::vector<std::vector<env::Observation>> obs;
  for (std::size_t t = 0; t < teams; ++t) obs.push_back(env::observe_all(env::reset(env_config(agents), rng())));
  Minibatch mb;
  mb.observations = policy::make_batch(obs);
  const auto out = policy::evaluate(p, mb.observations);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t r = 0; r < mb.observations.rows(); ++r) {
    const std::size_t a = rng() % policy::kNumActions;
    mb.actions.push_back(a);
    mb.old_log_probs.push_back(out.actions[r].log_prob(a));
    mb.advantages.push_back(n(rng));
    mb.returns.push_back(n(rng));
  }
  return mb;
}

}  // namespace

TEST(Rollouts, HorizonOfOneEpisodeEndsOncePerEnvironment) {
  const auto p = small_params(1);
  const auto cfg = env_config();
  const RolloutBatch b = collect_rollouts(cfg, p, RewardWeights{}, cfg.episode_length, 3, 42);
  ASSERT_EQ(b.team_steps(), 3 * cfg.episode_length);
  for (std::size_t e = 0; e < 3; ++e) {
    for (std::size_t t = 0; t < cfg.episode_length; ++t) {
      EXPECT_EQ(b.dones[e * cfg.episode_length + t], t + 1 == cfg.episode_length ? 1 : 0);
    }
  }
}

TEST(Rollouts, HorizonMustBeMultipleOfEpisodeLength) {
  const auto p = small_params(1);
  EXPECT_THROW(collect_rollouts(env_config(), p, RewardWeights{}, 75, 1, 1), std::invalid_argument);
}

TEST(Rollouts, SameSeedSameBatch) {
  const auto p = small_params(2);
  const auto cfg = env_config(3);
  const RolloutBatch a = collect_rollouts(cfg, p, RewardWeights{0.7, 0.3}, 100, 2, 9);
  const RolloutBatch b = collect_rollouts(cfg, p, RewardWeights{0.7, 0.3}, 100, 2, 9);
  EXPECT_EQ(a.observations.self, b.observations.self);
  EXPECT_EQ(a.observations.entity, b.observations.entity);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.log_probs, b.log_probs);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.team_rewards, b.team_rewards);
  EXPECT_EQ(a.dones, b.dones);
}

TEST(Rollouts, RewardIsSharedByAllAgentsAndLogProbsValid) {
  const auto p = small_params(3);
  const auto cfg = env_config(3);
  const RolloutBatch b = collect_rollouts(cfg, p, RewardWeights{0.6, 0.4}, 100, 2, 10);
  for (std::size_t s = 0; s < b.team_steps(); ++s) {
    for (std::size_t a = 0; a < b.agents; ++a) {
      EXPECT_EQ(b.rewards[s * b.agents + a], b.team_rewards[s]);
      const double lp = b.log_probs[s * b.agents + a];
      EXPECT_TRUE(std::isfinite(lp));
      EXPECT_LE(lp, 0.0);
    }
    EXPECT_EQ(b.team_rewards[s], 0.6 * b.coverage[s] + 0.4 * b.deception[s]);
  }
}

TEST(Gae, SingleStepEpisode) {
  const std::vector<double> r{2.5};
  const std::vector<double> v{0.75};
  const std::vector<std::uint8_t> d{1};
  EXPECT_EQ(generalized_advantages(r, v, d, 0.99, 0.95)[0], 2.5 - 0.75);
}

TEST(Gae, LambdaZeroIsTdError) {
  const std::vector<double> r{1.0, -0.5, 2.0, 0.25};
  const std::vector<double> v{0.3, 0.1, -0.4, 0.8};
  const std::vector<std::uint8_t> d{0, 0, 0, 1};
  const double g = 0.9;
  const auto adv = generalized_advantages(r, v, d, g, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const double next = t + 1 < 4 ? v[t + 1] : 0.0;
    EXPECT_DOUBLE_EQ(adv[t], r[t] + g * next - v[t]);
  }
}

TEST(Gae, LambdaOneHandCase) {
  const std::vector<double> r{1, 1, 1};
  const std::vector<double> v{0, 0, 0};
  const std::vector<std::uint8_t> d{0, 0, 1};
  EXPECT_NEAR(generalized_advantages(r, v, d, 0.9, 1.0)[0], 1 + 0.9 + 0.81, 1e-15);
}

TEST(Gae, TruncatesAtEpisodeBoundary) {
  const std::vector<double> r{1, 100};
  const std::vector<double> v{0, 0};
  const std::vector<std::uint8_t> d{1, 1};
  EXPECT_EQ(generalized_advantages(r, v, d, 0.99, 0.95)[0], 1.0);
}

TEST(Gae, NormalizedAdvantagesAndReturns) {
  const auto p = small_params(4);
  RolloutBatch b = collect_rollouts(env_config(), p, RewardWeights{}, 100, 2, 11);
  RolloutBatch raw = b;
  compute_gae(raw, 0.99, 0.95, false);
  compute_gae(b, 0.99, 0.95, true);
  ASSERT_EQ(b.advantages.size(), b.rows());
  const double n = static_cast<double>(b.advantages.size());
  const double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : b.advantages) var += (a - mean) * (a - mean);
  EXPECT_LT(std::abs(mean), 1e-10);
  EXPECT_NEAR(std::sqrt(var / n), 1.0, 1e-6);
  for (std::size_t s = 0; s < b.team_steps(); ++s) {
    for (std::size_t a = 0; a < b.agents; ++a) {
      const std::size_t row = s * b.agents + a;
      EXPECT_EQ(b.returns[row], raw.advantages[row] + b.team_values[s]);
      EXPECT_EQ(b.advantages[row], b.advantages[s * b.agents]);
    }
  }
}

TEST(Loss, IdenticalPolicyGivesUnitRatio) {
  std::mt19937_64 rng(5);
  const auto p = small_params(5);
  const Minibatch mb = random_minibatch(rng, p, 3, 2);
  dg::Graph g;
  const auto bound = policy::bind(g, p);
  const LossTerms t = ppo_loss(g, bound, mb, TrainConfig{});
  double mean_adv = 0.0;
  for (double a : mb.advantages) mean_adv += a;
  mean_adv /= static_cast<double>(mb.advantages.size());
  for (double r : t.ratio.value().values) EXPECT_NEAR(r, 1.0, 1e-14);
  EXPECT_NEAR(t.policy.value()[0], -mean_adv, 1e-14);
}

TEST(Loss, ClippedContribution) {
  std::mt19937_64 rng(6);
  const auto p = small_params(6);
  Minibatch mb = random_minibatch(rng, p, 1, 2);
  // Row 0: rho = 1.5, A = +1; row 1 contributes nothing.
  mb.old_log_probs[0] -= std::log(1.5);
  mb.advantages = {1.0, 0.0};
  dg::Graph g;
  const auto bound = policy::bind(g, p);
  const LossTerms t = ppo_loss(g, bound, mb, TrainConfig{});
  EXPECT_NEAR(t.ratio.value()[0], 1.5, 1e-12);
  EXPECT_NEAR(t.policy.value()[0], -1.2 / 2.0, 1e-12);
}

TEST(Loss, SurrogateGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  policy::PolicyParams p = small_params(7);
  Minibatch mb = random_minibatch(rng, p, 2, 2);  // 4 samples
  std::normal_distribution<double> n(0.0, 0.3);
  for (double& lp : mb.old_log_probs) lp += n(rng);
  const TrainConfig cfg;
  dg::Graph g;
  const auto bound = policy::bind(g, p);
  g.backward(ppo_loss(g, bound, mb, cfg).total);
  const auto grads = g.gradients(p.tensors, bound.vars);
  double worst = 0.0;
  for (std::size_t b = 0; b < p.tensors.size(); ++b) {
    for (std::size_t i = 0; i < p.tensors[b].size(); i += 7) {
      const double x0 = p.tensors[b][i];
      auto loss = [&] {
        dg::Graph h;
        return ppo_loss(h, policy::bind(h, p), mb, cfg).total.value()[0];
      };
      p.tensors[b][i] = x0 + 1e-5;
      const double up = loss();
      p.tensors[b][i] = x0 - 1e-5;
      const double down = loss();
      p.tensors[b][i] = x0;
      const double num = (up - down) / 2e-5;
      worst = std::max(worst, std::abs(num - grads[b][i]) / std::max({1e-6, std::abs(num), std::abs(grads[b][i])}));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Loss, UnitRatioSurrogateGradientIsVanillaPolicyGradient) {
  std::mt19937_64 rng(8);
  const auto p = small_params(8);
  const Minibatch mb = random_minibatch(rng, p, 3, 2);
  TrainConfig cfg;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  dg::Graph g1;
  const auto b1 = policy::bind(g1, p);
  g1.backward(ppo_loss(g1, b1, mb, cfg).total);
  const auto surrogate = g1.gradients(p.tensors, b1.vars);

  dg::Graph g2;
  const auto b2 = policy::bind(g2, p);
  const auto f = policy::forward_team(g2, b2, mb.observations);
  const dg::Var lp = dg::pick(f.log_probs, mb.actions);
  const dg::Var vanilla = dg::scale(dg::mean(dg::mul(lp, g2.constant(dg::Tensor::vector(mb.advantages)))), -1.0);
  g2.backward(vanilla);
  const auto reference = g2.gradients(p.tensors, b2.vars);
  for (std::size_t b = 0; b < p.tensors.size(); ++b) {
    for (std::size_t i = 0; i < p.tensors[b].size(); ++i) {
      EXPECT_NEAR(surrogate[b][i], reference[b][i], 1e-12 * std::max(1.0, std::abs(reference[b][i])));
    }
  }
}

TEST(Update, OneHorizonIsOneUpdate) {
  TrainConfig cfg;
  cfg.horizon = 50;
  cfg.n_envs = 2;
  cfg.minibatch = 64;
  policy::NetworkConfig net;
  net.hidden = 8;
  TrainerState st = TrainerState::fresh(net, cfg);
  const auto records = train_loop(st, env_config(), cfg, cfg.steps_per_update(), {});
  EXPECT_EQ(records.size(), 1u);
  EXPECT_EQ(st.updates, 1u);
  EXPECT_EQ(st.global_step, 100u);
  EXPECT_EQ(records[0].stats.optimizer_steps, cfg.epochs * ((100 + 31) / 32));
}

TEST(Update, FirstUpdateStatsAreBitIdentical) {
  TrainConfig cfg;
  cfg.horizon = 100;
  cfg.n_envs = 2;
  policy::NetworkConfig net;
  net.hidden = 8;
  auto run = [&] {
    TrainerState st = TrainerState::fresh(net, cfg);
    const auto rec = train_one_update(st, env_config(), cfg, RewardWeights{});
    return std::make_pair(rec.stats, st.params);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Update, StepCounterContinuesAcrossLoops) {
  TrainConfig cfg;
  cfg.horizon = 50;
  cfg.n_envs = 1;
  policy::NetworkConfig net;
  net.hidden = 8;
  TrainerState st = TrainerState::fresh(net, cfg);
  train_loop(st, env_config(), cfg, 100, {});
  const auto second = train_loop(st, env_config(), cfg, 50, {});
  EXPECT_EQ(second.front().update, 3u);
  EXPECT_EQ(second.front().global_step, 150u);
}

TEST(Update, ValidateRejectsBadFields) {
  TrainConfig cfg;
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.clip = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(DeskRun, CoverageImprovesAndKlStaysSmall) {
  // 200k environment steps of coverage-only training with two agents.
  TrainConfig cfg;
  policy::NetworkConfig net;
  net.hidden = 32;
  TrainerState st = TrainerState::fresh(net, cfg);
  const auto ec = env_config();
  deception::metrics::EvalConfig ev;
  std::vector<double> evals{deception::metrics::evaluate(st.params, ec, ev).bipartite_distance.mean};
  double worst_kl = 0.0;
  LoopHooks hooks;
  hooks.after_update = [&](const UpdateRecord& r) {
    worst_kl = std::max(worst_kl, r.stats.approx_kl);
    if (r.update % 20 == 0) evals.push_back(deception::metrics::evaluate(st.params, ec, ev).bipartite_distance.mean);
    return true;
  };
  train_loop(st, ec, cfg, 200'000, hooks);
  ASSERT_EQ(evals.size(), 6u);
  EXPECT_LT(evals.back(), evals.front());
  EXPECT_LT(worst_kl, 0.05);
}
