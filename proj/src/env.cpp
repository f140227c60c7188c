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

#include "deception/env.hpp"

#include "deception/matching.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace deception::env {

Vec2 action_acceleration(std::size_t action) {
  switch (action) {
    case 0: return {0.0, 0.0};
    case 1: return {1.0, 0.0};
    case 2: return {-1.0, 0.0};
    case 3: return {0.0, 1.0};
    case 4: return {0.0, -1.0};
    default: throw std::invalid_argument("invalid action index " + std::to_string(action));
  }
}

WorldState reset(const EnvConfig& config, std::uint64_t seed, std::size_t n_good) {
  if (n_good < 2) throw std::invalid_argument("reset: need at least 2 good agents, got " + std::to_string(n_good));
  WorldState state;
  state.rng.seed(seed);
  const double half = config.arena_half_width;
  std::uniform_real_distribution<double> coord(-half, half);
  auto sample = [&] {
    const double x = coord(state.rng);
    const double y = coord(state.rng);
    return Vec2{x, y};
  };

  state.landmark_positions.reserve(n_good);
  while (state.landmark_positions.size() < n_good) {
    const Vec2 candidate = sample();
    const bool separated = std::all_of(state.landmark_positions.begin(), state.landmark_positions.end(),
                                       [&](Vec2 l) { return distance(l, candidate) >= config.landmark_min_separation; });
    if (separated) state.landmark_positions.push_back(candidate);
  }
  for (std::size_t i = 0; i < n_good; ++i) state.good_positions.push_back(sample());
  state.good_velocities.assign(n_good, Vec2{});
  state.adversary_position = sample();
  state.adversary_velocity = Vec2{};
  state.target_index = std::uniform_int_distribution<std::size_t>(0, n_good - 1)(state.rng);
  state.step = 0;
  return state;
}

Kinematics integrate(Vec2 position, Vec2 velocity, Vec2 accel, const Dynamics& dynamics) {
  const Vec2 a{std::clamp(accel.x, -1.0, 1.0), std::clamp(accel.y, -1.0, 1.0)};
  Vec2 v = velocity * (1.0 - dynamics.damping) + a * (dynamics.force_scale * dynamics.dt);
  const double speed = v.norm();
  if (speed > dynamics.max_speed) v = v * (dynamics.max_speed / speed);
  return {position + v * dynamics.dt, v};
}

std::size_t heuristic_choice(const WorldState& state) {
  if (state.landmark_positions.empty()) throw std::invalid_argument("heuristic_choice: no landmarks");
  std::size_t best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < state.n_landmarks(); ++l) {
    double nearest = std::numeric_limits<double>::infinity();
    for (Vec2 agent : state.good_positions) nearest = std::min(nearest, distance(agent, state.landmark_positions[l]));
    if (nearest < best_distance) {
      best_distance = nearest;
      best = l;
    }
  }
  return best;
}

Vec2 heuristic_adversary(const WorldState& state, double deadband) {
  const Vec2 offset = state.landmark_positions[heuristic_choice(state)] - state.adversary_position;
  const double length = offset.norm();
  if (length < deadband) return {};
  if (length > 1.0) return offset * (1.0 / length);
  return offset;
}

double bipartite_distance(const WorldState& state) {
  const std::size_t n = state.n_good();
  if (n == 0) return 0.0;
  if (state.n_landmarks() != n) {
    throw std::invalid_argument("bipartite_distance: " + std::to_string(n) + " agents vs " +
                                std::to_string(state.n_landmarks()) + " landmarks");
  }
  metrics::CostMatrix cost{n, std::vector<double>(n * n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < n; ++l) {
      cost.values[i * n + l] = distance(state.good_positions[i], state.landmark_positions[l]);
    }
  }
  return metrics::min_cost_matching(cost).mean_cost;
}

double coverage_reward(const WorldState& state) { return -bipartite_distance(state); }

double deception_reward(const WorldState& state, double clip) {
  return std::clamp(distance(state.adversary_position, state.target()), 0.0, clip);
}

TeamReward team_reward(const WorldState& state, const curriculum::RewardWeights& weights, double clip) {
  TeamReward r;
  r.coverage = coverage_reward(state);
  r.deception = deception_reward(state, clip);
  r.weighted_total = weights.coverage * r.coverage + weights.deception * r.deception;
  return r;
}

StepResult step(WorldState& state, std::span<const std::size_t> good_actions,
                const curriculum::RewardWeights& weights, const EnvConfig& config) {
  if (state.step >= config.episode_length) {
    throw std::invalid_argument("step: episode already finished at step " + std::to_string(state.step));
  }
  if (good_actions.size() != state.n_good()) {
    throw std::invalid_argument("step: expected " + std::to_string(state.n_good()) + " actions, got " +
                                std::to_string(good_actions.size()));
  }
  std::vector<Vec2> accels;
  accels.reserve(good_actions.size());
  for (std::size_t a : good_actions) accels.push_back(action_acceleration(a));

  StepResult result;
  result.adversary_choice = heuristic_choice(state);
  const Vec2 adversary_accel = heuristic_adversary(state, config.adversary_deadband);

  for (std::size_t i = 0; i < state.n_good(); ++i) {
    const Kinematics k = integrate(state.good_positions[i], state.good_velocities[i], accels[i], config.dynamics);
    state.good_positions[i] = k.position;
    state.good_velocities[i] = k.velocity;
  }
  const Kinematics adv =
      integrate(state.adversary_position, state.adversary_velocity, adversary_accel, config.dynamics);
  state.adversary_position = adv.position;
  state.adversary_velocity = adv.velocity;

  state.step += 1;
  result.reward = team_reward(state, weights, config.deception_clip);
  result.done = state.step == config.episode_length;
  return result;
}

Observation observe(const WorldState& state, std::size_t agent) {
  const Vec2 p = state.good_positions.at(agent);
  const Vec2 v = state.good_velocities.at(agent);
  Observation obs;
  obs.self_state = {p.x, p.y, v.x, v.y};
  obs.entity_relpos.reserve(state.n_landmarks());
  obs.target_flags.reserve(state.n_landmarks());
  for (std::size_t l = 0; l < state.n_landmarks(); ++l) {
    obs.entity_relpos.push_back(state.landmark_positions[l] - p);
    obs.target_flags.push_back(l == state.target_index ? 1 : 0);
  }
  obs.opponent_relpos.push_back(state.adversary_position - p);
  return obs;
}

std::vector<Observation> observe_all(const WorldState& state) {
  std::vector<Observation> out;
  out.reserve(state.n_good());
  for (std::size_t i = 0; i < state.n_good(); ++i) out.push_back(observe(state, i));
  return out;
}

}  // namespace deception::env
