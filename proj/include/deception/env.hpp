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

// Two-dimensional deception world: N good agents, N landmarks (one of them
// the target), and a single heuristic adversary. Everything moves under
// damped double-integrator dynamics.

#ifndef DECEPTION_ENV_HPP
#define DECEPTION_ENV_HPP

#include "deception/reward_weights.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace deception::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }

  friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Discrete accelerations. Index order is part of the checkpoint contract.
enum class Action : std::uint8_t { Noop = 0, PosX = 1, NegX = 2, PosY = 3, NegY = 4 };
inline constexpr std::size_t kNumActions = 5;

/// Unit acceleration for an action index; throws std::invalid_argument when
/// the index is not one of the five actions.
Vec2 action_acceleration(std::size_t action);

struct Dynamics {
  double dt = 0.1;
  double damping = 0.25;
  double force_scale = 5.0;
  double max_speed = 1.3;

  friend bool operator==(const Dynamics&, const Dynamics&) = default;
};

struct EnvConfig {
  std::size_t n_good = 2;
  Dynamics dynamics;
  std::size_t episode_length = 50;
  double landmark_min_separation = 0.3;
  double arena_half_width = 1.0;
  double deception_clip = 4.0;
  double adversary_deadband = 1e-6;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct WorldState {
  std::vector<Vec2> good_positions;
  std::vector<Vec2> good_velocities;
  Vec2 adversary_position;
  Vec2 adversary_velocity;
  std::vector<Vec2> landmark_positions;
  std::size_t target_index = 0;
  std::size_t step = 0;
  std::mt19937_64 rng;

  std::size_t n_good() const noexcept { return good_positions.size(); }
  std::size_t n_landmarks() const noexcept { return landmark_positions.size(); }
  Vec2 target() const { return landmark_positions.at(target_index); }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// One good agent's egocentric view.
struct Observation {
  std::array<double, 4> self_state{};  // px, py, vx, vy
  std::vector<Vec2> entity_relpos;     // landmark - own position
  std::vector<std::uint8_t> target_flags;
  std::vector<Vec2> opponent_relpos;   // adversary - own position

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct TeamReward {
  double coverage = 0.0;
  double deception = 0.0;
  double weighted_total = 0.0;
};

struct StepResult {
  TeamReward reward;
  bool done = false;
  /// Landmark the heuristic adversary steered toward during this step.
  std::size_t adversary_choice = 0;
};

/// Fresh episode fully determined by `seed`. Landmarks keep the configured
/// minimum separation. Throws std::invalid_argument when n_good < 2.
WorldState reset(const EnvConfig& config, std::uint64_t seed, std::size_t n_good);
inline WorldState reset(const EnvConfig& config, std::uint64_t seed) { return reset(config, seed, config.n_good); }

struct Kinematics {
  Vec2 position;
  Vec2 velocity;
};

/// vel' = vel (1 - damping) + clip(accel, -1, 1) force_scale dt, limited to
/// max_speed; pos' = pos + vel' dt.
Kinematics integrate(Vec2 position, Vec2 velocity, Vec2 accel, const Dynamics& dynamics);

/// Landmark whose nearest good agent is closest; lowest index on ties.
std::size_t heuristic_choice(const WorldState& state);
/// Acceleration toward heuristic_choice(), clipped to unit norm. Zero inside
/// the deadband.
Vec2 heuristic_adversary(const WorldState& state, double deadband = 1e-6);

/// Mean agent-landmark distance under the minimum-cost perfect matching.
double bipartite_distance(const WorldState& state);
/// -bipartite_distance(state).
double coverage_reward(const WorldState& state);
/// Adversary-to-target distance clipped to [0, clip].
double deception_reward(const WorldState& state, double clip = 4.0);
TeamReward team_reward(const WorldState& state, const curriculum::RewardWeights& weights, double clip = 4.0);

/// Advances every entity by one step. The adversary acts on the pre-step
/// state; rewards are evaluated on the post-step state. Throws
/// std::invalid_argument for a wrong action count, an invalid action index, or
/// a finished episode.
StepResult step(WorldState& state, std::span<const std::size_t> good_actions,
                const curriculum::RewardWeights& weights, const EnvConfig& config);

Observation observe(const WorldState& state, std::size_t agent);
std::vector<Observation> observe_all(const WorldState& state);

}  // namespace deception::env

#endif  // DECEPTION_ENV_HPP
