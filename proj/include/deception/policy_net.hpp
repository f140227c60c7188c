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

// Shared-parameter attention policy for the good team.
//
// Per agent:  U = f_a(self state)
//             E = attention pool of f_e(landmark rel. pos, target flag), query from U
//             O = attention pool of f_o(adversary rel. pos), query from U (zero if none)
//             h = [U ; E ; O]
// Team:       K, V, Q = W_K h, W_V h, W_Q h
//             m_i = sum_{j != i} softmax_j(K_i . Q_j / sqrt(3H)) V_j
//             h' = tanh(W_u [h ; m] + b_u)
// Heads:      logits = W_pi h' + b_pi (5 actions), value = w_v . h' + b_v
//
// Every dimension is independent of how many agents, landmarks or opponents
// are present, so one parameter set evaluates any team size.

#ifndef DECEPTION_POLICY_NET_HPP
#define DECEPTION_POLICY_NET_HPP

#include "deception/diffgraph.hpp"
#include "deception/env.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace deception::policy {

inline constexpr std::size_t kSelfDim = 4;
inline constexpr std::size_t kEntityDim = 3;
inline constexpr std::size_t kOpponentDim = 2;
inline constexpr std::size_t kNumActions = env::kNumActions;

struct NetworkConfig {
  std::size_t hidden = 64;
  /// Init std of the policy head relative to 1/sqrt(fan_in).
  double policy_head_scale = 0.01;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Parameter block order; the names are the checkpoint block names.
enum Block : std::size_t {
  kAgentW1, kAgentB1, kAgentW2, kAgentB2,
  kEntityW1, kEntityB1, kEntityW2, kEntityB2,
  kEntityQuery, kEntityKey, kEntityValue,
  kOpponentW1, kOpponentB1, kOpponentW2, kOpponentB2,
  kOpponentQuery, kOpponentKey, kOpponentValue,
  kCommKey, kCommValue, kCommQuery,
  kUpdateW, kUpdateB,
  kPolicyW, kPolicyB,
  kValueW, kValueB,
  kNumBlocks
};

const char* block_name(Block b) noexcept;

struct PolicyParams {
  NetworkConfig config;
  diffgraph::ParameterSet tensors;

  /// Scaled-Gaussian init (std 1/sqrt(fan_in)), zero biases.
  static PolicyParams initialize(const NetworkConfig& config, std::uint64_t seed);

  diffgraph::Tensor& block(Block b) { return tensors[b]; }
  const diffgraph::Tensor& block(Block b) const { return tensors[b]; }
  std::size_t latent_dim() const noexcept { return 3 * config.hidden; }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Parameter leaves of one graph, indexed by Block.
struct BoundParams {
  std::vector<diffgraph::Var> vars;

  diffgraph::Var operator[](Block b) const { return vars[b]; }
};

BoundParams bind(diffgraph::Graph& graph, const PolicyParams& params);

/// Observations of `teams` teams with `agents` agents each, flattened
/// team-major: agent a of team t is row t*agents + a.
struct TeamBatch {
  std::size_t teams = 0;
  std::size_t agents = 0;
  std::size_t entities = 0;   // landmarks per agent
  std::size_t opponents = 0;  // opponents per agent
  diffgraph::Tensor self;      // [teams*agents, 4]
  diffgraph::Tensor entity;    // [teams*agents*entities, 3]
  diffgraph::Tensor opponent;  // [teams*agents*opponents, 2]

  std::size_t rows() const noexcept { return teams * agents; }
};

/// Throws std::invalid_argument when teams differ in size or observation layout.
TeamBatch make_batch(std::span<const std::vector<env::Observation>> teams);
TeamBatch make_batch(const std::vector<env::Observation>& team);

// Graph-level building blocks. All are batched over rows.

/// U = tanh(W2 tanh(W1 x + b1) + b2).
diffgraph::Var encode_self(const BoundParams& p, diffgraph::Var self_states);
/// E: one row per agent; `entities` holds `per_agent` rows per agent.
/// Throws diffgraph::ArgumentError when per_agent == 0.
diffgraph::Var encode_environment(const BoundParams& p, diffgraph::Var self_codes, diffgraph::Var entities,
                                  std::size_t per_agent);
/// O: like encode_environment over opponents; zero rows when per_agent == 0.
diffgraph::Var encode_opponents(const BoundParams& p, diffgraph::Var self_codes, diffgraph::Var opponents,
                                std::size_t per_agent);
/// One round of message passing inside each block of `team_size` rows.
diffgraph::Var communicate(const BoundParams& p, diffgraph::Var latents, std::size_t team_size);
diffgraph::Var action_logits(const BoundParams& p, diffgraph::Var latents);
diffgraph::Var value_estimate(const BoundParams& p, diffgraph::Var latents);

struct TeamForward {
  diffgraph::Var self_codes;   // U
  diffgraph::Var env_codes;    // E
  diffgraph::Var opp_codes;    // O
  diffgraph::Var latents;      // h = [U ; E ; O]
  diffgraph::Var updated;      // h after communication
  diffgraph::Var logits;       // [rows, 5]
  diffgraph::Var log_probs;    // [rows, 5]
  diffgraph::Var values;       // [rows, 1]
};

TeamForward forward_team(diffgraph::Graph& graph, const BoundParams& p, const TeamBatch& batch);

struct ActionDistribution {
  std::array<double, kNumActions> logits{};
  std::array<double, kNumActions> probabilities{};

  double log_prob(std::size_t action) const;
  std::size_t argmax() const;
  /// Inverse-CDF draw from one uniform variate.
  std::size_t sample(std::mt19937_64& rng) const;
};

struct TeamOutput {
  std::vector<ActionDistribution> actions;  // one per row
  std::vector<double> values;
};

/// Convenience: forward without keeping the graph.
TeamOutput evaluate(const PolicyParams& params, const TeamBatch& batch);
TeamOutput evaluate_team(const PolicyParams& params, const std::vector<env::Observation>& team);

}  // namespace deception::policy

#endif  // DECEPTION_POLICY_NET_HPP
