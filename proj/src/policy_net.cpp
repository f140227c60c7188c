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

#include "deception/policy_net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace deception::policy {

using diffgraph::Graph;
using diffgraph::Tensor;
using diffgraph::Var;

const char* block_name(Block b) noexcept {
  switch (b) {
    case kAgentW1: return "agent.l1.weight";
    case kAgentB1: return "agent.l1.bias";
    case kAgentW2: return "agent.l2.weight";
    case kAgentB2: return "agent.l2.bias";
    case kEntityW1: return "entity.l1.weight";
    case kEntityB1: return "entity.l1.bias";
    case kEntityW2: return "entity.l2.weight";
    case kEntityB2: return "entity.l2.bias";
    case kEntityQuery: return "entity.attn.query";
    case kEntityKey: return "entity.attn.key";
    case kEntityValue: return "entity.attn.value";
    case kOpponentW1: return "opponent.l1.weight";
    case kOpponentB1: return "opponent.l1.bias";
    case kOpponentW2: return "opponent.l2.weight";
    case kOpponentB2: return "opponent.l2.bias";
    case kOpponentQuery: return "opponent.attn.query";
    case kOpponentKey: return "opponent.attn.key";
    case kOpponentValue: return "opponent.attn.value";
    case kCommKey: return "comm.key";
    case kCommValue: return "comm.value";
    case kCommQuery: return "comm.query";
    case kUpdateW: return "comm.update.weight";
    case kUpdateB: return "comm.update.bias";
    case kPolicyW: return "policy.weight";
    case kPolicyB: return "policy.bias";
    case kValueW: return "value.weight";
    case kValueB: return "value.bias";
    case kNumBlocks: break;
  }
  return "unknown";
}

PolicyParams PolicyParams::initialize(const NetworkConfig& config, std::uint64_t seed) {
  if (config.hidden == 0) throw std::invalid_argument("network hidden width must be positive");
  const std::size_t h = config.hidden;
  const std::size_t latent = 3 * h;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  PolicyParams p;
  p.config = config;
  auto weight = [&](Block b, std::size_t out, std::size_t in, double gain = 1.0) {
    Tensor t({out, in});
    const double stddev = gain / std::sqrt(static_cast<double>(in));
    for (double& v : t.values) v = normal(rng) * stddev;
    p.tensors.add(block_name(b), std::move(t));
  };
  auto bias = [&](Block b, std::size_t out) { p.tensors.add(block_name(b), Tensor({out})); };

  weight(kAgentW1, h, kSelfDim);
  bias(kAgentB1, h);
  weight(kAgentW2, h, h);
  bias(kAgentB2, h);
  weight(kEntityW1, h, kEntityDim);
  bias(kEntityB1, h);
  weight(kEntityW2, h, h);
  bias(kEntityB2, h);
  weight(kEntityQuery, h, h);
  weight(kEntityKey, h, h);
  weight(kEntityValue, h, h);
  weight(kOpponentW1, h, kOpponentDim);
  bias(kOpponentB1, h);
  weight(kOpponentW2, h, h);
  bias(kOpponentB2, h);
  weight(kOpponentQuery, h, h);
  weight(kOpponentKey, h, h);
  weight(kOpponentValue, h, h);
  weight(kCommKey, latent, latent);
  weight(kCommValue, latent, latent);
  weight(kCommQuery, latent, latent);
  weight(kUpdateW, latent, 2 * latent);
  bias(kUpdateB, latent);
  weight(kPolicyW, kNumActions, latent, config.policy_head_scale);
  bias(kPolicyB, kNumActions);
  weight(kValueW, 1, latent);
  bias(kValueB, 1);
  return p;
}

BoundParams bind(Graph& graph, const PolicyParams& params) {
  if (params.tensors.size() != kNumBlocks) {
    throw std::invalid_argument("policy parameters have " + std::to_string(params.tensors.size()) +
                                " blocks, expected " + std::to_string(static_cast<std::size_t>(kNumBlocks)));
  }
  return BoundParams{graph.bind(params.tensors)};
}

TeamBatch make_batch(std::span<const std::vector<env::Observation>> teams) {
  TeamBatch batch;
  batch.teams = teams.size();
  if (teams.empty()) throw std::invalid_argument("make_batch: no teams");
  batch.agents = teams.front().size();
  if (batch.agents == 0) throw std::invalid_argument("make_batch: empty team");
  const env::Observation& first = teams.front().front();
  batch.entities = first.entity_relpos.size();
  batch.opponents = first.opponent_relpos.size();
  const std::size_t rows = batch.rows();
  batch.self = Tensor({rows, kSelfDim});
  batch.entity = Tensor({rows * batch.entities, kEntityDim});
  batch.opponent = Tensor({rows * batch.opponents, kOpponentDim});

  std::size_t r = 0;
  for (const auto& team : teams) {
    if (team.size() != batch.agents) throw std::invalid_argument("make_batch: teams differ in size");
    for (const env::Observation& obs : team) {
      if (obs.entity_relpos.size() != batch.entities || obs.target_flags.size() != batch.entities ||
          obs.opponent_relpos.size() != batch.opponents) {
        throw std::invalid_argument("make_batch: observations differ in entity or opponent count");
      }
      std::copy(obs.self_state.begin(), obs.self_state.end(), batch.self.values.begin() + r * kSelfDim);
      for (std::size_t l = 0; l < batch.entities; ++l) {
        double* e = &batch.entity.values[(r * batch.entities + l) * kEntityDim];
        e[0] = obs.entity_relpos[l].x;
        e[1] = obs.entity_relpos[l].y;
        e[2] = obs.target_flags[l] ? 1.0 : 0.0;
      }
      for (std::size_t o = 0; o < batch.opponents; ++o) {
        double* e = &batch.opponent.values[(r * batch.opponents + o) * kOpponentDim];
        e[0] = obs.opponent_relpos[o].x;
        e[1] = obs.opponent_relpos[o].y;
      }
      ++r;
    }
  }
  return batch;
}

TeamBatch make_batch(const std::vector<env::Observation>& team) {
  return make_batch(std::span<const std::vector<env::Observation>>(&team, 1));
}

namespace {

Var two_layer(const BoundParams& p, Var x, Block w1, Block b1, Block w2, Block b2) {
  return diffgraph::tanh(diffgraph::affine(diffgraph::tanh(diffgraph::affine(x, p[w1], p[b1])), p[w2], p[b2]));
}

Var pool(const BoundParams& p, Var self_codes, Var members, std::size_t per_agent, Block query, Block key,
         Block value) {
  const Var q = diffgraph::linear(self_codes, p[query]);
  const Var k = diffgraph::linear(members, p[key]);
  const Var v = diffgraph::linear(members, p[value]);
  return diffgraph::attention_pool(q, k, v, per_agent);
}

}  // namespace

Var encode_self(const BoundParams& p, Var self_states) {
  return two_layer(p, self_states, kAgentW1, kAgentB1, kAgentW2, kAgentB2);
}

Var encode_environment(const BoundParams& p, Var self_codes, Var entities, std::size_t per_agent) {
  if (per_agent == 0) throw diffgraph::ArgumentError("encode_environment: no entities");
  const Var codes = two_layer(p, entities, kEntityW1, kEntityB1, kEntityW2, kEntityB2);
  return pool(p, self_codes, codes, per_agent, kEntityQuery, kEntityKey, kEntityValue);
}

Var encode_opponents(const BoundParams& p, Var self_codes, Var opponents, std::size_t per_agent) {
  if (per_agent == 0) {
    const Tensor& u = self_codes.value();
    Tensor zeros(u.rank() <= 1 ? std::vector<std::size_t>{u.cols()} : std::vector<std::size_t>{u.rows(), u.cols()});
    return self_codes.graph->constant(std::move(zeros));
  }
  const Var codes = two_layer(p, opponents, kOpponentW1, kOpponentB1, kOpponentW2, kOpponentB2);
  return pool(p, self_codes, codes, per_agent, kOpponentQuery, kOpponentKey, kOpponentValue);
}

Var communicate(const BoundParams& p, Var latents, std::size_t team_size) {
  if (team_size == 0) throw diffgraph::ArgumentError("communicate: empty team");
  const Var keys = diffgraph::linear(latents, p[kCommKey]);
  const Var values = diffgraph::linear(latents, p[kCommValue]);
  const Var queries = diffgraph::linear(latents, p[kCommQuery]);
  const Var messages = diffgraph::peer_attention(keys, queries, values, team_size);
  const std::array<Var, 2> joined{latents, messages};
  return diffgraph::tanh(diffgraph::affine(diffgraph::concat(joined), p[kUpdateW], p[kUpdateB]));
}

Var action_logits(const BoundParams& p, Var latents) { return diffgraph::affine(latents, p[kPolicyW], p[kPolicyB]); }

Var value_estimate(const BoundParams& p, Var latents) { return diffgraph::affine(latents, p[kValueW], p[kValueB]); }

TeamForward forward_team(Graph& graph, const BoundParams& p, const TeamBatch& batch) {
  TeamForward f;
  const Var self_states = graph.constant(batch.self);
  f.self_codes = encode_self(p, self_states);
  f.env_codes = encode_environment(p, f.self_codes, graph.constant(batch.entity), batch.entities);
  f.opp_codes = encode_opponents(p, f.self_codes, graph.constant(batch.opponent), batch.opponents);
  const std::array<Var, 3> parts{f.self_codes, f.env_codes, f.opp_codes};
  f.latents = diffgraph::concat(parts);
  f.updated = communicate(p, f.latents, batch.agents);
  f.logits = action_logits(p, f.updated);
  f.log_probs = diffgraph::log_softmax(f.logits);
  f.values = value_estimate(p, f.updated);
  return f;
}

double ActionDistribution::log_prob(std::size_t action) const {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - mx);
  return logits.at(action) - mx - std::log(total);
}

std::size_t ActionDistribution::argmax() const {
  return static_cast<std::size_t>(std::max_element(probabilities.begin(), probabilities.end()) -
                                  probabilities.begin());
}

std::size_t ActionDistribution::sample(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    cumulative += probabilities[a];
    if (u < cumulative) return a;
  }
  return kNumActions - 1;
}

TeamOutput evaluate(const PolicyParams& params, const TeamBatch& batch) {
  Graph graph;
  const BoundParams bound = bind(graph, params);
  const TeamForward f = forward_team(graph, bound, batch);
  const Tensor& logits = f.logits.value();
  const Tensor& log_probs = f.log_probs.value();
  TeamOutput out;
  out.actions.resize(batch.rows());
  out.values.resize(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    ActionDistribution& d = out.actions[r];
    double total = 0.0;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      d.logits[a] = logits.at(r, a);
      d.probabilities[a] = std::exp(log_probs.at(r, a));
      total += d.probabilities[a];
    }
    for (double& pr : d.probabilities) pr /= total;
    out.values[r] = f.values.value()[r];
  }
  return out;
}

TeamOutput evaluate_team(const PolicyParams& params, const std::vector<env::Observation>& team) {
  return evaluate(params, make_batch(team));
}

}  // namespace deception::policy
