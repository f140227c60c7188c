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

#include "deception/seeding.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>

namespace deception::metrics {

double bipartite_distance(const env::WorldState& state) { return env::bipartite_distance(state); }

std::size_t target_select_count(const EpisodeTrace& trace) {
  std::size_t count = 0;
  for (std::size_t choice : trace.adversary_choices) count += choice == trace.target_index ? 1 : 0;
  return count;
}

EpisodeMetrics summarize(const EpisodeTrace& trace, double threshold) {
  EpisodeMetrics m;
  m.seed = trace.seed;
  const double n = static_cast<double>(trace.bipartite.size());
  if (n > 0) {
    m.bipartite_distance = std::accumulate(trace.bipartite.begin(), trace.bipartite.end(), 0.0) / n;
    m.target_distance = std::accumulate(trace.target_distance.begin(), trace.target_distance.end(), 0.0) / n;
  }
  for (double d : trace.bipartite) m.good_threshold_steps += d <= threshold ? 1 : 0;
  for (double d : trace.target_distance) m.adversary_threshold_steps += d <= threshold ? 1 : 0;
  m.target_select = target_select_count(trace);
  return m;
}

Stat mean_and_std(std::span<const double> values) {
  Stat s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / (n - 1.0));
  return s;
}

MetricsReport aggregate(std::vector<EpisodeMetrics> episodes, std::uint64_t seed, std::size_t n_good) {
  MetricsReport r;
  r.episodes = episodes.size();
  r.seed = seed;
  r.n_good = n_good;
  auto column = [&](auto member) {
    std::vector<double> col;
    col.reserve(episodes.size());
    for (const auto& e : episodes) col.push_back(static_cast<double>(e.*member));
    return mean_and_std(col);
  };
  r.bipartite_distance = column(&EpisodeMetrics::bipartite_distance);
  r.good_threshold_steps = column(&EpisodeMetrics::good_threshold_steps);
  r.target_distance = column(&EpisodeMetrics::target_distance);
  r.adversary_threshold_steps = column(&EpisodeMetrics::adversary_threshold_steps);
  r.target_select = column(&EpisodeMetrics::target_select);
  r.per_episode = std::move(episodes);
  return r;
}

std::vector<EpisodeTrace> run_episodes(const env::EnvConfig& env_config, const EvalConfig& config,
                                       const ActionChooser& chooser) {
  if (config.episodes == 0) throw std::invalid_argument("evaluate: need at least one episode");
  std::vector<env::WorldState> worlds;
  std::vector<EpisodeTrace> traces(config.episodes);
  worlds.reserve(config.episodes);
  for (std::size_t k = 0; k < config.episodes; ++k) {
    traces[k].seed = derive_seed(config.seed, {kStreamEval, k});
    worlds.push_back(env::reset(env_config, traces[k].seed));
    traces[k].target_index = worlds.back().target_index;
  }
  const curriculum::RewardWeights weights{};
  std::vector<std::vector<std::size_t>> actions(config.episodes, std::vector<std::size_t>(env_config.n_good, 0));
  for (std::size_t t = 0; t < env_config.episode_length; ++t) {
    chooser(worlds, actions);
    for (std::size_t k = 0; k < config.episodes; ++k) {
      const env::StepResult r = env::step(worlds[k], actions[k], weights, env_config);
      traces[k].adversary_choices.push_back(r.adversary_choice);
      traces[k].bipartite.push_back(-r.reward.coverage);
      traces[k].target_distance.push_back(env::distance(worlds[k].adversary_position, worlds[k].target()));
    }
  }
  return traces;
}

ActionChooser greedy_policy(const policy::PolicyParams& params) {
  return [&params](std::span<const env::WorldState> worlds, std::vector<std::vector<std::size_t>>& actions) {
    std::vector<std::vector<env::Observation>> teams;
    teams.reserve(worlds.size());
    for (const auto& w : worlds) teams.push_back(env::observe_all(w));
    const policy::TeamOutput out = policy::evaluate(params, policy::make_batch(teams));
    const std::size_t agents = teams.front().size();
    for (std::size_t e = 0; e < worlds.size(); ++e) {
      for (std::size_t a = 0; a < agents; ++a) actions[e][a] = out.actions[e * agents + a].argmax();
    }
  };
}

ActionChooser random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](std::span<const env::WorldState> worlds, std::vector<std::vector<std::size_t>>& actions) {
    std::uniform_int_distribution<std::size_t> pick(0, env::kNumActions - 1);
    for (std::size_t e = 0; e < worlds.size(); ++e) {
      for (auto& a : actions[e]) a = pick(*rng);
    }
  };
}

MetricsReport evaluate_with(const ActionChooser& chooser, const env::EnvConfig& env_config, const EvalConfig& config) {
  const auto traces = run_episodes(env_config, config, chooser);
  std::vector<EpisodeMetrics> episodes;
  episodes.reserve(traces.size());
  for (const auto& t : traces) episodes.push_back(summarize(t, config.threshold));
  return aggregate(std::move(episodes), config.seed, env_config.n_good);
}

MetricsReport evaluate(const policy::PolicyParams& params, const env::EnvConfig& env_config,
                       const EvalConfig& config) {
  return evaluate_with(greedy_policy(params), env_config, config);
}

}  // namespace deception::metrics
