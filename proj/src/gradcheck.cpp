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

#include "deception/gradcheck.hpp"

#include "deception/diffgraph.hpp"
#include "deception/env.hpp"
#include "deception/policy_net.hpp"
#include "deception/ppo.hpp"
#include "deception/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace deception::gradcheck {

using diffgraph::Graph;
using diffgraph::Tensor;
using diffgraph::Var;

bool GradcheckReport::all_passed() const noexcept {
  return !blocks.empty() && std::all_of(blocks.begin(), blocks.end(), [](const BlockResult& b) { return b.passed; });
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0;
  double scale = 1e-6;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

namespace {

using Build = std::function<Var(Graph&, const std::vector<Var>&)>;

struct OpCase {
  std::vector<Tensor> inputs;
  Build build;
};

using CaseFactory = std::function<OpCase(std::mt19937_64&)>;

std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double spread = 1.0) {
  std::normal_distribution<double> n(0.0, spread);
  Tensor t({rows, cols});
  for (double& v : t.values) v = n(rng);
  return t;
}

/// Moves entries at least `margin` away from each of `kinks`.
void avoid(Tensor& t, std::initializer_list<double> kinks, double margin) {
  for (double& v : t.values) {
    for (double k : kinks) {
      if (std::abs(v - k) < margin) v = k + (v >= k ? margin : -margin);
    }
  }
}

Var weighted_sum(Graph& g, Var out, const Tensor& weights) { return diffgraph::sum(diffgraph::mul(out, g.constant(weights))); }

struct Checker {
  const GradcheckConfig& config;

  double check_case(const OpCase& c, std::mt19937_64& rng, bool corrupt) const {
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : c.inputs) vars.push_back(g.variable(t));
    const Var out = c.build(g, vars);
    const Tensor& ov = out.value();
    Tensor weights(ov.shape);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& w : weights.values) w = n(rng);
    g.backward(weighted_sum(g, out, weights));

    std::vector<double> analytic;
    for (const auto& v : vars) {
      const Tensor& gr = g.node(v.id).grad;
      if (gr.values.empty()) {
        analytic.insert(analytic.end(), v.value().size(), 0.0);
      } else {
        analytic.insert(analytic.end(), gr.values.begin(), gr.values.end());
      }
    }

    std::vector<Tensor> inputs = c.inputs;
    auto eval = [&]() {
      Graph h;
      std::vector<Var> cs;
      for (const auto& t : inputs) cs.push_back(h.constant(t));
      return weighted_sum(h, c.build(h, cs), weights).value()[0];
    };
    std::vector<double> numeric;
    for (auto& t : inputs) {
      for (double& x : t.values) {
        const double x0 = x;
        x = x0 + config.step;
        const double up = eval();
        x = x0 - config.step;
        const double down = eval();
        x = x0;
        numeric.push_back((up - down) / (2.0 * config.step));
      }
    }
    if (corrupt) perturb(analytic);
    return relative_error(analytic, numeric);
  }

  static void perturb(std::vector<double>& analytic) {
    double scale = 1.0;
    for (double a : analytic) scale = std::max(scale, std::abs(a));
    if (!analytic.empty()) analytic[0] += 1e-2 * scale;
  }
};

std::vector<std::pair<std::string, CaseFactory>> op_cases() {
  using Vs = std::vector<Var>;
  std::vector<std::pair<std::string, CaseFactory>> out;
  auto unary = [&](const std::string& name, std::function<Var(Var)> f, std::initializer_list<double> kinks = {},
                   double spread = 1.0) {
    std::vector<double> k(kinks);
    out.push_back({name, [f, k, spread](std::mt19937_64& rng) {
                     Tensor x = random_tensor(rng, uniform_size(rng, 1, 4), uniform_size(rng, 1, 5), spread);
                     for (double kink : k) avoid(x, {kink}, 1e-2);
                     return OpCase{{x}, [f](Graph&, const Vs& v) { return f(v[0]); }};
                   }});
  };
  auto binary = [&](const std::string& name, std::function<Var(Var, Var)> f) {
    out.push_back({name, [f](std::mt19937_64& rng) {
                     const std::size_t r = uniform_size(rng, 1, 4);
                     const std::size_t c = uniform_size(rng, 1, 5);
                     return OpCase{{random_tensor(rng, r, c), random_tensor(rng, r, c)},
                                   [f](Graph&, const Vs& v) { return f(v[0], v[1]); }};
                   }});
  };

  out.push_back({"affine", [](std::mt19937_64& rng) {
                   const std::size_t b = uniform_size(rng, 1, 4), in = uniform_size(rng, 1, 5),
                                     o = uniform_size(rng, 1, 5);
                   return OpCase{{random_tensor(rng, b, in), random_tensor(rng, o, in), random_tensor(rng, 1, o)},
                                 [](Graph&, const Vs& v) { return diffgraph::affine(v[0], v[1], v[2]); }};
                 }});
  out.push_back({"linear", [](std::mt19937_64& rng) {
                   const std::size_t b = uniform_size(rng, 1, 4), in = uniform_size(rng, 1, 5),
                                     o = uniform_size(rng, 1, 5);
                   return OpCase{{random_tensor(rng, b, in), random_tensor(rng, o, in)},
                                 [](Graph&, const Vs& v) { return diffgraph::linear(v[0], v[1]); }};
                 }});
  unary("tanh", [](Var x) { return diffgraph::tanh(x); });
  unary("relu", [](Var x) { return diffgraph::relu(x); }, {0.0});
  unary("exp", [](Var x) { return diffgraph::exp(x); });
  unary("square", [](Var x) { return diffgraph::square(x); });
  binary("add", [](Var a, Var b) { return diffgraph::add(a, b); });
  binary("sub", [](Var a, Var b) { return diffgraph::sub(a, b); });
  binary("mul", [](Var a, Var b) { return diffgraph::mul(a, b); });
  unary("scale", [](Var x) { return diffgraph::scale(x, -1.7); });
  out.push_back({"concat", [](std::mt19937_64& rng) {
                   const std::size_t r = uniform_size(rng, 1, 4);
                   const std::size_t parts = uniform_size(rng, 1, 3);
                   OpCase c;
                   for (std::size_t p = 0; p < parts; ++p) c.inputs.push_back(random_tensor(rng, r, uniform_size(rng, 1, 4)));
                   c.build = [](Graph&, const Vs& v) { return diffgraph::concat(v); };
                   return c;
                 }});
  unary("softmax", [](Var x) { return diffgraph::softmax(x); }, {}, 2.0);
  unary("log_softmax", [](Var x) { return diffgraph::log_softmax(x); }, {}, 2.0);
  out.push_back({"attention_pool", [](std::mt19937_64& rng) {
                   const std::size_t b = uniform_size(rng, 1, 3), group = uniform_size(rng, 1, 4),
                                     d = uniform_size(rng, 1, 4), dv = uniform_size(rng, 1, 4);
                   return OpCase{{random_tensor(rng, b, d), random_tensor(rng, b * group, d),
                                  random_tensor(rng, b * group, dv)},
                                 [group](Graph&, const Vs& v) {
                                   return diffgraph::attention_pool(v[0], v[1], v[2], group);
                                 }};
                 }});
  out.push_back({"peer_attention", [](std::mt19937_64& rng) {
                   const std::size_t blocks = uniform_size(rng, 1, 3), group = uniform_size(rng, 1, 4),
                                     d = uniform_size(rng, 1, 4), dv = uniform_size(rng, 1, 4);
                   const std::size_t rows = blocks * group;
                   return OpCase{{random_tensor(rng, rows, d), random_tensor(rng, rows, d), random_tensor(rng, rows, dv)},
                                 [group](Graph&, const Vs& v) {
                                   return diffgraph::peer_attention(v[0], v[1], v[2], group);
                                 }};
                 }});
  out.push_back({"pick", [](std::mt19937_64& rng) {
                   const std::size_t r = uniform_size(rng, 1, 4), c = uniform_size(rng, 1, 5);
                   std::vector<std::size_t> idx(r);
                   for (auto& i : idx) i = uniform_size(rng, 0, c - 1);
                   return OpCase{{random_tensor(rng, r, c)},
                                 [idx](Graph&, const Vs& v) { return diffgraph::pick(v[0], idx); }};
                 }});
  unary("clip", [](Var x) { return diffgraph::clip(x, -0.5, 0.5); }, {-0.5, 0.5});
  out.push_back({"minimum", [](std::mt19937_64& rng) {
                   const std::size_t r = uniform_size(rng, 1, 4), c = uniform_size(rng, 1, 5);
                   Tensor a = random_tensor(rng, r, c);
                   Tensor b = random_tensor(rng, r, c);
                   for (std::size_t i = 0; i < a.size(); ++i) {
                     if (std::abs(a[i] - b[i]) < 2e-2) b[i] = a[i] + 2e-2;
                   }
                   return OpCase{{a, b}, [](Graph&, const Vs& v) { return diffgraph::minimum(v[0], v[1]); }};
                 }});
  unary("sum", [](Var x) { return diffgraph::sum(x); });
  unary("mean", [](Var x) { return diffgraph::mean(x); });
  unary("row_sum", [](Var x) { return diffgraph::row_sum(x); });
  return out;
}

// Network-level checks: gradients with respect to sampled parameter coordinates.

struct NetworkInstance {
  policy::PolicyParams params;
  ppo::Minibatch minibatch;
  Tensor logit_weights;
  Tensor value_weights;
};

NetworkInstance make_network_instance(std::mt19937_64& rng, const ppo::TrainConfig& train) {
  NetworkInstance inst;
  policy::NetworkConfig net;
  net.hidden = 6;
  net.policy_head_scale = 1.0;
  inst.params = policy::PolicyParams::initialize(net, rng());
  env::EnvConfig ec;
  const std::size_t agents = uniform_size(rng, 2, 3);
  const std::size_t teams = uniform_size(rng, 1, 3);
  std::vector<std::vector<env::Observation>> obs;
  for (std::size_t t = 0; t < teams; ++t) obs.push_back(env::observe_all(env::reset(ec, rng(), agents)));
  auto& mb = inst.minibatch;
  mb.observations = policy::make_batch(obs);
  const std::size_t rows = mb.observations.rows();
  const policy::TeamOutput current = policy::evaluate(inst.params, mb.observations);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t a = uniform_size(rng, 0, policy::kNumActions - 1);
    mb.actions.push_back(a);
    const double lp = current.actions[r].log_prob(a);
    // Keep the ratio away from the clip boundaries, where the loss has kinks.
    double old = lp;
    for (;;) {
      old = lp + 0.3 * n(rng);
      const double rho = std::exp(lp - old);
      if (std::abs(rho - (1.0 - train.clip)) > 1e-3 && std::abs(rho - (1.0 + train.clip)) > 1e-3) break;
    }
    mb.old_log_probs.push_back(old);
    mb.advantages.push_back(n(rng));
    mb.returns.push_back(n(rng));
  }
  inst.logit_weights = random_tensor(rng, rows, policy::kNumActions);
  inst.value_weights = random_tensor(rng, rows, 1);
  return inst;
}

using NetworkLoss = std::function<double(Graph&, const policy::BoundParams&, const NetworkInstance&, Var*)>;

double check_network(const GradcheckConfig& config, std::mt19937_64& rng, const NetworkLoss& loss, bool corrupt,
                     const ppo::TrainConfig& train) {
  NetworkInstance inst = make_network_instance(rng, train);
  Graph g;
  const policy::BoundParams bound = policy::bind(g, inst.params);
  Var root;
  loss(g, bound, inst, &root);
  g.backward(root);
  const diffgraph::ParameterSet grads = g.gradients(inst.params.tensors, bound.vars);

  std::vector<double> analytic;
  std::vector<double> numeric;
  for (std::size_t b = 0; b < inst.params.tensors.size(); ++b) {
    Tensor& t = inst.params.tensors[b];
    for (std::size_t k = 0; k < config.coords_per_block; ++k) {
      const std::size_t i = uniform_size(rng, 0, t.size() - 1);
      analytic.push_back(grads[b][i]);
      const double x0 = t[i];
      auto eval = [&]() {
        Graph h;
        const policy::BoundParams hb = policy::bind(h, inst.params);
        return loss(h, hb, inst, nullptr);
      };
      t[i] = x0 + config.step;
      const double up = eval();
      t[i] = x0 - config.step;
      const double down = eval();
      t[i] = x0;
      numeric.push_back((up - down) / (2.0 * config.step));
    }
  }
  if (corrupt) Checker::perturb(analytic);
  return relative_error(analytic, numeric);
}

}  // namespace

std::vector<std::string> block_names() {
  std::vector<std::string> names;
  for (const auto& [name, factory] : op_cases()) names.push_back(name);
  names.push_back("policy_forward");
  names.push_back("ppo_loss");
  return names;
}

GradcheckReport run_gradcheck(const GradcheckConfig& config) {
  GradcheckReport report;
  report.seed = config.seed;
  report.tolerance = config.tolerance;
  const Checker checker{config};
  std::uint64_t block_index = 0;
  auto finish = [&](BlockResult r) {
    r.passed = r.worst_error <= config.tolerance && std::isfinite(r.worst_error);
    report.blocks.push_back(std::move(r));
  };

  for (const auto& [name, factory] : op_cases()) {
    std::mt19937_64 rng(derive_seed(config.seed, {block_index++}));
    BlockResult r{name, config.instances, 0.0, false};
    for (std::size_t k = 0; k < config.instances; ++k) {
      const OpCase c = factory(rng);
      r.worst_error = std::max(r.worst_error, checker.check_case(c, rng, name == config.corrupt_block));
    }
    finish(std::move(r));
  }

  const ppo::TrainConfig train;
  const NetworkLoss forward_loss = [](Graph& g, const policy::BoundParams& p, const NetworkInstance& inst, Var* root) {
    const policy::TeamForward f = policy::forward_team(g, p, inst.minibatch.observations);
    const Var l = diffgraph::add(weighted_sum(g, f.logits, inst.logit_weights), weighted_sum(g, f.values, inst.value_weights));
    if (root != nullptr) *root = l;
    return l.value()[0];
  };
  const NetworkLoss ppo_total = [train](Graph& g, const policy::BoundParams& p, const NetworkInstance& inst, Var* root) {
    const ppo::LossTerms terms = ppo::ppo_loss(g, p, inst.minibatch, train);
    if (root != nullptr) *root = terms.total;
    return terms.total.value()[0];
  };
  for (const auto& [name, loss] : {std::pair{std::string("policy_forward"), forward_loss},
                                   std::pair{std::string("ppo_loss"), ppo_total}}) {
    std::mt19937_64 rng(derive_seed(config.seed, {block_index++}));
    BlockResult r{name, config.instances, 0.0, false};
    for (std::size_t k = 0; k < config.instances; ++k) {
      r.worst_error = std::max(r.worst_error, check_network(config, rng, loss, name == config.corrupt_block, train));
    }
    finish(std::move(r));
  }
  return report;
}

}  // namespace deception::gradcheck
