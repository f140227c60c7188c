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

#include "deception/diffgraph.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace dg = deception::diffgraph;
using dg::Graph;
using dg::Tensor;
using dg::Var;

namespace {

// Central differences of f at x, independent of the graph's backward code.
std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Tensor, ShapeMustMatchValues) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), dg::DimensionError);
  const Tensor t({2, 3}, 0.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Affine, IdentityWeight) {
  Graph g;
  const Var y = dg::affine(g.constant(Tensor::vector({3, -1})), g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                           g.constant(Tensor::vector({0, 0})));
  EXPECT_EQ(y.value().values, (dg::Buffer{3, -1}));
}

TEST(Affine, HandArithmetic) {
  Graph g;
  const Var y = dg::affine(g.constant(Tensor::vector({1, 1})), g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})),
                           g.constant(Tensor::vector({1, 1})));
  EXPECT_EQ(y.value().values, (dg::Buffer{4, 8}));
}

TEST(Affine, InputGradientOfSum) {
  Graph g;
  const Var x = g.variable(Tensor::vector({1, 1}));
  const Var y = dg::affine(x, g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})), g.constant(Tensor::vector({1, 1})));
  g.backward(dg::sum(y));
  const auto num = numeric_gradient(
      [](const Tensor& in) {
        Graph h;
        return dg::sum(dg::affine(h.constant(in), h.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})),
                                  h.constant(Tensor::vector({1, 1}))))
            .value()[0];
      },
      Tensor::vector({1, 1}));
  EXPECT_NEAR(x.grad()[0], 4.0, 1e-12);
  EXPECT_NEAR(x.grad()[1], 6.0, 1e-12);
  EXPECT_NEAR(num[0], 4.0, 1e-8);
  EXPECT_NEAR(num[1], 6.0, 1e-8);
}

TEST(Affine, ShapeMismatchNamesBothShapes) {
  Graph g;
  try {
    dg::affine(g.constant(Tensor::vector({1, 2, 3})), g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})),
               g.constant(Tensor::vector({0, 0})));
    FAIL() << "expected DimensionError";
  } catch (const dg::DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2, 2]"), std::string::npos) << msg;
  }
}

TEST(Nonlinearity, TanhAndRelu) {
  Graph g;
  EXPECT_EQ(dg::nonlinearity(g.constant(Tensor::vector({0, 0})), dg::Nonlinearity::Tanh).value().values,
            (dg::Buffer{0, 0}));
  EXPECT_EQ(dg::nonlinearity(g.constant(Tensor::vector({-1, 2})), dg::Nonlinearity::Relu).value().values,
            (dg::Buffer{0, 2}));
}

TEST(Nonlinearity, TanhGradientAtZeroIsOne) {
  Graph g;
  const Var x = g.variable(Tensor::vector({0, 0, 0}));
  g.backward(dg::sum(dg::tanh(x)));
  for (double v : x.grad().values) EXPECT_EQ(v, 1.0);
}

TEST(Softmax, ConstantInputIsUniform) {
  for (double c : {-5.0, 0.0, 3.7, 1e6}) {
    Graph g;
    const Var p = dg::softmax(g.constant(Tensor::vector({c, c, c})));
    for (double v : p.value().values) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, LengthOneIsOne) {
  Graph g;
  EXPECT_EQ(dg::softmax(g.constant(Tensor::vector({-42.0}))).value()[0], 1.0);
}

TEST(Softmax, EmptyInputRejected) {
  Graph g;
  EXPECT_THROW(dg::softmax(g.constant(Tensor({0}))), dg::ArgumentError);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  const Tensor x0 = Tensor::vector({0.3, -1.2, 2.0});
  const Tensor w = Tensor::vector({0.7, -0.4, 1.3});
  auto f = [&](const Tensor& in) {
    Graph h;
    return dg::sum(dg::mul(dg::softmax(h.constant(in)), h.constant(w))).value()[0];
  };
  Graph g;
  const Var x = g.variable(x0);
  g.backward(dg::sum(dg::mul(dg::softmax(x), g.constant(w))));
  const auto num = numeric_gradient(f, x0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(std::abs(x.grad()[i] - num[i]), 1e-6 * std::max(1.0, std::abs(num[i])));
  }
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + static_cast<std::size_t>(trial % 9);
    Tensor x({len});
    for (double& v : x.values) v = n(rng);
    Tensor shifted = x;
    const double c = n(rng) * 100;
    for (double& v : shifted.values) v += c;
    Graph g;
    const Tensor p = dg::softmax(g.constant(x)).value();
    const Tensor q = dg::softmax(g.constant(shifted)).value();
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      EXPECT_GE(p[i], 0.0);
      total += p[i];
      EXPECT_LT(std::abs(p[i] - q[i]), 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Backward, NonScalarRootRejected) {
  Graph g;
  const Var x = g.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(dg::tanh(x)), dg::ArgumentError);
}

TEST(Backward, ConstantRootGivesZeroGradients) {
  dg::ParameterSet params;
  params.add("w", Tensor::vector({1, 2, 3}));
  Graph g;
  const auto bound = g.bind(params);
  const Var root = g.constant(Tensor::scalar(5.0));
  g.backward(root);
  const auto grads = g.gradients(params, bound);
  EXPECT_EQ(grads[0].values, (dg::Buffer{0, 0, 0}));
}

TEST(Backward, SumOfParameterGivesOnes) {
  dg::ParameterSet params;
  params.add("w", Tensor::vector({1, -2, 3, 0.5}));
  params.add("unused", Tensor::vector({7}));
  Graph g;
  const auto bound = g.bind(params);
  g.backward(dg::sum(bound[0]));
  const auto grads = g.gradients(params, bound);
  EXPECT_EQ(grads[0].values, (dg::Buffer{1, 1, 1, 1}));
  EXPECT_EQ(grads[1].values, (dg::Buffer{0}));
}

TEST(Backward, GradientShapesMatchValues) {
  Graph g;
  const Var a = g.variable(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  const Var w = g.variable(Tensor::matrix(4, 3, std::vector<double>(12, 0.1)));
  const Var b = g.variable(Tensor::vector({0, 0, 0, 0}));
  const Var y = dg::tanh(dg::affine(a, w, b));
  g.backward(dg::mean(y));
  for (std::size_t id = 0; id < g.size(); ++id) {
    const auto& node = g.node(id);
    if (!node.grad.values.empty()) {
      EXPECT_EQ(node.grad.shape, node.output().shape) << dg::op_name(node.op);
    }
  }
}

TEST(Forward, Deterministic) {
  auto run = [] {
    Graph g;
    const Var x = g.constant(Tensor::matrix(3, 4, {0.1, -0.2, 0.3, 0.4, 1.0, -1.0, 0.5, 0.2, 0.0, 2.0, -3.0, 1.5}));
    const Var k = g.constant(Tensor::matrix(3, 4, {0.3, 0.1, -0.5, 0.9, 0.2, 0.2, 0.1, -0.7, 1.1, 0.0, 0.4, 0.3}));
    return dg::peer_attention(dg::tanh(x), k, x, 3).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(AttentionPool, SingleEntryPassesValueThrough) {
  Graph g;
  const Var q = g.constant(Tensor::matrix(1, 2, {0.3, -0.7}));
  const Var k = g.constant(Tensor::matrix(1, 2, {1.0, 2.0}));
  const Var v = g.constant(Tensor::matrix(1, 3, {4.0, 5.0, 6.0}));
  EXPECT_EQ(dg::attention_pool(q, k, v, 1).value().values, (dg::Buffer{4, 5, 6}));
}

TEST(PeerAttention, SingleRowGroupGetsZeroMessage) {
  Graph g;
  const Var k = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const Var v = g.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(dg::peer_attention(k, k, v, 1).value().values, (dg::Buffer{0, 0, 0, 0}));
  // Two-row groups: each row receives the other's value.
  EXPECT_EQ(dg::peer_attention(k, k, v, 2).value().values, (dg::Buffer{7, 8, 5, 6}));
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  dg::ParameterSet params;
  params.add("w", Tensor::vector({1, -2, 3}));
  const dg::ParameterSet before = params;
  auto state = dg::OptimizerState::for_params(params);
  dg::optimizer_step(params, params.zeros_like(), state);
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Optimizer, FirstStepMovesByLearningRate) {
  dg::ParameterSet params;
  params.add("w", Tensor::scalar(0.5));
  dg::AdamConfig cfg;
  cfg.learning_rate = 0.001;
  auto state = dg::OptimizerState::for_params(params, cfg);
  dg::ParameterSet grads = params.zeros_like();
  grads[0][0] = 1.0;
  dg::optimizer_step(params, grads, state);
  // m_hat = 1, v_hat = 1: step = lr * 1 / (1 + eps).
  EXPECT_NEAR(0.5 - params[0][0], 0.001, 1e-10);
}

TEST(Optimizer, DeterministicAndStepCountIncreases) {
  auto run = [] {
    dg::ParameterSet params;
    params.add("w", Tensor::vector({0.1, 0.2}));
    auto state = dg::OptimizerState::for_params(params);
    dg::ParameterSet grads = params.zeros_like();
    grads[0][0] = 0.3;
    grads[0][1] = -0.1;
    std::uint64_t last = state.step;
    for (int i = 0; i < 2; ++i) {
      dg::optimizer_step(params, grads, state);
      EXPECT_GT(state.step, last);
      last = state.step;
    }
    return params;
  };
  EXPECT_EQ(run(), run());
}

TEST(Optimizer, NonFiniteGradientNamesBlockAndLeavesParams) {
  dg::ParameterSet params;
  params.add("good", Tensor::vector({1, 2}));
  params.add("bad", Tensor::vector({3, 4}));
  const dg::ParameterSet before = params;
  auto state = dg::OptimizerState::for_params(params);
  dg::ParameterSet grads = params.zeros_like();
  grads[0][0] = 1.0;
  grads[1][1] = std::numeric_limits<double>::quiet_NaN();
  try {
    dg::optimizer_step(params, grads, state);
    FAIL() << "expected NonFiniteGradientError";
  } catch (const dg::NonFiniteGradientError& e) {
    EXPECT_EQ(e.block(), "bad");
  }
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 0u);
}

TEST(Optimizer, MomentShapesMatchParameters) {
  dg::ParameterSet params;
  params.add("a", Tensor({3, 2}));
  params.add("b", Tensor({5}));
  const auto state = dg::OptimizerState::for_params(params);
  EXPECT_TRUE(params.same_layout(state.first_moment));
  EXPECT_TRUE(params.same_layout(state.second_moment));
}

TEST(Minimum, TieSendsGradientToFirstOperand) {
  Graph g;
  const Var a = g.variable(Tensor::vector({1, 2}));
  const Var b = g.variable(Tensor::vector({1, 3}));
  g.backward(dg::sum(dg::minimum(a, b)));
  EXPECT_EQ(a.grad().values, (dg::Buffer{1, 1}));
  EXPECT_EQ(b.grad().values, (dg::Buffer{0, 0}));
}
