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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

namespace deception::diffgraph {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(const Tensor& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
MatMap as_matrix(Tensor& t) {
  return {t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

// Output of a row-wise op keeps the input's rank: a vector stays a vector.
std::vector<std::size_t> batched_shape(const Tensor& like, std::size_t cols) {
  if (like.rank() <= 1) return {cols};
  return {like.rows(), cols};
}

[[noreturn]] void dimension_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ArgumentError("operation on a detached Var");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw ArgumentError("operands belong to different graphs");
  return graph_of(a);
}

const Tensor& in_value(Graph& g, std::size_t node, std::size_t slot) {
  return g.node(g.node(node).inputs[slot]).output();
}

bool needs_grad(Graph& g, std::size_t node, std::size_t slot) {
  return g.node(g.node(node).inputs[slot]).requires_grad;
}

Tensor& in_grad(Graph& g, std::size_t node, std::size_t slot) {
  return g.grad_buffer(g.node(node).inputs[slot]);
}

template <typename Fn>
Var elementwise(OpTag tag, Var a, Fn&& fn, std::function<void(Graph&, std::size_t)> back) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  return g.push(tag, {a.id}, std::move(out), std::move(back));
}

void softmax_rows(const Tensor& x, Tensor& out) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &x.values[r * cols];
    double* o = &out.values[r * cols];
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
}

void require_rows(const Tensor& t, const char* op) {
  if (t.size() == 0 || t.cols() == 0) throw ArgumentError(std::string(op) + ": empty input");
}

}  // namespace

NonFiniteGradientError::NonFiniteGradientError(std::string block, std::size_t index, double value)
    : std::runtime_error("non-finite gradient in parameter block '" + block + "' at index " +
                         std::to_string(index) + " (value " + std::to_string(value) + ")"),
      block_(std::move(block)) {}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), values(product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : shape(std::move(dims)), values(data.begin(), data.end()) {
  if (product(shape) != values.size()) {
    throw DimensionError("tensor shape " + diffgraph::shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
}

Tensor Tensor::vector(std::initializer_list<double> data) {
  return Tensor({data.size()}, std::vector<double>(data));
}

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const noexcept {
  if (shape.size() <= 1) return 1;
  return shape.front();
}

std::size_t Tensor::cols() const noexcept {
  if (shape.empty()) return values.size();
  return shape.back();
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const { return diffgraph::shape_string(shape); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// ParameterSet

std::size_t ParameterSet::add(std::string name, Tensor tensor) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw ArgumentError("duplicate parameter block '" + name + "'");
  }
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(tensor));
  return tensors_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ArgumentError("no parameter block named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor(tensors_[i].shape));
  return out;
}

std::size_t ParameterSet::total_values() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const noexcept {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Graph

const char* op_name(OpTag tag) noexcept {
  switch (tag) {
    case OpTag::Constant: return "constant";
    case OpTag::Variable: return "variable";
    case OpTag::Parameter: return "parameter";
    case OpTag::Affine: return "affine";
    case OpTag::Linear: return "linear";
    case OpTag::Tanh: return "tanh";
    case OpTag::Relu: return "relu";
    case OpTag::Exp: return "exp";
    case OpTag::Square: return "square";
    case OpTag::Add: return "add";
    case OpTag::Sub: return "sub";
    case OpTag::Mul: return "mul";
    case OpTag::Scale: return "scale";
    case OpTag::Concat: return "concat";
    case OpTag::Softmax: return "softmax";
    case OpTag::LogSoftmax: return "log_softmax";
    case OpTag::AttentionPool: return "attention_pool";
    case OpTag::PeerAttention: return "peer_attention";
    case OpTag::Pick: return "pick";
    case OpTag::Clip: return "clip";
    case OpTag::Minimum: return "minimum";
    case OpTag::Sum: return "sum";
    case OpTag::Mean: return "mean";
    case OpTag::RowSum: return "row_sum";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph->node(id).output(); }
const Tensor& Var::grad() const { return graph->node(id).grad; }

Var Graph::push(OpTag op, std::vector<std::size_t> inputs, Tensor value,
                std::function<void(Graph&, std::size_t)> backward) {
  CompNode node;
  node.op = op;
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [this](std::size_t i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  CompNode node;
  node.op = OpTag::Constant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
  CompNode node;
  node.op = OpTag::Variable;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(const Tensor& tensor) {
  CompNode node;
  node.op = OpTag::Parameter;
  node.external = &tensor;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

std::vector<Var> Graph::bind(const ParameterSet& params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(parameter(params[i]));
  return out;
}

Tensor& Graph::grad_buffer(std::size_t id) {
  CompNode& n = nodes_.at(id);
  if (n.grad.size() != n.output().size()) n.grad = Tensor(n.output().shape);
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph != this) throw ArgumentError("backward: root belongs to another graph");
  if (root.value().size() != 1) {
    throw ArgumentError("backward: root must be scalar, got shape " + root.value().shape_string());
  }
  if (backward_done_) {
    for (auto& n : nodes_) n.grad = Tensor();
  }
  backward_done_ = true;
  grad_buffer(root.id)[0] = 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    CompNode& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

ParameterSet Graph::gradients(const ParameterSet& params, std::span<const Var> bound) const {
  if (bound.size() != params.size()) {
    throw ArgumentError("gradients: bound " + std::to_string(bound.size()) + " blocks, parameter set has " +
                        std::to_string(params.size()));
  }
  ParameterSet out = params.zeros_like();
  for (std::size_t i = 0; i < bound.size(); ++i) {
    const CompNode& n = nodes_.at(bound[i].id);
    if (n.grad.size() == out[i].size()) out[i].values = n.grad.values;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operations

Var affine(Var input, Var weight, Var bias) {
  Graph& g = graph_of(input, weight);
  graph_of(weight, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (w.rank() != 2 || w.cols() != x.cols()) dimension_error("affine", w, x);
  if (b.size() != w.rows()) dimension_error("affine", w, b);
  Tensor out(batched_shape(x, w.rows()));
  as_matrix(out).noalias() = as_matrix(x) * as_matrix(w).transpose();
  as_matrix(out).rowwise() += ConstVecMap(b.values.data(), static_cast<Eigen::Index>(b.size())).transpose();
  return g.push(OpTag::Affine, {input.id, weight.id, bias.id}, std::move(out), [](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    if (needs_grad(gr, self, 0)) {
      as_matrix(in_grad(gr, self, 0)).noalias() += as_matrix(dy) * as_matrix(in_value(gr, self, 1));
    }
    if (needs_grad(gr, self, 1)) {
      as_matrix(in_grad(gr, self, 1)).noalias() += as_matrix(dy).transpose() * as_matrix(in_value(gr, self, 0));
    }
    if (needs_grad(gr, self, 2)) {
      Tensor& db = in_grad(gr, self, 2);
      VecMap(db.values.data(), static_cast<Eigen::Index>(db.size())) += as_matrix(dy).colwise().sum().transpose();
    }
  });
}

Var linear(Var input, Var weight) {
  Graph& g = graph_of(input, weight);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  if (w.rank() != 2 || w.cols() != x.cols()) dimension_error("linear", w, x);
  Tensor out(batched_shape(x, w.rows()));
  as_matrix(out).noalias() = as_matrix(x) * as_matrix(w).transpose();
  return g.push(OpTag::Linear, {input.id, weight.id}, std::move(out), [](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    if (needs_grad(gr, self, 0)) {
      as_matrix(in_grad(gr, self, 0)).noalias() += as_matrix(dy) * as_matrix(in_value(gr, self, 1));
    }
    if (needs_grad(gr, self, 1)) {
      as_matrix(in_grad(gr, self, 1)).noalias() += as_matrix(dy).transpose() * as_matrix(in_value(gr, self, 0));
    }
  });
}

Var nonlinearity(Var input, Nonlinearity kind) {
  return kind == Nonlinearity::Tanh ? tanh(input) : relu(input);
}

Var tanh(Var input) {
  return elementwise(OpTag::Tanh, input, [](double v) { return std::tanh(v); }, [](Graph& gr, std::size_t self) {
    const CompNode& n = gr.node(self);
    Tensor& dx = in_grad(gr, self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

Var relu(Var input) {
  return elementwise(OpTag::Relu, input, [](double v) { return v > 0.0 ? v : 0.0; }, [](Graph& gr, std::size_t self) {
    const CompNode& n = gr.node(self);
    const Tensor& x = in_value(gr, self, 0);
    Tensor& dx = in_grad(gr, self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += x[i] > 0.0 ? n.grad[i] : 0.0;
  });
}

Var exp(Var input) {
  return elementwise(OpTag::Exp, input, [](double v) { return std::exp(v); }, [](Graph& gr, std::size_t self) {
    const CompNode& n = gr.node(self);
    Tensor& dx = in_grad(gr, self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += n.grad[i] * n.value[i];
  });
}

Var square(Var input) {
  return elementwise(OpTag::Square, input, [](double v) { return v * v; }, [](Graph& gr, std::size_t self) {
    const CompNode& n = gr.node(self);
    const Tensor& x = in_value(gr, self, 0);
    Tensor& dx = in_grad(gr, self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * x[i] * n.grad[i];
  });
}

namespace {

Var binary(OpTag tag, const char* name, Var a, Var b, double (*fn)(double, double),
           std::function<void(Graph&, std::size_t)> back) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.size() != y.size() || x.cols() != y.cols()) dimension_error(name, x, y);
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i], y[i]);
  return g.push(tag, {a.id, b.id}, std::move(out), std::move(back));
}

}  // namespace

Var add(Var a, Var b) {
  return binary(OpTag::Add, "add", a, b, [](double x, double y) { return x + y; }, [](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    for (std::size_t s = 0; s < 2; ++s) {
      if (!needs_grad(gr, self, s)) continue;
      Tensor& d = in_grad(gr, self, s);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

Var sub(Var a, Var b) {
  return binary(OpTag::Sub, "sub", a, b, [](double x, double y) { return x - y; }, [](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    if (needs_grad(gr, self, 0)) {
      Tensor& d = in_grad(gr, self, 0);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
    if (needs_grad(gr, self, 1)) {
      Tensor& d = in_grad(gr, self, 1);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  return binary(OpTag::Mul, "mul", a, b, [](double x, double y) { return x * y; }, [](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    const Tensor& x = in_value(gr, self, 0);
    const Tensor& y = in_value(gr, self, 1);
    if (needs_grad(gr, self, 0)) {
      Tensor& d = in_grad(gr, self, 0);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * y[i];
    }
    if (needs_grad(gr, self, 1)) {
      Tensor& d = in_grad(gr, self, 1);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  return elementwise(OpTag::Scale, a, [factor](double v) { return v * factor; },
                     [factor](Graph& gr, std::size_t self) {
                       const Tensor& dy = gr.node(self).grad;
                       Tensor& d = in_grad(gr, self, 0);
                       for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * factor;
                     });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  Graph& g = graph_of(parts.front());
  const Tensor& first = parts.front().value();
  const std::size_t rows = first.rows();
  std::size_t total_cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    graph_of(parts.front(), p);
    const Tensor& t = p.value();
    if (t.rows() != rows || t.rank() != first.rank()) dimension_error("concat", first, t);
    ids.push_back(p.id);
    offsets.push_back(total_cols);
    total_cols += t.cols();
  }
  Tensor out(batched_shape(first, total_cols));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = parts[k].value();
    as_matrix(out).middleCols(static_cast<Eigen::Index>(offsets[k]), static_cast<Eigen::Index>(t.cols())) =
        as_matrix(t);
  }
  return g.push(OpTag::Concat, std::move(ids), std::move(out), [offsets](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      if (!needs_grad(gr, self, k)) continue;
      Tensor& d = in_grad(gr, self, k);
      as_matrix(d) +=
          as_matrix(dy).middleCols(static_cast<Eigen::Index>(offsets[k]), static_cast<Eigen::Index>(d.cols()));
    }
  });
}

Var softmax(Var input) {
  Graph& g = graph_of(input);
  const Tensor& x = input.value();
  require_rows(x, "softmax");
  Tensor out(x.shape);
  softmax_rows(x, out);
  return g.push(OpTag::Softmax, {input.id}, std::move(out), [](Graph& gr, std::size_t self) {
    const CompNode& n = gr.node(self);
    Tensor& dx = in_grad(gr, self, 0);
    const std::size_t cols = n.value.cols();
    for (std::size_t r = 0; r < n.value.rows(); ++r) {
      const double* y = &n.value.values[r * cols];
      const double* dy = &n.grad.values[r * cols];
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) dx.values[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
}

Var log_softmax(Var input) {
  Graph& g = graph_of(input);
  const Tensor& x = input.value();
  require_rows(x, "log_softmax");
  Tensor out(x.shape);
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* in = &x.values[r * cols];
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out.values[r * cols + c] = in[c] - lse;
  }
  return g.push(OpTag::LogSoftmax, {input.id}, std::move(out), [](Graph& gr, std::size_t self) {
    const CompNode& n = gr.node(self);
    Tensor& dx = in_grad(gr, self, 0);
    const std::size_t cols = n.value.cols();
    for (std::size_t r = 0; r < n.value.rows(); ++r) {
      const double* dy = &n.grad.values[r * cols];
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += dy[c];
      for (std::size_t c = 0; c < cols; ++c) {
        dx.values[r * cols + c] += dy[c] - std::exp(n.value.values[r * cols + c]) * total;
      }
    }
  });
}

Var attention_pool(Var queries, Var keys, Var values, std::size_t group) {
  Graph& g = graph_of(queries, keys);
  graph_of(keys, values);
  const Tensor& q = queries.value();
  const Tensor& k = keys.value();
  const Tensor& v = values.value();
  if (group == 0) throw ArgumentError("attention_pool: empty group");
  const std::size_t batch = q.rows();
  const std::size_t d = q.cols();
  if (k.cols() != d || k.rows() != batch * group) dimension_error("attention_pool", q, k);
  if (v.rows() != k.rows()) dimension_error("attention_pool", k, v);
  const std::size_t dv = v.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Scores for all groups at once: row b of q against its block of keys.
  Tensor weights({batch, group});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto qb = as_matrix(q).row(static_cast<Eigen::Index>(b));
    const auto kb = as_matrix(k).middleRows(static_cast<Eigen::Index>(b * group), static_cast<Eigen::Index>(group));
    Eigen::Map<Eigen::RowVectorXd>(&weights.values[b * group], static_cast<Eigen::Index>(group)).noalias() =
        (qb * kb.transpose()) * inv_sqrt_d;
  }
  softmax_rows(weights, weights);
  Tensor out(q.rank() <= 1 ? std::vector<std::size_t>{dv} : std::vector<std::size_t>{batch, dv});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto vb = as_matrix(v).middleRows(static_cast<Eigen::Index>(b * group), static_cast<Eigen::Index>(group));
    as_matrix(out).row(static_cast<Eigen::Index>(b)).noalias() =
        Eigen::Map<const Eigen::RowVectorXd>(&weights.values[b * group], static_cast<Eigen::Index>(group)) * vb;
  }
  return g.push(OpTag::AttentionPool, {queries.id, keys.id, values.id}, std::move(out),
                [weights = std::move(weights), group, inv_sqrt_d](Graph& gr, std::size_t self) {
                  const Tensor& dy = gr.node(self).grad;
                  const Tensor& qv = in_value(gr, self, 0);
                  const Tensor& kv = in_value(gr, self, 1);
                  const Tensor& vv = in_value(gr, self, 2);
                  const bool gq = needs_grad(gr, self, 0);
                  const bool gk = needs_grad(gr, self, 1);
                  const bool gv = needs_grad(gr, self, 2);
                  Tensor* dq = gq ? &in_grad(gr, self, 0) : nullptr;
                  Tensor* dk = gk ? &in_grad(gr, self, 1) : nullptr;
                  Tensor* dvv = gv ? &in_grad(gr, self, 2) : nullptr;
                  const auto G = static_cast<Eigen::Index>(group);
                  Eigen::RowVectorXd dalpha(G);
                  Eigen::RowVectorXd dscore(G);
                  for (std::size_t b = 0; b < qv.rows(); ++b) {
                    const auto B0 = static_cast<Eigen::Index>(b * group);
                    const auto rb = static_cast<Eigen::Index>(b);
                    Eigen::Map<const Eigen::RowVectorXd> alpha(&weights.values[b * group], G);
                    const auto dyb = as_matrix(dy).row(rb);
                    if (gv) as_matrix(*dvv).middleRows(B0, G).noalias() += alpha.transpose() * dyb;
                    if (!gq && !gk) continue;
                    dalpha.noalias() = dyb * as_matrix(vv).middleRows(B0, G).transpose();
                    const double mean_term = alpha.dot(dalpha);
                    dscore = alpha.cwiseProduct(dalpha.array().matrix() - Eigen::RowVectorXd::Constant(G, mean_term));
                    dscore *= inv_sqrt_d;
                    if (gq) as_matrix(*dq).row(rb).noalias() += dscore * as_matrix(kv).middleRows(B0, G);
                    if (gk) as_matrix(*dk).middleRows(B0, G).noalias() += dscore.transpose() * as_matrix(qv).row(rb);
                  }
                });
}

Var peer_attention(Var keys, Var queries, Var values, std::size_t group) {
  Graph& g = graph_of(keys, queries);
  graph_of(queries, values);
  const Tensor& k = keys.value();
  const Tensor& q = queries.value();
  const Tensor& v = values.value();
  if (group == 0) throw ArgumentError("peer_attention: empty team");
  if (k.rows() % group != 0) {
    throw DimensionError("peer_attention: " + std::to_string(k.rows()) + " rows do not split into teams of " +
                         std::to_string(group));
  }
  if (q.rows() != k.rows() || q.cols() != k.cols()) dimension_error("peer_attention", k, q);
  if (v.rows() != k.rows()) dimension_error("peer_attention", k, v);
  const std::size_t rows = k.rows();
  const std::size_t teams = rows / group;
  const std::size_t dv = v.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  const auto G = static_cast<Eigen::Index>(group);

  // weights[(team*group + i)*group + j]; the diagonal stays zero.
  Tensor weights({rows, group});
  Tensor out(batched_shape(k, dv));
  if (group > 1) {
    RowMat scores(G, G);
    for (std::size_t t = 0; t < teams; ++t) {
      const auto T0 = static_cast<Eigen::Index>(t * group);
      scores.noalias() = as_matrix(k).middleRows(T0, G) * as_matrix(q).middleRows(T0, G).transpose();
      scores *= inv_sqrt_d;
      for (Eigen::Index i = 0; i < G; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < G; ++j) {
          if (j != i) mx = std::max(mx, scores(i, j));
        }
        double total = 0.0;
        double* w = &weights.values[static_cast<std::size_t>(T0 + i) * group];
        for (Eigen::Index j = 0; j < G; ++j) {
          w[j] = j == i ? 0.0 : std::exp(scores(i, j) - mx);
          total += w[j];
        }
        for (Eigen::Index j = 0; j < G; ++j) w[j] /= total;
      }
      as_matrix(out).middleRows(T0, G).noalias() =
          as_matrix(weights).middleRows(T0, G) * as_matrix(v).middleRows(T0, G);
    }
  }
  return g.push(OpTag::PeerAttention, {keys.id, queries.id, values.id}, std::move(out),
                [weights = std::move(weights), group, teams, inv_sqrt_d](Graph& gr, std::size_t self) {
                  if (group < 2) return;
                  const Tensor& dy = gr.node(self).grad;
                  const Tensor& kv = in_value(gr, self, 0);
                  const Tensor& qv = in_value(gr, self, 1);
                  const Tensor& vv = in_value(gr, self, 2);
                  const bool gk = needs_grad(gr, self, 0);
                  const bool gq = needs_grad(gr, self, 1);
                  const bool gv = needs_grad(gr, self, 2);
                  Tensor* dk = gk ? &in_grad(gr, self, 0) : nullptr;
                  Tensor* dq = gq ? &in_grad(gr, self, 1) : nullptr;
                  Tensor* dvv = gv ? &in_grad(gr, self, 2) : nullptr;
                  const auto G = static_cast<Eigen::Index>(group);
                  RowMat dalpha(G, G);
                  RowMat dscore(G, G);
                  for (std::size_t t = 0; t < teams; ++t) {
                    const auto T0 = static_cast<Eigen::Index>(t * group);
                    const auto alpha = as_matrix(weights).middleRows(T0, G);
                    const auto dyt = as_matrix(dy).middleRows(T0, G);
                    if (gv) as_matrix(*dvv).middleRows(T0, G).noalias() += alpha.transpose() * dyt;
                    if (!gk && !gq) continue;
                    dalpha.noalias() = dyt * as_matrix(vv).middleRows(T0, G).transpose();
                    for (Eigen::Index i = 0; i < G; ++i) {
                      const double mean_term = alpha.row(i).dot(dalpha.row(i));
                      for (Eigen::Index j = 0; j < G; ++j) {
                        dscore(i, j) = alpha(i, j) * (dalpha(i, j) - mean_term) * inv_sqrt_d;
                      }
                    }
                    if (gk) as_matrix(*dk).middleRows(T0, G).noalias() += dscore * as_matrix(qv).middleRows(T0, G);
                    if (gq) {
                      as_matrix(*dq).middleRows(T0, G).noalias() +=
                          dscore.transpose() * as_matrix(kv).middleRows(T0, G);
                    }
                  }
                });
}

Var pick(Var input, std::vector<std::size_t> index) {
  Graph& g = graph_of(input);
  const Tensor& x = input.value();
  if (index.size() != x.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for input " + x.shape_string());
  }
  const std::size_t cols = x.cols();
  Tensor out({index.size()});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= cols) {
      throw ArgumentError("pick: index " + std::to_string(index[r]) + " out of range for " + x.shape_string());
    }
    out[r] = x.values[r * cols + index[r]];
  }
  return g.push(OpTag::Pick, {input.id}, std::move(out), [index = std::move(index), cols](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    Tensor& dx = in_grad(gr, self, 0);
    for (std::size_t r = 0; r < index.size(); ++r) dx.values[r * cols + index[r]] += dy[r];
  });
}

Var clip(Var input, double lo, double hi) {
  if (!(lo <= hi)) throw ArgumentError("clip: lower bound exceeds upper bound");
  return elementwise(
      OpTag::Clip, input, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](Graph& gr, std::size_t self) {
        const Tensor& dy = gr.node(self).grad;
        const Tensor& x = in_value(gr, self, 0);
        Tensor& dx = in_grad(gr, self, 0);
        for (std::size_t i = 0; i < dx.size(); ++i) {
          if (x[i] >= lo && x[i] <= hi) dx[i] += dy[i];
        }
      });
}

Var minimum(Var a, Var b) {
  return binary(OpTag::Minimum, "minimum", a, b, [](double x, double y) { return std::min(x, y); },
                [](Graph& gr, std::size_t self) {
                  const Tensor& dy = gr.node(self).grad;
                  const Tensor& x = in_value(gr, self, 0);
                  const Tensor& y = in_value(gr, self, 1);
                  const bool ga = needs_grad(gr, self, 0);
                  const bool gb = needs_grad(gr, self, 1);
                  Tensor* da = ga ? &in_grad(gr, self, 0) : nullptr;
                  Tensor* db = gb ? &in_grad(gr, self, 1) : nullptr;
                  for (std::size_t i = 0; i < dy.size(); ++i) {
                    // Ties route the gradient to the first operand.
                    if (x[i] <= y[i]) {
                      if (ga) (*da)[i] += dy[i];
                    } else if (gb) {
                      (*db)[i] += dy[i];
                    }
                  }
                });
}

Var sum(Var input) {
  Graph& g = graph_of(input);
  const Tensor& x = input.value();
  double total = 0.0;
  for (double v : x.values) total += v;
  return g.push(OpTag::Sum, {input.id}, Tensor::scalar(total), [](Graph& gr, std::size_t self) {
    const double dy = gr.node(self).grad[0];
    for (double& d : in_grad(gr, self, 0).values) d += dy;
  });
}

Var mean(Var input) {
  const std::size_t n = input.value().size();
  if (n == 0) throw ArgumentError("mean: empty input");
  return scale(sum(input), 1.0 / static_cast<double>(n));
}

Var row_sum(Var input) {
  Graph& g = graph_of(input);
  const Tensor& x = input.value();
  const std::size_t cols = x.cols();
  Tensor out({x.rows()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += x.values[r * cols + c];
    out[r] = total;
  }
  return g.push(OpTag::RowSum, {input.id}, std::move(out), [cols](Graph& gr, std::size_t self) {
    const Tensor& dy = gr.node(self).grad;
    Tensor& dx = in_grad(gr, self, 0);
    for (std::size_t r = 0; r < dy.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) dx.values[r * cols + c] += dy[r];
    }
  });
}

// ---------------------------------------------------------------------------
// Optimizer

OptimizerState OptimizerState::for_params(const ParameterSet& params, AdamConfig config) {
  OptimizerState st;
  st.config = config;
  st.first_moment = params.zeros_like();
  st.second_moment = params.zeros_like();
  return st;
}

void optimizer_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state) {
  if (!params.same_layout(grads)) throw ArgumentError("optimizer_step: gradient map does not match parameters");
  if (!params.same_layout(state.first_moment) || !params.same_layout(state.second_moment)) {
    throw ArgumentError("optimizer_step: optimizer state does not match parameters");
  }
  for (std::size_t b = 0; b < grads.size(); ++b) {
    const Tensor& g = grads[b];
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) throw NonFiniteGradientError(grads.name(b), i, g[i]);
    }
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    Tensor& p = params[b];
    const Tensor& g = grads[b];
    Tensor& m = state.first_moment[b];
    Tensor& v = state.second_moment[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace deception::diffgraph
