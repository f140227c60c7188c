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

// Reverse-mode differentiation over small dense tensors.
//
// A Graph is a tape: every operation appends a node whose inputs were created
// earlier, so node ids are already a topological order and backward() is a
// single reverse sweep. Graphs are rebuilt for every forward pass.
//
// Tensors are rank 1 (a single row) or rank 2 (row-major, one sample per
// row). Batched operations work row by row.

#ifndef DECEPTION_DIFFGRAPH_HPP
#define DECEPTION_DIFFGRAPH_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deception::diffgraph {

/// Allocator for tensor storage. Vectorized reductions peel leading elements
/// up to the first aligned address, so the summation order (and the last bit
/// of the result) depends on the buffer address unless every buffer starts on
/// the same boundary.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// Raised when operand shapes are incompatible. The message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed arguments (empty softmax input, non-scalar root, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by optimizer_step when a gradient block contains NaN or Inf.
class NonFiniteGradientError : public std::runtime_error {
 public:
  NonFiniteGradientError(std::string block, std::size_t index, double value);
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

struct Tensor {
  std::vector<std::size_t> shape;
  Buffer values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  static Tensor vector(std::initializer_list<double> data);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  /// Rank-1 tensors are a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool same_shape(const Tensor& other) const noexcept { return shape == other.shape; }
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Ordered collection of named tensors. Used both for learnable parameters
/// and for gradient maps with the identical layout.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor tensor);
  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }

  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  /// Index of the block called `name`; throws ArgumentError when absent.
  std::size_t index_of(const std::string& name) const;
  Tensor& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Tensor& at(const std::string& name) const { return tensors_[index_of(name)]; }

  /// Same names and shapes, every value zero.
  ParameterSet zeros_like() const;
  std::size_t total_values() const noexcept;
  bool same_layout(const ParameterSet& other) const noexcept;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

enum class OpTag {
  Constant,
  Variable,
  Parameter,
  Affine,
  Linear,
  Tanh,
  Relu,
  Exp,
  Square,
  Add,
  Sub,
  Mul,
  Scale,
  Concat,
  Softmax,
  LogSoftmax,
  AttentionPool,
  PeerAttention,
  Pick,
  Clip,
  Minimum,
  Sum,
  Mean,
  RowSum,
};

const char* op_name(OpTag tag) noexcept;

enum class Nonlinearity { Tanh, Relu };

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

struct CompNode {
  OpTag op = OpTag::Constant;
  std::vector<std::size_t> inputs;
  Tensor value;
  const Tensor* external = nullptr;  // parameter nodes alias the caller's tensor
  Tensor grad;
  bool requires_grad = false;
  std::function<void(Graph&, std::size_t)> backward;

  const Tensor& output() const { return external != nullptr ? *external : value; }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var constant(Tensor value);
  /// Leaf that receives a gradient (used for input-gradient checks).
  Var variable(Tensor value);
  /// Leaf aliasing `tensor`; the tensor must outlive the graph.
  Var parameter(const Tensor& tensor);
  /// One parameter leaf per block, in order.
  std::vector<Var> bind(const ParameterSet& params);

  /// Reverse sweep from a scalar root. Gradients accumulate in the nodes.
  void backward(Var root);
  /// Gradient map for blocks previously bound with bind(); unreachable
  /// blocks get zeros.
  ParameterSet gradients(const ParameterSet& params, std::span<const Var> bound) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const CompNode& node(std::size_t id) const { return nodes_.at(id); }
  CompNode& node(std::size_t id) { return nodes_.at(id); }

  /// Gradient buffer for node `id`, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

  Var push(OpTag op, std::vector<std::size_t> inputs, Tensor value,
           std::function<void(Graph&, std::size_t)> backward);

 private:
  std::vector<CompNode> nodes_;
  bool backward_done_ = false;
};

/// output = weight * input + bias, row by row. weight is [out, in].
Var affine(Var input, Var weight, Var bias);
/// output = weight * input (no bias).
Var linear(Var input, Var weight);
Var nonlinearity(Var input, Nonlinearity kind);
Var tanh(Var input);
Var relu(Var input);
Var exp(Var input);
Var square(Var input);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Horizontal concatenation of tensors with equal row counts.
Var concat(std::span<const Var> parts);
/// Row-wise softmax with max subtraction. Throws ArgumentError on empty rows.
Var softmax(Var input);
Var log_softmax(Var input);

/// Scaled dot-product attention pooling over fixed-size groups.
/// queries: [B, d]; keys: [B*group, d]; values: [B*group, dv] -> [B, dv].
/// Row b attends over key rows b*group .. b*group+group-1.
Var attention_pool(Var queries, Var keys, Var values, std::size_t group);

/// Within each block of `group` consecutive rows, row i aggregates the values
/// of every other row j with weights softmax_j(keys[i] . queries[j] / sqrt(d)).
/// A block of one row receives a zero message.
Var peer_attention(Var keys, Var queries, Var values, std::size_t group);

/// out[r] = input[r, index[r]].
Var pick(Var input, std::vector<std::size_t> index);
Var clip(Var input, double lo, double hi);
Var minimum(Var a, Var b);
Var sum(Var input);
Var mean(Var input);
Var row_sum(Var input);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParameterSet first_moment;
  ParameterSet second_moment;

  static OptimizerState for_params(const ParameterSet& params, AdamConfig config = {});

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// One adaptive-moment step, in place. Throws NonFiniteGradientError naming
/// the first offending block before touching any parameter.
void optimizer_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state);

}  // namespace deception::diffgraph

#endif  // DECEPTION_DIFFGRAPH_HPP
