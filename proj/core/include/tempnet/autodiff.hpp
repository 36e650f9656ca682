#pragma once

// Reverse-mode automatic differentiation over a sequential tape.
//
// Every op appends one node holding its output value and a backward rule.
// Nodes are stored in execution order, so a single reverse sweep visits each
// node exactly once after all of its consumers.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempnet/kernels.hpp"
#include "tempnet/param_store.hpp"
#include "tempnet/tensor.hpp"

namespace tempnet {

enum class OpKind {
  Constant,
  Parameter,
  Conv3d,
  MaxPool,
  Dense,
  Relu,
  Sigmoid,
  Add,
  Mul,
  BroadcastMul,
  ReduceMean,
  ReduceMax,
  Reshape,
  BceLoss,
};

const char* op_name(OpKind kind);

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
struct BackwardArgs {
  std::span<const Tensor<T>* const> inputs;
  const Tensor<T>& output;
  const Tensor<T>& grad_output;
  // Null entries mark inputs that do not need a gradient.
  std::span<Tensor<T>* const> grad_inputs;
};

template <typename T>
using BackwardFn = std::function<void(const BackwardArgs<T>&)>;

/// Read-only view of a recorded node, for graph inspection.
struct NodeInfo {
  OpKind kind;
  std::string scope;
  Shape shape;
  std::vector<std::size_t> inputs;
};

/// Deliberately wrong backward rule, used to check that gradcheck notices.
struct GradientFault {
  OpKind kind = OpKind::Conv3d;
  double scale = 1.5;
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Trainable leaf; its gradient is reported under `name`.
  Var<T> parameter(const std::string& name, Tensor<T> value);

  /// Appends an op node. Throws NumericError if `value` holds a non-finite
  /// entry while all inputs are finite.
  Var<T> record(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> value, BackwardFn<T> backward);

  /// Gradients of the scalar `loss` with respect to every parameter leaf.
  /// Parameters that do not influence the loss receive zero gradients.
  ParamStore<T> backward(Var<T> loss);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }
  std::vector<NodeInfo> nodes() const;

  void push_scope(const std::string& name);
  void pop_scope();
  const std::string& scope() const { return scope_; }

  void set_gradient_fault(std::optional<GradientFault> fault) { fault_ = fault; }

 private:
  struct Node {
    OpKind kind;
    std::string scope;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    BackwardFn<T> backward;
    bool needs_grad = false;
    std::string param_name;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> scope_marks_;
  std::string scope_;
  std::optional<GradientFault> fault_;
};

/// RAII scope label for nodes recorded while it is alive.
template <typename T>
class ScopeGuard {
 public:
  ScopeGuard(Tape<T>& tape, const std::string& name) : tape_(tape) { tape_.push_scope(name); }
  ~ScopeGuard() { tape_.pop_scope(); }
  ScopeGuard(const ScopeGuard&) = delete;
  ScopeGuard& operator=(const ScopeGuard&) = delete;

 private:
  Tape<T>& tape_;
};

enum class ReduceMode { Mean, Max };

// Differentiable ops. All operands must live on the same tape.

template <typename T>
Var<T> conv3d(Var<T> input, Var<T> kernel, Var<T> bias);

template <typename T>
Var<T> maxpool(Var<T> input, const kernels::Window3& window);

/// Affine map over the trailing axis: [...,K] x [K,M] + [M] -> [...,M].
template <typename T>
Var<T> dense(Var<T> input, Var<T> weight, Var<T> bias);

template <typename T>
Var<T> relu(Var<T> x);

/// 1/(1+exp(-x)), evaluated as exp(x)/(1+exp(x)) for negative x.
template <typename T>
Var<T> sigmoid(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

/// Per-frame gate: mask [T,1,1,1] times features [T,H,W,C].
template <typename T>
Var<T> broadcast_mul(Var<T> mask, Var<T> x);

/// Mean or max over `axes`. An empty axis set is the identity. With
/// `keep_dims` reduced axes stay as extent 1, otherwise they are removed
/// (reducing every axis yields shape {1}).
template <typename T>
Var<T> reduce(Var<T> x, const std::vector<std::size_t>& axes, ReduceMode mode, bool keep_dims);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

/// Mean binary cross-entropy. Predictions are clamped to [eps, 1-eps] with
/// eps = 1e-7; labels must be exactly 0 or 1.
template <typename T>
Var<T> bce_loss(Var<T> predictions, const Tensor<T>& labels);

inline constexpr double kBceEpsilon = 1e-7;

/// Plain-value BCE with the same clamp, for evaluation code.
double bce_value(double probability, double label);

}  // namespace tempnet
