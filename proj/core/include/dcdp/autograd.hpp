#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dcdp/tensor.hpp"

namespace dcdp {

/// Trainable tensor with its gradient accumulator. `id` is stable across runs
/// and is the key used by checkpoints and optimizer state.
struct Parameter {
  Parameter() = default;
  Parameter(std::string id_, Tensor value_) : id(std::move(id_)), value(std::move(value_)), grad(value.shape()) {}

  std::string id;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

void zero_grads(std::span<Parameter* const> params);

/// Handle to a node on a Tape.
struct Var {
  std::size_t index = static_cast<std::size_t>(-1);
};

/// Linear record of executed primitives. Every op appends exactly one node whose
/// backward closure pushes the node's gradient into its inputs.
class Tape {
 public:
  /// Receives the gradient of the node being visited.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Var constant(Tensor value);
  Var param(Parameter& p);

  /// Appends an op result. The closure is kept only if some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  /// Gradient buffer of a node, allocated zero on first access. Only valid during backward.
  Tensor& grad(Var v);
  /// Adds `g` into the gradient of `v` when `v` requires one.
  void accumulate(Var v, const Tensor& g);

  /// Reverse-mode sweep from a scalar. Node gradients are reset first, so calling
  /// it twice adds the same increment to every reachable Parameter twice.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

}  // namespace dcdp
