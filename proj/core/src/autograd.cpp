#include "dcdp/autograd.hpp"

#include "dcdp/error.hpp"

namespace dcdp {

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    if (nodes_.at(in.index).requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_.at(v.index);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.index);
  if (!n.requires_grad) return;
  Tensor& dst = grad(v);
  if (dst.size() != g.size()) {
    throw DimensionError("gradient of shape " + shape_string(g.shape()) + " for node of shape " +
                         shape_string(dst.shape()));
  }
  double* d = dst.data();
  const double* s = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

void Tape::backward(Var loss) {
  const Node& root = nodes_.at(loss.index);
  if (root.value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  grad(loss).fill(1.0);

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      double* d = n.param->grad.data();
      const double* s = n.grad.data();
      for (std::size_t k = 0; k < n.grad.size(); ++k) d[k] += s[k];
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
  }
}

}  // namespace dcdp
