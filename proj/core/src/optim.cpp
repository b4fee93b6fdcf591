#include "dcdp/optim.hpp"

#include <cmath>

#include "dcdp/error.hpp"

namespace dcdp {

MomentumOptimizer::MomentumOptimizer(MomentumConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ContractError("momentum: learning rate must be > 0");
  if (!(config_.beta >= 0.0 && config_.beta < 1.0)) throw ContractError("momentum: beta must be in [0,1)");
}

void MomentumOptimizer::step(std::span<Parameter* const> params) {
  const double beta = config_.beta;
  for (Parameter* p : params) {
    auto [it, inserted] = velocity_.try_emplace(p->id, p->value.shape());
    Tensor& m = it->second;
    if (m.shape() != p->value.shape()) throw DimensionError("momentum: shape changed for " + p->id);
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = beta * m[i] + (1.0 - beta) * p->grad[i];
      p->value[i] -= config_.learning_rate * m[i];
    }
    p->zero_grad();
  }
}

const Tensor* MomentumOptimizer::velocity(const std::string& id) const {
  auto it = velocity_.find(id);
  return it == velocity_.end() ? nullptr : &it->second;
}

AdamW::AdamW(AdamWConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ContractError("adamw: learning rate must be > 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ContractError("adamw: betas must be in [0,1)");
  }
  if (!(config_.weight_decay >= 0.0)) throw ContractError("adamw: weight decay must be >= 0");
}

void AdamW::step(std::span<Parameter* const> params) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double lr = config_.learning_rate;
  for (Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->id, Moments{Tensor(p->value.shape()), Tensor(p->value.shape())});
    Moments& mo = it->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      mo.first[i] = config_.beta1 * mo.first[i] + (1.0 - config_.beta1) * g;
      mo.second[i] = config_.beta2 * mo.second[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = mo.first[i] / c1;
      const double v_hat = mo.second[i] / c2;
      p->value[i] -= lr * config_.weight_decay * p->value[i];
      p->value[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    p->zero_grad();
  }
}

}  // namespace dcdp
