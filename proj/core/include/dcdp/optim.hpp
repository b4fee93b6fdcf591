#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>

#include "dcdp/autograd.hpp"

namespace dcdp {

/// Consumes (possibly modulated) gradients, updates values, then zeroes gradients.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<Parameter* const> params) = 0;
  virtual std::string name() const = 0;
};

struct MomentumConfig {
  double learning_rate = 1e-3;
  double beta = 0.9;
};

/// m_t = beta * m_{t-1} + (1 - beta) * g_t;  theta -= lr * m_t
class MomentumOptimizer final : public Optimizer {
 public:
  explicit MomentumOptimizer(MomentumConfig config);
  void step(std::span<Parameter* const> params) override;
  std::string name() const override { return "momentum"; }
  /// Null until the parameter has been stepped once.
  const Tensor* velocity(const std::string& id) const;

 private:
  MomentumConfig config_;
  std::unordered_map<std::string, Tensor> velocity_;
};

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// Adaptive moments with bias correction and decoupled weight decay.
class AdamW final : public Optimizer {
 public:
  explicit AdamW(AdamWConfig config);
  void step(std::span<Parameter* const> params) override;
  std::string name() const override { return "adamw"; }
  std::size_t steps() const noexcept { return steps_; }

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace dcdp
