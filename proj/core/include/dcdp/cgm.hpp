#pragma once

#include <span>
#include <utility>

#include "dcdp/autograd.hpp"

namespace dcdp {

struct CgmConfig {
  double alpha = 0.9;
  double epsilon = 1e-8;
  /// Also scale the branch backbones, not just the branch classifiers.
  bool modulate_backbone = false;
};

/// Per-batch confidence accounting for the two branches.
struct ModulationState {
  double s_res = 0.0;
  double s_dense = 0.0;
  double r_res = 1.0;
  double r_dense = 1.0;
  double m_res = 1.0;
  double m_dense = 1.0;
  double alpha = 0.0;
  double epsilon = 0.0;
};

/// Sums of the true-class probability over the batch, per branch.
std::pair<double, double> batch_confidences(const Tensor& probs_res, const Tensor& probs_dense,
                                            std::span<const int> labels);

/// (s_res / (s_dense + eps), s_dense / (s_res + eps))
std::pair<double, double> contribution_ratios(double s_res, double s_dense, double epsilon);

/// 1 - tanh(alpha * relu(r - 1)) when r > 1, else exactly 1. Never returns 0.
double modulation_coefficient(double ratio, double alpha);
std::pair<double, double> modulation_coefficients(double r_res, double r_dense, double alpha);

/// Full statistic from detached branch probabilities.
ModulationState compute_modulation(const Tensor& probs_res, const Tensor& probs_dense, std::span<const int> labels,
                                   double alpha, double epsilon);

/// Multiplies every gradient of `res` by m_res and of `dense` by m_dense.
void apply_modulation(std::span<Parameter* const> res, std::span<Parameter* const> dense, double m_res,
                      double m_dense);

}  // namespace dcdp
