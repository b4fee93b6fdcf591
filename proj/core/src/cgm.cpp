#include "dcdp/cgm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dcdp/error.hpp"

namespace dcdp {

namespace {

double true_class_sum(const Tensor& probs, std::span<const int> labels, const char* branch) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
    throw DimensionError(std::string("batch_confidences: ") + branch + " probabilities " +
                         shape_string(probs.shape()) + " for " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = probs.dim(1);
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw LabelError("batch_confidences: label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0," + std::to_string(classes) + ")");
    }
    double row = 0.0;
    for (std::size_t c = 0; c < classes; ++c) row += probs.at(i, c);
    if (std::abs(row - 1.0) > 1e-6) {
      throw ContractError(std::string("batch_confidences: ") + branch + " row " + std::to_string(i) +
                          " sums to " + std::to_string(row));
    }
    s += probs.at(i, static_cast<std::size_t>(labels[i]));
  }
  return s;
}

}  // namespace

std::pair<double, double> batch_confidences(const Tensor& probs_res, const Tensor& probs_dense,
                                            std::span<const int> labels) {
  return {true_class_sum(probs_res, labels, "res"), true_class_sum(probs_dense, labels, "dense")};
}

std::pair<double, double> contribution_ratios(double s_res, double s_dense, double epsilon) {
  return {s_res / (s_dense + epsilon), s_dense / (s_res + epsilon)};
}

double modulation_coefficient(double ratio, double alpha) {
  if (ratio > 1.0) {
    // 1 - tanh(x) == 2 / (1 + e^{2x}); this form keeps the tail positive instead of rounding to 0.
    const double x = alpha * std::max(0.0, ratio - 1.0);
    return std::max(2.0 / (1.0 + std::exp(2.0 * x)), std::numeric_limits<double>::denorm_min());
  }
  return 1.0;
}

std::pair<double, double> modulation_coefficients(double r_res, double r_dense, double alpha) {
  return {modulation_coefficient(r_res, alpha), modulation_coefficient(r_dense, alpha)};
}

ModulationState compute_modulation(const Tensor& probs_res, const Tensor& probs_dense, std::span<const int> labels,
                                   double alpha, double epsilon) {
  ModulationState st;
  st.alpha = alpha;
  st.epsilon = epsilon;
  std::tie(st.s_res, st.s_dense) = batch_confidences(probs_res, probs_dense, labels);
  std::tie(st.r_res, st.r_dense) = contribution_ratios(st.s_res, st.s_dense, epsilon);
  std::tie(st.m_res, st.m_dense) = modulation_coefficients(st.r_res, st.r_dense, alpha);
  return st;
}

void apply_modulation(std::span<Parameter* const> res, std::span<Parameter* const> dense, double m_res,
                      double m_dense) {
  for (Parameter* p : res)
    for (double& g : p->grad.storage()) g *= m_res;
  for (Parameter* p : dense)
    for (double& g : p->grad.storage()) g *= m_dense;
}

}  // namespace dcdp
