#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dcdp/autograd.hpp"

namespace dcdp {

struct GradCheckEntry {
  std::string id;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool flagged = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const;
};

struct GradCheckOptions {
  double perturbation = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so gradients that are zero up to
  /// round-off are not reported as large relative errors.
  double abs_floor = 1e-6;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Builds the loss on a fresh tape. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

/// Runs backward once for analytic gradients, then compares every element of
/// every parameter against central differences.
GradCheckReport finite_diff_check(const LossBuilder& build, std::span<Parameter* const> params,
                                  const GradCheckOptions& options = {});

/// Same comparison against caller-supplied analytic gradients (one per param).
GradCheckReport compare_gradients(const LossBuilder& build, std::span<Parameter* const> params,
                                  std::span<const Tensor> analytic, const GradCheckOptions& options = {});

}  // namespace dcdp
