#include "dcdp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dcdp/error.hpp"

namespace dcdp {

bool GradCheckReport::passed() const {
  return std::none_of(entries.begin(), entries.end(), [](const GradCheckEntry& e) { return e.flagged; });
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& build) {
  Tape tape;
  return tape.value(build(tape)).item();
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& build, std::span<Parameter* const> params,
                                  const GradCheckOptions& options) {
  zero_grads(params);
  {
    Tape tape;
    tape.backward(build(tape));
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);
  zero_grads(params);
  return compare_gradients(build, params, analytic, options);
}

GradCheckReport compare_gradients(const LossBuilder& build, std::span<Parameter* const> params,
                                  std::span<const Tensor> analytic, const GradCheckOptions& options) {
  if (analytic.size() != params.size()) {
    throw ContractError("compare_gradients: " + std::to_string(analytic.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  GradCheckReport report;
  report.tolerance = options.tolerance;
  const double h = options.perturbation;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    if (analytic[pi].size() != p.value.size()) {
      throw DimensionError("compare_gradients: gradient shape mismatch for " + p.id);
    }
    GradCheckEntry entry;
    entry.id = p.id;
    entry.elements = p.value.size();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = evaluate(build);
      p.value[i] = saved - h;
      const double down = evaluate(build);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[pi][i], numeric, options.abs_floor);
      if (err > entry.max_rel_error || i == 0) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic_at_worst = analytic[pi][i];
        entry.numeric_at_worst = numeric;
      }
    }
    entry.flagged = !(entry.max_rel_error < options.tolerance);
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dcdp
