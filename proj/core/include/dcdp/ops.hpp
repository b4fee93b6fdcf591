#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcdp/autograd.hpp"

namespace dcdp {

enum class Mode { kTrain, kEval };

/// Running statistics of one batch-norm layer.
struct BatchNormState {
  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}

  Tensor running_mean;
  Tensor running_var;
  /// running <- decay * running + (1 - decay) * batch
  double decay = 0.9;
  double eps = 1e-5;
};

namespace ops {

inline constexpr double kNormEpsilon = 1e-12;

/// x[N,Cin,T] * w[Cout,Cin,K] + b[Cout] with zero padding. `bias` may be a
/// default-constructed Var for no bias.
Var conv1d(Tape& tape, Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);

/// Normalizes x[N,C,T] per channel over the N and T axes. Train mode uses the
/// biased batch variance and updates `state`; eval mode reads it.
Var batchnorm1d(Tape& tape, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);

/// Subgradient at exactly 0 is 0.
Var relu(Tape& tape, Var x);

/// x[N,din] W[dout,din]^T + b[dout]
Var linear(Tape& tape, Var x, Var weight, Var bias);

/// [N,C,T] -> [N,C]
Var global_avg_pool(Tape& tape, Var x);

/// Non-overlapping mean pooling along T; trailing samples that do not fill a window are dropped.
Var avg_pool1d(Tape& tape, Var x, std::size_t kernel);

Var softmax(Tape& tape, Var logits);
Var log_softmax(Tape& tape, Var logits);

/// Mean negative log-likelihood of `labels` under softmax(logits).
Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels);

Var mse(Tape& tape, Var a, Var b);

/// Divides each row of v[N,d] by max(||row||, eps).
Var l2_normalize(Tape& tape, Var v, double eps = kNormEpsilon);

Var concat(Tape& tape, Var a, Var b, std::size_t axis);
Var concat(Tape& tape, const std::vector<Var>& parts, std::size_t axis);

Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var sum(Tape& tape, Var a);

/// a[N,d] b[M,d]^T -> [N,M]
Var matmul_nt(Tape& tape, Var a, Var b);
Var transpose(Tape& tape, Var a);
/// Main diagonal of a square matrix, as [N].
Var diagonal(Tape& tape, Var a);

// Non-recording forms used for detached statistics and test oracles.
Tensor softmax_rows(const Tensor& logits);

/// While alive, records the smallest |input| that relu sees on this thread.
/// Finite-difference checks use it to confirm no kink lies within the perturbation.
class ReluMarginProbe {
 public:
  ReluMarginProbe();
  ~ReluMarginProbe();
  ReluMarginProbe(const ReluMarginProbe&) = delete;
  ReluMarginProbe& operator=(const ReluMarginProbe&) = delete;

  double min_abs_input() const noexcept { return min_abs_; }
  std::size_t inputs_seen() const noexcept { return seen_; }
  void observe(const Tensor& input);

 private:
  ReluMarginProbe* previous_;
  double min_abs_;
  std::size_t seen_ = 0;
};
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding);

}  // namespace ops
}  // namespace dcdp
