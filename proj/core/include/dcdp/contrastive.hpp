#pragma once

#include <span>
#include <vector>

#include "dcdp/autograd.hpp"

namespace dcdp {

struct ContrastiveConfig {
  double temperature = 0.5;
  std::size_t stage_count = 4;
  double align_weight = 0.7;

  void validate() const;
};

/// Cosine similarities between residual-branch rows and dense-branch columns at one stage.
struct SimilarityMatrix {
  Tensor values;
  std::size_t stage = 0;
};

/// S[i][j] = cos(a_i, b_j) with epsilon-guarded norms. Not symmetric in general.
Var cosine_similarity_matrix(Tape& tape, Var z_a, Var z_b);
SimilarityMatrix cosine_similarity_matrix(const Tensor& z_a, const Tensor& z_b, std::size_t stage = 0);

/// Bidirectional InfoNCE over S / tau: positives on the diagonal, the row-wise
/// and column-wise log-softmax terms averaged with weight 1/(2N).
Var stage_contrastive_loss(Tape& tape, Var similarity, double temperature);
double stage_contrastive_loss(const SimilarityMatrix& s, double temperature);

/// Mean of the per-stage losses.
Var multi_stage_loss(Tape& tape, const std::vector<Var>& stage_losses);
double multi_stage_loss(std::span<const double> stage_losses);

/// MSE between the row-wise L2-normalized pooled features of the two branches.
Var alignment_loss(Tape& tape, Var h_res, Var h_dense);

}  // namespace dcdp
