#include "dcdp/contrastive.hpp"

#include <string>

#include "dcdp/error.hpp"
#include "dcdp/ops.hpp"

namespace dcdp {

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw ContractError("contrastive: temperature must be > 0");
  if (stage_count < 1) throw ContractError("contrastive: need at least one stage");
  if (!(align_weight >= 0.0)) throw ContractError("contrastive: align weight must be >= 0");
}

Var cosine_similarity_matrix(Tape& tape, Var z_a, Var z_b) {
  const Tensor& a = tape.value(z_a);
  const Tensor& b = tape.value(z_b);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("cosine_similarity_matrix: embeddings " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ in width");
  }
  if (a.dim(0) < 1 || a.dim(1) < 1) throw ContractError("cosine_similarity_matrix: empty embeddings");
  return ops::matmul_nt(tape, ops::l2_normalize(tape, z_a), ops::l2_normalize(tape, z_b));
}

SimilarityMatrix cosine_similarity_matrix(const Tensor& z_a, const Tensor& z_b, std::size_t stage) {
  Tape tape;
  Var s = cosine_similarity_matrix(tape, tape.constant(z_a), tape.constant(z_b));
  return {tape.value(s), stage};
}

Var stage_contrastive_loss(Tape& tape, Var similarity, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("stage_contrastive_loss: temperature must be > 0");
  const Tensor& s = tape.value(similarity);
  if (s.rank() != 2 || s.dim(0) != s.dim(1) || s.dim(0) == 0) {
    throw DimensionError("stage_contrastive_loss: expected a non-empty square matrix, got " + shape_string(s.shape()));
  }
  const double n = static_cast<double>(s.dim(0));
  Var logits = ops::scale(tape, similarity, 1.0 / temperature);
  Var res_to_dense = ops::diagonal(tape, ops::log_softmax(tape, logits));
  Var dense_to_res = ops::diagonal(tape, ops::log_softmax(tape, ops::transpose(tape, logits)));
  return ops::scale(tape, ops::sum(tape, ops::add(tape, res_to_dense, dense_to_res)), -1.0 / (2.0 * n));
}

double stage_contrastive_loss(const SimilarityMatrix& s, double temperature) {
  Tape tape;
  return tape.value(stage_contrastive_loss(tape, tape.constant(s.values), temperature)).item();
}

Var multi_stage_loss(Tape& tape, const std::vector<Var>& stage_losses) {
  if (stage_losses.empty()) throw ContractError("multi_stage_loss: no stage losses");
  Var total = stage_losses.front();
  for (std::size_t i = 1; i < stage_losses.size(); ++i) total = ops::add(tape, total, stage_losses[i]);
  return ops::scale(tape, total, 1.0 / static_cast<double>(stage_losses.size()));
}

double multi_stage_loss(std::span<const double> stage_losses) {
  if (stage_losses.empty()) throw ContractError("multi_stage_loss: no stage losses");
  double s = 0.0;
  for (double v : stage_losses) s += v;
  return s / static_cast<double>(stage_losses.size());
}

Var alignment_loss(Tape& tape, Var h_res, Var h_dense) {
  const Tensor& a = tape.value(h_res);
  const Tensor& b = tape.value(h_dense);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("alignment_loss: features " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " are not batch-aligned");
  }
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("alignment_loss: d_res=" + std::to_string(a.dim(1)) + " but d_dense=" +
                         std::to_string(b.dim(1)) + "; set dense_out (the dense output_dim) to the residual path width");
  }
  return ops::mse(tape, ops::l2_normalize(tape, h_res), ops::l2_normalize(tape, h_dense));
}

}  // namespace dcdp
