#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dcdp/cgm.hpp"
#include "dcdp/config.hpp"
#include "dcdp/data.hpp"
#include "dcdp/metrics.hpp"
#include "dcdp/model.hpp"
#include "dcdp/optim.hpp"

namespace dcdp {

struct LossComponents {
  double cls_res = 0.0;
  double cls_dense = 0.0;
  double cls_fusion = 0.0;
  double contrast = 0.0;
  double align = 0.0;
  double total = 0.0;
};

/// (cls_res + cls_dense + cls_fusion) + lambda * (contrast + align)
double total_loss(double cls_res, double cls_dense, double cls_fusion, double contrast, double align,
                  double lambda_align);
Var total_loss(Tape& tape, Var cls_res, Var cls_dense, Var cls_fusion, Var contrast, Var align, double lambda_align);

struct LossGraph {
  Var total;
  LossComponents values;
};

/// Training objective on top of a forward pass. Contrastive and alignment terms are
/// included only when the forward pass recorded stage projections.
LossGraph build_loss(Tape& tape, const ForwardOutputs& out, std::span<const int> labels, double lambda_align,
                     double temperature);

/// One line of the per-batch training log.
struct BatchRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::size_t batch = 0;
  LossComponents loss;
  /// Always filled for dual-path models; `cgm_applied` says whether M scaled gradients.
  std::optional<ModulationState> modulation;
  bool cgm_applied = false;
};

std::string to_json_line(const BatchRecord& record);

using BatchSink = std::function<void(const BatchRecord&)>;

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t batches = 0;
  LossComponents mean_loss;
  double mean_m_res = 1.0;
  double mean_m_dense = 1.0;
};

struct Evaluation {
  ConfusionMatrix confusion;
  MetricsReport report;
  /// Accuracy of the standalone branch classifiers (NaN-free; equals fusion for single-path models).
  double res_accuracy = 0.0;
  double dense_accuracy = 0.0;
  std::vector<int> predictions;
};

/// Prediction is argmax of the fusion logits, ties toward the lower class id.
Evaluation evaluate(DualPathNetwork& net, const WindowedDataset& data, std::size_t batch_size = 64);

/// Per-window amplitude scaling and additive jitter on [N,W,F] windows.
Tensor augment_windows(const Tensor& windows, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Owns a network, its optimizer and every RNG stream of one seeded run.
class Trainer {
 public:
  Trainer(TrainConfig config, ModelConfig model);
  /// Builds the model config from the dataset (channels, classes, partition).
  static Trainer for_dataset(const TrainConfig& config, const WindowedDataset& data);

  EpochLog train_epoch(const WindowedDataset& data, const BatchSink& sink = {});
  /// One optimization step on an explicit batch; returns the logged record.
  BatchRecord train_step(const Tensor& x, std::span<const int> labels);

  DualPathNetwork& network() noexcept { return net_; }
  const DualPathNetwork& network() const noexcept { return net_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return step_; }
  std::size_t epochs_run() const noexcept { return epoch_; }

  /// Parameters the optimizer updates under the current switches.
  std::vector<Parameter*> trainable_parameters();

 private:
  TrainConfig config_;
  DualPathNetwork net_;
  std::unique_ptr<Optimizer> optimizer_;
  std::mt19937_64 shuffle_rng_;
  std::mt19937_64 augment_rng_;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  std::size_t batch_in_epoch_ = 0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  /// Filled when a target train accuracy stopped training early.
  std::optional<std::size_t> reached_target_at;
};

struct TrainOptions {
  /// Stop once train-set accuracy (eval mode) reaches this value.
  std::optional<double> stop_at_train_accuracy;
  BatchSink sink;
  std::function<void(const EpochLog&)> on_epoch;
};

TrainResult train(Trainer& trainer, const WindowedDataset& train_data, const TrainOptions& options = {});

// ---------------------------------------------------------------- ablation

struct AblationVariant {
  std::string name;
  Switches switches;
};

struct SeedResult {
  std::uint64_t seed = 0;
  MetricsReport report;
  double res_accuracy = 0.0;
  double dense_accuracy = 0.0;
};

struct AblationRow {
  AblationVariant variant;
  std::vector<SeedResult> seeds;
  double median_accuracy = 0.0;
  double median_precision = 0.0;
  double median_recall = 0.0;
  double median_f1 = 0.0;
  double median_f1_weighted = 0.0;
  double median_res_accuracy = 0.0;
  double median_dense_accuracy = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  /// Switch columns, then median ACC(%), Precision, Recall, F1 (macro).
  std::string table() const;
  std::string to_json() const;
};

/// The full model and every variant with exactly one of CL, CGM, DA removed.
std::vector<AblationVariant> leave_one_out_grid();
/// The eight dual-path rows plus the single-path baseline.
std::vector<AblationVariant> full_grid();

double median(std::vector<double> values);

AblationReport run_ablation(const TrainConfig& base, const std::vector<AblationVariant>& grid,
                            const WindowedDataset& train_data, const WindowedDataset& test_data,
                            std::span<const std::uint64_t> seeds);

}  // namespace dcdp
