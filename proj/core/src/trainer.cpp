#include "dcdp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dcdp/contrastive.hpp"
#include "dcdp/error.hpp"
#include "dcdp/ops.hpp"
#include "json.hpp"

namespace dcdp {

double total_loss(double cls_res, double cls_dense, double cls_fusion, double contrast, double align,
                  double lambda_align) {
  return (cls_res + cls_dense + cls_fusion) + lambda_align * (contrast + align);
}

Var total_loss(Tape& tape, Var cls_res, Var cls_dense, Var cls_fusion, Var contrast, Var align, double lambda_align) {
  Var cls = ops::add(tape, ops::add(tape, cls_res, cls_dense), cls_fusion);
  return ops::add(tape, cls, ops::scale(tape, ops::add(tape, contrast, align), lambda_align));
}

std::string to_json_line(const BatchRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"step", r.step},
                   {"batch", r.batch},
                   {"cls_res", r.loss.cls_res},
                   {"cls_dense", r.loss.cls_dense},
                   {"cls_fusion", r.loss.cls_fusion},
                   {"contrast", r.loss.contrast},
                   {"align", r.loss.align},
                   {"total", r.loss.total},
                   {"cgm_applied", r.cgm_applied}};
  if (r.modulation) {
    const ModulationState& m = *r.modulation;
    j["s_res"] = m.s_res;
    j["s_dense"] = m.s_dense;
    j["r_res"] = m.r_res;
    j["r_dense"] = m.r_dense;
    j["m_res"] = r.cgm_applied ? m.m_res : 1.0;
    j["m_dense"] = r.cgm_applied ? m.m_dense : 1.0;
  }
  return j.dump();
}

// ---------------------------------------------------------------- evaluation

Evaluation evaluate(DualPathNetwork& net, const WindowedDataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  if (batch_size < 1) throw ContractError("evaluate: batch size must be >= 1");
  const std::size_t classes = net.config().classes;
  Evaluation ev{ConfusionMatrix(classes), {}, 0.0, 0.0, {}};
  std::size_t res_correct = 0, dense_correct = 0;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - start);
    const Tensor x = gather_rows(data.windows, std::span(idx).subspan(start, n));
    Tape tape;
    const ForwardOutputs out = net.forward(tape, x, Mode::kEval, {.projections = false});
    const Tensor& fusion = tape.value(out.fusion_logits);
    const Tensor& res = tape.value(out.res_logits);
    for (std::size_t i = 0; i < n; ++i) {
      const int truth = data.labels[start + i];
      const int pred = argmax(fusion.values().subspan(i * classes, classes));
      ev.confusion.add(truth, pred);
      ev.predictions.push_back(pred);
      if (argmax(res.values().subspan(i * classes, classes)) == truth) ++res_correct;
      if (out.dual_path) {
        const Tensor& dense = tape.value(out.dense_logits);
        if (argmax(dense.values().subspan(i * classes, classes)) == truth) ++dense_correct;
      }
    }
  }
  ev.report = compute_metrics(ev.confusion);
  ev.res_accuracy = static_cast<double>(res_correct) / static_cast<double>(data.size());
  ev.dense_accuracy = net.config().dual_path ? static_cast<double>(dense_correct) / static_cast<double>(data.size())
                                             : ev.res_accuracy;
  return ev;
}

Tensor augment_windows(const Tensor& windows, const AugmentConfig& cfg, std::mt19937_64& rng) {
  if (windows.rank() != 3) throw DimensionError("augment_windows: expected [N,W,F], got " + shape_string(windows.shape()));
  Tensor out = windows;
  const std::size_t per_window = windows.dim(1) * windows.dim(2);
  std::uniform_real_distribution<double> scale_dist(1.0 - cfg.scale_range, 1.0 + cfg.scale_range);
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (std::size_t n = 0; n < windows.dim(0); ++n) {
    const double s = cfg.scale_range > 0.0 ? scale_dist(rng) : 1.0;
    double* w = out.data() + n * per_window;
    for (std::size_t i = 0; i < per_window; ++i) {
      w[i] *= s;
      if (cfg.jitter_std > 0.0) w[i] += cfg.jitter_std * jitter(rng);
    }
  }
  return out;
}

// ---------------------------------------------------------------- trainer

namespace {

enum Stream : std::uint64_t { kInit = 0, kShuffle = 1, kAugment = 2 };

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& c) {
  if (c.optimizer == OptimizerKind::kMomentum) {
    return std::make_unique<MomentumOptimizer>(MomentumConfig{c.learning_rate, c.momentum_beta});
  }
  AdamWConfig a;
  a.learning_rate = c.learning_rate;
  a.weight_decay = c.weight_decay;
  return std::make_unique<AdamW>(a);
}

void append_params(std::vector<Parameter*>& into, std::vector<Parameter*> more) {
  into.insert(into.end(), more.begin(), more.end());
}

}  // namespace

Trainer::Trainer(TrainConfig config, ModelConfig model)
    : config_(std::move(config)),
      net_((config_.validate(), std::move(model)), derive_seed(config_.seed, kInit)),
      optimizer_(make_optimizer(config_)),
      shuffle_rng_(derive_seed(config_.seed, kShuffle)),
      augment_rng_(derive_seed(config_.seed, kAugment)) {
  for (BatchNormState& s : net_.norm_states()) s.decay = config_.bn_decay;
}

Trainer Trainer::for_dataset(const TrainConfig& config, const WindowedDataset& data) {
  return Trainer(config, make_model_config(config, data.channels(), data.classes, data.partition, data.channel_names));
}

std::vector<Parameter*> Trainer::trainable_parameters() {
  if (!net_.config().dual_path) return net_.parameters();
  std::vector<Parameter*> out;
  for (ParamGroup g : {ParamGroup::kResBackbone, ParamGroup::kDenseBackbone, ParamGroup::kResClassifier,
                       ParamGroup::kDenseClassifier, ParamGroup::kFusionClassifier}) {
    append_params(out, net_.parameters(g));
  }
  if (config_.switches.cl) append_params(out, net_.parameters(ParamGroup::kProjectionHeads));
  return out;
}

LossGraph build_loss(Tape& tape, const ForwardOutputs& out, std::span<const int> labels, double lambda_align,
                     double temperature) {
  LossGraph g;
  Var cls_res = ops::cross_entropy(tape, out.res_logits, labels);
  g.total = cls_res;
  g.values.cls_res = tape.value(cls_res).item();
  if (out.dual_path) {
    Var cls_dense = ops::cross_entropy(tape, out.dense_logits, labels);
    Var cls_fusion = ops::cross_entropy(tape, out.fusion_logits, labels);
    g.values.cls_dense = tape.value(cls_dense).item();
    g.values.cls_fusion = tape.value(cls_fusion).item();
    Var contrast, align;
    if (!out.stage_projections.empty()) {
      std::vector<Var> stage_losses;
      for (const auto& [z_res, z_dense] : out.stage_projections) {
        stage_losses.push_back(stage_contrastive_loss(tape, cosine_similarity_matrix(tape, z_res, z_dense), temperature));
      }
      contrast = multi_stage_loss(tape, stage_losses);
      align = alignment_loss(tape, out.h_res, out.h_dense);
      g.values.contrast = tape.value(contrast).item();
      g.values.align = tape.value(align).item();
      g.total = total_loss(tape, cls_res, cls_dense, cls_fusion, contrast, align, lambda_align);
    } else {
      g.total = ops::add(tape, ops::add(tape, cls_res, cls_dense), cls_fusion);
    }
  }
  g.values.total = tape.value(g.total).item();
  return g;
}

BatchRecord Trainer::train_step(const Tensor& x_in, std::span<const int> labels) {
  const bool dual = net_.config().dual_path;
  const bool use_cl = config_.switches.cl && dual;
  const bool use_cgm = config_.switches.cgm && dual;
  const Tensor x = config_.switches.da ? augment_windows(x_in, config_.augment, augment_rng_) : x_in;

  Tape tape;
  const ForwardOutputs out = net_.forward(tape, x, Mode::kTrain, {.projections = use_cl});

  BatchRecord rec;
  rec.epoch = epoch_;
  rec.step = step_;
  rec.batch = batch_in_epoch_;

  const LossGraph graph = build_loss(tape, out, labels, config_.lambda_align, config_.temperature);
  Var loss = graph.total;
  rec.loss = graph.values;

  const LossComponents& l = rec.loss;
  if (!std::isfinite(l.total)) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "non-finite loss at epoch %zu batch %zu (step %zu): cls_res=%g cls_dense=%g cls_fusion=%g "
                  "contrast=%g align=%g total=%g",
                  epoch_, batch_in_epoch_, step_, l.cls_res, l.cls_dense, l.cls_fusion, l.contrast, l.align, l.total);
    throw NumericalError(buf);
  }

  std::vector<Parameter*> params = trainable_parameters();
  zero_grads(params);
  tape.backward(loss);

  if (dual) {
    // Detached: probabilities are read from the forward values, not recorded on the tape.
    const Tensor probs_res = ops::softmax_rows(tape.value(out.res_logits));
    const Tensor probs_dense = ops::softmax_rows(tape.value(out.dense_logits));
    rec.modulation = compute_modulation(probs_res, probs_dense, labels, config_.alpha, config_.epsilon);
    if (use_cgm) {
      std::vector<Parameter*> res = net_.parameters(ParamGroup::kResClassifier);
      std::vector<Parameter*> dense = net_.parameters(ParamGroup::kDenseClassifier);
      if (config_.modulate_backbone) {
        append_params(res, net_.parameters(ParamGroup::kResBackbone));
        append_params(dense, net_.parameters(ParamGroup::kDenseBackbone));
      }
      apply_modulation(res, dense, rec.modulation->m_res, rec.modulation->m_dense);
      rec.cgm_applied = true;
    }
  }

  optimizer_->step(params);
  ++step_;
  ++batch_in_epoch_;
  return rec;
}

EpochLog Trainer::train_epoch(const WindowedDataset& data, const BatchSink& sink) {
  if (data.size() == 0) throw ContractError("train_epoch: empty dataset");
  if (config_.batch_size > data.size()) {
    throw ContractError("train_epoch: batch size " + std::to_string(config_.batch_size) + " exceeds dataset size " +
                        std::to_string(data.size()));
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng_);

  EpochLog log;
  log.epoch = epoch_;
  batch_in_epoch_ = 0;
  double m_res = 0.0, m_dense = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
    const std::size_t n = std::min(config_.batch_size, order.size() - start);
    if (n < 2) break;
    const auto idx = std::span(order).subspan(start, n);
    const Tensor x = gather_rows(data.windows, idx);
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(data.labels[i]);
    const BatchRecord rec = train_step(x, labels);
    if (sink) sink(rec);
    ++log.batches;
    log.mean_loss.cls_res += rec.loss.cls_res;
    log.mean_loss.cls_dense += rec.loss.cls_dense;
    log.mean_loss.cls_fusion += rec.loss.cls_fusion;
    log.mean_loss.contrast += rec.loss.contrast;
    log.mean_loss.align += rec.loss.align;
    log.mean_loss.total += rec.loss.total;
    m_res += rec.cgm_applied ? rec.modulation->m_res : 1.0;
    m_dense += rec.cgm_applied ? rec.modulation->m_dense : 1.0;
  }
  if (log.batches > 0) {
    const double b = static_cast<double>(log.batches);
    for (double* v : {&log.mean_loss.cls_res, &log.mean_loss.cls_dense, &log.mean_loss.cls_fusion,
                      &log.mean_loss.contrast, &log.mean_loss.align, &log.mean_loss.total}) {
      *v /= b;
    }
    log.mean_m_res = m_res / b;
    log.mean_m_dense = m_dense / b;
  }
  ++epoch_;
  return log;
}

TrainResult train(Trainer& trainer, const WindowedDataset& train_data, const TrainOptions& options) {
  TrainResult result;
  for (std::size_t e = 0; e < trainer.config().epochs; ++e) {
    result.epochs.push_back(trainer.train_epoch(train_data, options.sink));
    if (options.on_epoch) options.on_epoch(result.epochs.back());
    if (options.stop_at_train_accuracy) {
      const Evaluation ev = evaluate(trainer.network(), train_data);
      if (ev.report.accuracy >= *options.stop_at_train_accuracy) {
        result.reached_target_at = e + 1;
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------- ablation

std::vector<AblationVariant> leave_one_out_grid() {
  return {{"full", {true, true, true, true}},
          {"-CL", {true, false, true, true}},
          {"-CGM", {true, true, false, true}},
          {"-DA", {true, true, true, false}}};
}

std::vector<AblationVariant> full_grid() {
  std::vector<AblationVariant> grid;
  grid.push_back({"baseline", {false, false, false, false}});
  for (const Switches s : {Switches{true, false, false, false}, Switches{true, true, false, false},
                           Switches{true, false, true, false}, Switches{true, false, false, true},
                           Switches{true, true, true, false}, Switches{true, false, true, true},
                           Switches{true, true, false, true}, Switches{true, true, true, true}}) {
    grid.push_back({s.label(), s});
  }
  return grid;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationReport run_ablation(const TrainConfig& base, const std::vector<AblationVariant>& grid,
                            const WindowedDataset& train_data, const WindowedDataset& test_data,
                            std::span<const std::uint64_t> seeds) {
  AblationReport report;
  for (const AblationVariant& variant : grid) {
    AblationRow row;
    row.variant = variant;
    std::vector<double> acc, prec, rec, f1, f1w, res_acc, dense_acc;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.switches = variant.switches;
      cfg.seed = seed;
      Trainer trainer = Trainer::for_dataset(cfg, train_data);
      train(trainer, train_data);
      const Evaluation ev = evaluate(trainer.network(), test_data);
      row.seeds.push_back({seed, ev.report, ev.res_accuracy, ev.dense_accuracy});
      acc.push_back(ev.report.accuracy);
      prec.push_back(ev.report.precision_macro);
      rec.push_back(ev.report.recall_macro);
      f1.push_back(ev.report.f1_macro);
      f1w.push_back(ev.report.f1_weighted);
      res_acc.push_back(ev.res_accuracy);
      dense_acc.push_back(ev.dense_accuracy);
    }
    if (!seeds.empty()) {
      row.median_accuracy = median(acc);
      row.median_precision = median(prec);
      row.median_recall = median(rec);
      row.median_f1 = median(f1);
      row.median_f1_weighted = median(f1w);
      row.median_res_accuracy = median(res_acc);
      row.median_dense_accuracy = median(dense_acc);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string AblationReport::table() const {
  std::string out = "Method               DPFE CL  CGM DA   ACC(%)  Precision  Recall  F1\n";
  char buf[200];
  for (const AblationRow& r : rows) {
    const Switches& s = r.variant.switches;
    auto mark = [](bool on) { return on ? "x" : "-"; };
    std::snprintf(buf, sizeof(buf), "%-20s %-4s %-3s %-3s %-3s %7.2f  %9.4f  %6.4f  %6.4f\n", r.variant.name.c_str(),
                  mark(s.dpfe), mark(s.cl), mark(s.cgm), mark(s.da), 100.0 * r.median_accuracy, r.median_precision,
                  r.median_recall, r.median_f1);
    out += buf;
  }
  return out;
}

std::string AblationReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    nlohmann::json row{{"name", r.variant.name},
                       {"dpfe", r.variant.switches.dpfe},
                       {"cl", r.variant.switches.cl},
                       {"cgm", r.variant.switches.cgm},
                       {"da", r.variant.switches.da},
                       {"median", {{"accuracy", r.median_accuracy},
                                   {"precision", r.median_precision},
                                   {"recall", r.median_recall},
                                   {"f1", r.median_f1},
                                   {"f1_weighted", r.median_f1_weighted},
                                   {"res_accuracy", r.median_res_accuracy},
                                   {"dense_accuracy", r.median_dense_accuracy}}}};
    row["seeds"] = nlohmann::json::array();
    for (const SeedResult& s : r.seeds) {
      row["seeds"].push_back({{"seed", s.seed},
                              {"accuracy", s.report.accuracy},
                              {"precision", s.report.precision_macro},
                              {"recall", s.report.recall_macro},
                              {"f1", s.report.f1_macro},
                              {"f1_weighted", s.report.f1_weighted},
                              {"res_accuracy", s.res_accuracy},
                              {"dense_accuracy", s.dense_accuracy}});
    }
    j.push_back(std::move(row));
  }
  return j.dump();
}

}  // namespace dcdp
