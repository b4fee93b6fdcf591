#include "dcdp/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "dcdp/error.hpp"

namespace dcdp {

// ---------------------------------------------------------------- partition

ChannelPartition ChannelPartition::make(std::vector<std::size_t> first, std::vector<std::size_t> second,
                                        std::size_t total_channels) {
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  ChannelPartition p{std::move(first), std::move(second), total_channels};
  p.validate();
  return p;
}

ChannelPartition ChannelPartition::contiguous(std::size_t total_channels, std::size_t split) {
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < total_channels; ++i) (i < split ? a : b).push_back(i);
  return make(std::move(a), std::move(b), total_channels);
}

ChannelPartition ChannelPartition::from_channel_names(const std::vector<std::string>& names) {
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string lower = names[i];
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    (lower.find("acc") != std::string::npos ? a : b).push_back(i);
  }
  if (a.empty() || b.empty()) {
    throw SchemaError("channel names do not split into accelerometer and non-accelerometer groups; "
                      "give an explicit partition");
  }
  return make(std::move(a), std::move(b), names.size());
}

void ChannelPartition::validate() const {
  if (first.empty() || second.empty()) throw ContractError("channel partition: both index sets must be non-empty");
  std::vector<int> seen(total_channels, 0);
  for (const auto* set : {&first, &second}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      const std::size_t c = (*set)[i];
      if (c >= total_channels) {
        throw ContractError("channel partition: index " + std::to_string(c) + " outside [0," +
                            std::to_string(total_channels) + ")");
      }
      if (i > 0 && (*set)[i - 1] >= c) throw ContractError("channel partition: index sets must be sorted and unique");
      if (seen[c]++) throw ContractError("channel partition: channel " + std::to_string(c) + " in both sets");
    }
  }
  for (std::size_t c = 0; c < total_channels; ++c) {
    if (!seen[c]) throw ContractError("channel partition: channel " + std::to_string(c) + " not assigned");
  }
}

namespace {

Tensor gather_channels(const Tensor& x, const std::vector<std::size_t>& channels) {
  const std::size_t n = x.dim(0), t = x.dim(1), f = x.dim(2);
  Tensor out({n, t, channels.size()});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < t; ++s) {
      const double* row = x.data() + (i * t + s) * f;
      double* dst = out.data() + (i * t + s) * channels.size();
      for (std::size_t k = 0; k < channels.size(); ++k) dst[k] = row[channels[k]];
    }
  return out;
}

}  // namespace

std::pair<Tensor, Tensor> partition_input(const Tensor& x, const ChannelPartition& partition) {
  if (x.rank() != 3 || x.dim(2) != partition.total_channels) {
    throw DimensionError("partition_input: input " + shape_string(x.shape()) + " but partition covers " +
                         std::to_string(partition.total_channels) + " channels");
  }
  return {gather_channels(x, partition.first), gather_channels(x, partition.second)};
}

Tensor scatter_partitions(const Tensor& x1, const Tensor& x2, const ChannelPartition& partition) {
  if (x1.rank() != 3 || x2.rank() != 3 || x1.dim(0) != x2.dim(0) || x1.dim(1) != x2.dim(1) ||
      x1.dim(2) != partition.first.size() || x2.dim(2) != partition.second.size()) {
    throw DimensionError("scatter_partitions: parts " + shape_string(x1.shape()) + " and " +
                         shape_string(x2.shape()) + " do not match the partition");
  }
  const std::size_t n = x1.dim(0), t = x1.dim(1), f = partition.total_channels;
  Tensor out({n, t, f});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < t; ++s) {
      for (std::size_t k = 0; k < partition.first.size(); ++k) out.at(i, s, partition.first[k]) = x1.at(i, s, k);
      for (std::size_t k = 0; k < partition.second.size(); ++k) out.at(i, s, partition.second[k]) = x2.at(i, s, k);
    }
  return out;
}

// ---------------------------------------------------------------- configs

void ResidualPathConfig::validate() const {
  if (blocks_per_stage.size() != kStageCount) {
    throw ContractError("residual path needs " + std::to_string(kStageCount) + " stage entries, got " +
                        std::to_string(blocks_per_stage.size()));
  }
  for (std::size_t b : blocks_per_stage) {
    if (b < 1) throw ContractError("residual path: every stage needs at least one block");
  }
  if (base_width < 1) throw ContractError("residual path: base_width must be >= 1");
}

void DensePathConfig::validate() const {
  if (layers_per_stage.size() != kStageCount) {
    throw ContractError("dense path needs " + std::to_string(kStageCount) + " stage entries, got " +
                        std::to_string(layers_per_stage.size()));
  }
  for (std::size_t l : layers_per_stage) {
    if (l < 1) throw ContractError("dense path: every stage needs at least one layer");
  }
  if (growth_rate < 1) throw ContractError("dense path: growth_rate must be >= 1");
}

void ModelConfig::validate() const {
  res.validate();
  dense.validate();
  partition.validate();
  if (classes < 1) throw ContractError("model: class count must be >= 1");
  if (d_proj < 1) throw ContractError("model: d_proj must be >= 1");
  if (dual_path && d_res() != d_dense()) {
    throw DimensionError("alignment loss needs d_res == d_dense, got " + std::to_string(d_res()) + " and " +
                         std::to_string(d_dense()) + "; set dense output_dim to " + std::to_string(d_res()));
  }
}

// ---------------------------------------------------------------- network

namespace {

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = dist(rng);
  return t;
}

}  // namespace

DualPathNetwork::DualPathNetwork(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto conv = [&](const std::string& id, std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride,
                  ParamGroup g) {
    Conv c;
    c.weight = add_param(id + ".weight", he_uniform({c_out, c_in, k}, c_in * k, rng), g);
    c.bias = add_param(id + ".bias", Tensor({c_out}), g);
    c.stride = stride;
    c.padding = k / 2;
    return c;
  };
  auto dense = [&](const std::string& id, std::size_t d_in, std::size_t d_out, ParamGroup g) {
    Dense d;
    d.weight = add_param(id + ".weight", he_uniform({d_out, d_in}, d_in, rng), g);
    d.bias = add_param(id + ".bias", Tensor({d_out}), g);
    return d;
  };

  const ResidualPathConfig& rc = config_.res;
  const std::size_t res_in = config_.dual_path ? config_.partition.first.size() : config_.partition.total_channels;
  res_stem_ = conv("res.stem", res_in, rc.base_width, 3, 1, ParamGroup::kResBackbone);
  std::size_t width = rc.base_width;
  std::vector<std::size_t> res_tap_dims;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    std::vector<ResidualBlock> stage;
    const std::size_t out_w = rc.stage_width(s);
    for (std::size_t b = 0; b < rc.blocks_per_stage[s]; ++b) {
      const std::string id = "res.stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
      ResidualBlock blk;
      blk.bn1 = make_norm(id + ".bn1", width, ParamGroup::kResBackbone);
      blk.conv1 = conv(id + ".conv1", width, out_w, 3, stride, ParamGroup::kResBackbone);
      blk.bn2 = make_norm(id + ".bn2", out_w, ParamGroup::kResBackbone);
      blk.conv2 = conv(id + ".conv2", out_w, out_w, 3, 1, ParamGroup::kResBackbone);
      if (width != out_w || stride != 1) {
        blk.shortcut = conv(id + ".shortcut", width, out_w, 1, stride, ParamGroup::kResBackbone);
      }
      stage.push_back(blk);
      width = out_w;
    }
    res_stages_.push_back(std::move(stage));
    res_tap_dims.push_back(width);
  }
  res_classifier_ = dense("res.classifier", config_.d_res(), config_.classes, ParamGroup::kResClassifier);

  if (!config_.dual_path) return;

  const DensePathConfig& dc = config_.dense;
  std::size_t channels = 2 * dc.growth_rate;
  dense_stem_ = conv("dense.stem", config_.partition.second.size(), channels, 3, 1, ParamGroup::kDenseBackbone);
  std::vector<std::size_t> dense_tap_dims;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    std::vector<DenseLayer> stage;
    for (std::size_t l = 0; l < dc.layers_per_stage[s]; ++l) {
      const std::string id = "dense.stage" + std::to_string(s + 1) + ".layer" + std::to_string(l + 1);
      DenseLayer layer;
      layer.bn = make_norm(id + ".bn", channels, ParamGroup::kDenseBackbone);
      layer.conv = conv(id + ".conv", channels, dc.growth_rate, 3, 1, ParamGroup::kDenseBackbone);
      stage.push_back(layer);
      channels += dc.growth_rate;
    }
    dense_stages_.push_back(std::move(stage));
    const bool last = s + 1 == kStageCount;
    const std::size_t out = last ? config_.d_dense() : std::max<std::size_t>(1, channels / 2);
    const std::string id = "dense.transition" + std::to_string(s + 1);
    Transition t;
    t.bn = make_norm(id + ".bn", channels, ParamGroup::kDenseBackbone);
    t.conv = conv(id + ".conv", channels, out, 1, 1, ParamGroup::kDenseBackbone);
    t.pool = last ? 1 : 2;
    transitions_.push_back(t);
    channels = out;
    dense_tap_dims.push_back(channels);
  }
  dense_classifier_ = dense("dense.classifier", config_.d_dense(), config_.classes, ParamGroup::kDenseClassifier);

  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::string id = ".stage" + std::to_string(s + 1);
    ProjectionHead rh{dense("proj.res" + id + ".fc1", res_tap_dims[s], config_.d_proj, ParamGroup::kProjectionHeads),
                      dense("proj.res" + id + ".fc2", config_.d_proj, config_.d_proj, ParamGroup::kProjectionHeads)};
    ProjectionHead dh{
        dense("proj.dense" + id + ".fc1", dense_tap_dims[s], config_.d_proj, ParamGroup::kProjectionHeads),
        dense("proj.dense" + id + ".fc2", config_.d_proj, config_.d_proj, ParamGroup::kProjectionHeads)};
    res_heads_.push_back(rh);
    dense_heads_.push_back(dh);
  }
  fusion_classifier_ = dense("fusion.classifier", config_.d_res() + config_.d_dense(), config_.classes,
                             ParamGroup::kFusionClassifier);
}

std::size_t DualPathNetwork::add_param(const std::string& id, Tensor value, ParamGroup group) {
  params_.emplace_back(id, std::move(value));
  groups_.push_back(group);
  return params_.size() - 1;
}

DualPathNetwork::Norm DualPathNetwork::make_norm(const std::string& id, std::size_t channels, ParamGroup group) {
  Norm n;
  n.gamma = add_param(id + ".gamma", Tensor({channels}, 1.0), group);
  n.beta = add_param(id + ".beta", Tensor({channels}, 0.0), group);
  n.state = norm_states_.size();
  norm_states_.emplace_back(channels);
  norm_ids_.push_back(id);
  return n;
}

Var DualPathNetwork::apply(Tape& tape, Var x, const Conv& conv) {
  return ops::conv1d(tape, x, tape.param(params_[conv.weight]), tape.param(params_[conv.bias]), conv.stride,
                     conv.padding);
}

Var DualPathNetwork::apply(Tape& tape, Var x, const Norm& norm, Mode mode) {
  return ops::batchnorm1d(tape, x, tape.param(params_[norm.gamma]), tape.param(params_[norm.beta]),
                          norm_states_[norm.state], mode);
}

Var DualPathNetwork::apply(Tape& tape, Var x, const Dense& dense) {
  return ops::linear(tape, x, tape.param(params_[dense.weight]), tape.param(params_[dense.bias]));
}

Var DualPathNetwork::apply(Tape& tape, Var x, const Transition& t, Mode mode) {
  Var h = apply(tape, ops::relu(tape, apply(tape, x, t.bn, mode)), t.conv);
  return t.pool > 1 ? ops::avg_pool1d(tape, h, t.pool) : h;
}

Var DualPathNetwork::project(Tape& tape, Var stage_features, const ProjectionHead& head) {
  Var pooled = ops::global_avg_pool(tape, stage_features);
  return apply(tape, ops::relu(tape, apply(tape, pooled, head.fc1)), head.fc2);
}

Var DualPathNetwork::residual_block(Tape& tape, Var h, const ResidualBlock& block, Mode mode) {
  Var r = ops::relu(tape, apply(tape, h, block.bn1, mode));
  r = apply(tape, r, block.conv1);
  r = ops::relu(tape, apply(tape, r, block.bn2, mode));
  r = apply(tape, r, block.conv2);
  Var identity = block.shortcut ? apply(tape, h, *block.shortcut) : h;
  return ops::add(tape, identity, r);
}

Var DualPathNetwork::dense_block(Tape& tape, const std::vector<Var>& history, const DenseLayer& layer, Mode mode) {
  if (history.empty()) throw ContractError("dense_block: empty history");
  const Tensor& first = tape.value(history.front());
  for (Var v : history) {
    const Tensor& t = tape.value(v);
    if (t.rank() != 3 || t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2)) {
      throw DimensionError("dense_block: history entry " + shape_string(t.shape()) + " does not match " +
                           shape_string(first.shape()));
    }
  }
  Var joined = history.size() == 1 ? history.front() : ops::concat(tape, history, 1);
  return apply(tape, ops::relu(tape, apply(tape, joined, layer.bn, mode)), layer.conv);
}

ForwardOutputs DualPathNetwork::forward(Tape& tape, const Tensor& x, Mode mode, ForwardOptions options) {
  if (x.rank() != 3 || x.dim(2) != config_.partition.total_channels) {
    throw DimensionError("forward: expected input [N,T," + std::to_string(config_.partition.total_channels) +
                         "], got " + shape_string(x.shape()));
  }
  if (x.dim(0) < 1) throw ContractError("forward: empty batch");
  if (mode == Mode::kTrain && x.dim(0) < 2) {
    throw DegenerateBatchError("forward: train mode needs a batch of at least 2 windows, got 1");
  }
  if (x.dim(1) < kMinWindowLength) {
    throw DimensionError("forward: window length " + std::to_string(x.dim(1)) + " below minimum " +
                         std::to_string(kMinWindowLength));
  }

  ForwardOutputs out;
  out.dual_path = config_.dual_path;
  Tensor res_input, dense_input;
  if (config_.dual_path) {
    auto [x1, x2] = partition_input(x, config_.partition);
    res_input = swap_last_axes(x1);
    dense_input = swap_last_axes(x2);
  } else {
    res_input = swap_last_axes(x);
  }

  std::vector<Var> res_taps;
  Var r = apply(tape, tape.constant(std::move(res_input)), res_stem_);
  for (const auto& stage : res_stages_) {
    for (const auto& block : stage) r = residual_block(tape, r, block, mode);
    res_taps.push_back(r);
  }
  out.h_res = ops::global_avg_pool(tape, r);
  out.res_logits = apply(tape, out.h_res, res_classifier_);

  if (!config_.dual_path) {
    out.fusion_logits = out.res_logits;
    return out;
  }

  std::vector<Var> dense_taps;
  Var d = apply(tape, tape.constant(std::move(dense_input)), dense_stem_);
  for (std::size_t s = 0; s < dense_stages_.size(); ++s) {
    std::vector<Var> history{d};
    for (const auto& layer : dense_stages_[s]) history.push_back(dense_block(tape, history, layer, mode));
    d = apply(tape, ops::concat(tape, history, 1), transitions_[s], mode);
    dense_taps.push_back(d);
  }
  out.h_dense = ops::global_avg_pool(tape, d);
  out.dense_logits = apply(tape, out.h_dense, dense_classifier_);
  out.fusion_logits = apply(tape, ops::concat(tape, out.h_res, out.h_dense, 1), fusion_classifier_);

  if (options.projections) {
    for (std::size_t s = 0; s < kStageCount; ++s) {
      out.stage_projections.emplace_back(project(tape, res_taps[s], res_heads_[s]),
                                         project(tape, dense_taps[s], dense_heads_[s]));
    }
  }
  return out;
}

std::vector<Parameter*> DualPathNetwork::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> DualPathNetwork::parameters(ParamGroup group) {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (groups_[i] == group) out.push_back(&params_[i]);
  }
  return out;
}

Parameter* DualPathNetwork::find(const std::string& id) {
  for (Parameter& p : params_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::size_t DualPathNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void DualPathNetwork::zero_residual_branches() {
  for (const auto& stage : res_stages_)
    for (const auto& block : stage) {
      params_[block.conv2.weight].value.fill(0.0);
      params_[block.conv2.bias].value.fill(0.0);
    }
}

}  // namespace dcdp
