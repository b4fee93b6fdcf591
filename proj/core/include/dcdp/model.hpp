#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcdp/autograd.hpp"
#include "dcdp/ops.hpp"

namespace dcdp {

/// Two disjoint, non-empty, sorted channel index sets covering [0, F).
struct ChannelPartition {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  std::size_t total_channels = 0;

  /// Sorts both sets and validates coverage and disjointness.
  static ChannelPartition make(std::vector<std::size_t> first, std::vector<std::size_t> second,
                               std::size_t total_channels);
  /// First `split` channels vs the rest.
  static ChannelPartition contiguous(std::size_t total_channels, std::size_t split);
  /// Accelerometer-looking names ("acc", "accel", "accelerometer" prefix/substring,
  /// case-insensitive) go to the first set, all others to the second.
  static ChannelPartition from_channel_names(const std::vector<std::string>& names);

  void validate() const;
  friend bool operator==(const ChannelPartition&, const ChannelPartition&) = default;
};

/// X[N,T,F] -> (X[:, :, first], X[:, :, second]), channel order preserved.
std::pair<Tensor, Tensor> partition_input(const Tensor& x, const ChannelPartition& partition);
/// Inverse of partition_input.
Tensor scatter_partitions(const Tensor& x1, const Tensor& x2, const ChannelPartition& partition);

struct ResidualPathConfig {
  std::vector<std::size_t> blocks_per_stage{1, 1, 1, 1};
  /// Stage s has base_width * 2^s channels.
  std::size_t base_width = 8;

  std::size_t stage_width(std::size_t stage) const { return base_width << stage; }
  std::size_t output_dim() const { return stage_width(blocks_per_stage.size() - 1); }
  void validate() const;
  friend bool operator==(const ResidualPathConfig&, const ResidualPathConfig&) = default;
};

struct DensePathConfig {
  std::vector<std::size_t> layers_per_stage{2, 2, 2, 2};
  std::size_t growth_rate = 8;
  /// Channels produced by the final transition (d_dense). 0 means "match the residual path".
  std::size_t output_dim = 0;

  void validate() const;
  friend bool operator==(const DensePathConfig&, const DensePathConfig&) = default;
};

struct ModelConfig {
  ResidualPathConfig res;
  DensePathConfig dense;
  ChannelPartition partition;
  std::size_t d_proj = 32;
  std::size_t classes = 0;
  /// false builds the single residual-path baseline over all channels.
  bool dual_path = true;

  std::size_t d_res() const { return res.output_dim(); }
  std::size_t d_dense() const { return dense.output_dim ? dense.output_dim : d_res(); }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::size_t kStageCount = 4;
/// Smallest window length the four-stage layout can downsample.
inline constexpr std::size_t kMinWindowLength = 8;

enum class ParamGroup {
  kResBackbone,
  kDenseBackbone,
  kProjectionHeads,
  kResClassifier,
  kDenseClassifier,
  kFusionClassifier,
};

/// Tape handles of one forward pass. In single-path mode only the residual
/// fields are populated and `fusion_logits` aliases `res_logits`.
struct ForwardOutputs {
  std::vector<std::pair<Var, Var>> stage_projections;
  Var h_res;
  Var h_dense;
  Var res_logits;
  Var dense_logits;
  Var fusion_logits;
  bool dual_path = true;
};

struct ForwardOptions {
  /// Skipped entirely (not recorded) when false.
  bool projections = true;
};

class DualPathNetwork {
 public:
  struct Conv {
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
  };
  struct Norm {
    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::size_t state = 0;
  };
  struct Dense {
    std::size_t weight = 0;
    std::size_t bias = 0;
  };
  /// out = in + conv2(relu(bn2(conv1(relu(bn1(in)))))), with a 1x1 projection
  /// on the identity branch when the block changes width or stride.
  struct ResidualBlock {
    Norm bn1;
    Conv conv1;
    Norm bn2;
    Conv conv2;
    std::optional<Conv> shortcut;
  };
  /// bn -> relu -> conv(3) producing growth_rate channels.
  struct DenseLayer {
    Norm bn;
    Conv conv;
  };
  /// bn -> relu -> conv(1) -> mean-pool(pool); pool 1 means no pooling.
  struct Transition {
    Norm bn;
    Conv conv;
    std::size_t pool = 2;
  };
  struct ProjectionHead {
    Dense fc1;
    Dense fc2;
  };

  DualPathNetwork(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  ForwardOutputs forward(Tape& tape, const Tensor& x, Mode mode, ForwardOptions options = {});

  Var residual_block(Tape& tape, Var h, const ResidualBlock& block, Mode mode);
  /// Concatenates `history` on the channel axis, applies the layer, returns only the new channels.
  Var dense_block(Tape& tape, const std::vector<Var>& history, const DenseLayer& layer, Mode mode);

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> parameters(ParamGroup group);
  std::vector<Parameter>& parameter_storage() noexcept { return params_; }
  const std::vector<Parameter>& parameter_storage() const noexcept { return params_; }
  Parameter* find(const std::string& id);
  std::size_t parameter_count() const;

  std::vector<BatchNormState>& norm_states() noexcept { return norm_states_; }
  const std::vector<BatchNormState>& norm_states() const noexcept { return norm_states_; }
  const std::vector<std::string>& norm_state_ids() const noexcept { return norm_ids_; }

  const std::vector<std::vector<ResidualBlock>>& res_stages() const noexcept { return res_stages_; }
  const std::vector<std::vector<DenseLayer>>& dense_stages() const noexcept { return dense_stages_; }

  /// Zeroes the last conv of every residual branch, turning each block into its shortcut.
  void zero_residual_branches();

 private:
  std::size_t add_param(const std::string& id, Tensor value, ParamGroup group);
  Norm make_norm(const std::string& id, std::size_t channels, ParamGroup group);

  Var apply(Tape& tape, Var x, const Conv& conv);
  Var apply(Tape& tape, Var x, const Norm& norm, Mode mode);
  Var apply(Tape& tape, Var x, const Dense& dense);
  Var apply(Tape& tape, Var x, const Transition& t, Mode mode);
  Var project(Tape& tape, Var stage_features, const ProjectionHead& head);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<ParamGroup> groups_;
  std::vector<BatchNormState> norm_states_;
  std::vector<std::string> norm_ids_;

  Conv res_stem_;
  std::vector<std::vector<ResidualBlock>> res_stages_;
  Conv dense_stem_;
  std::vector<std::vector<DenseLayer>> dense_stages_;
  std::vector<Transition> transitions_;
  std::vector<ProjectionHead> res_heads_;
  std::vector<ProjectionHead> dense_heads_;
  Dense res_classifier_;
  Dense dense_classifier_;
  Dense fusion_classifier_;
};

}  // namespace dcdp
