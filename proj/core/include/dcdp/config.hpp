#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcdp/model.hpp"

namespace dcdp {

enum class OptimizerKind { kAdamW, kMomentum };

/// Ablation switches: dual-path extraction, contrastive learning, confidence-driven
/// gradient modulation, data augmentation.
struct Switches {
  bool dpfe = true;
  bool cl = true;
  bool cgm = true;
  bool da = true;

  /// e.g. "DPFE+CL+CGM+DA", or "baseline" when everything is off.
  std::string label() const;
  friend bool operator==(const Switches&, const Switches&) = default;
};

struct AugmentConfig {
  /// Per-window amplitude factor drawn from U[1 - scale_range, 1 + scale_range].
  double scale_range = 0.1;
  /// Std of additive Gaussian jitter, in normalized units.
  double jitter_std = 0.01;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lambda_align = 0.7;
  double temperature = 0.5;
  double alpha = 0.9;
  double epsilon = 1e-8;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double learning_rate = 1e-3;
  double momentum_beta = 0.9;
  double weight_decay = 0.01;
  Switches switches;
  bool modulate_backbone = false;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  ResidualPathConfig res;
  DensePathConfig dense;
  std::size_t d_proj = 32;
  /// Explicit channel partition; otherwise taken from the dataset, then from channel names.
  std::vector<std::size_t> partition_first;
  std::vector<std::size_t> partition_second;
  double bn_decay = 0.9;

  void validate() const;
};

/// Applies one `key = value` setting. Unknown keys and malformed values raise ParseError.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Reads a key-value file: one `key = value` per line, `#` starts a comment.
/// Keys match the names accepted by apply_setting.
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Serializes every key understood by apply_setting.
std::string config_to_text(const TrainConfig& cfg);

/// Architecture for `cfg` on data with `channels` inputs and `classes` classes.
ModelConfig make_model_config(const TrainConfig& cfg, std::size_t channels, std::size_t classes,
                              const std::optional<ChannelPartition>& dataset_partition,
                              const std::vector<std::string>& channel_names);

/// Stateless splitmix64 stream derivation so each RNG consumer gets its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dcdp
