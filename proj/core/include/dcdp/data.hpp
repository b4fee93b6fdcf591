#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcdp/model.hpp"
#include "dcdp/tensor.hpp"

namespace dcdp {

/// One continuous sensor stream with per-timestep activity labels.
struct SensorRecording {
  Tensor samples;  // [T_total, F]
  std::vector<int> labels;
  std::vector<std::string> channel_names;
  std::size_t classes = 0;
  double sample_rate_hz = 0.0;

  std::size_t length() const noexcept { return labels.size(); }
};

/// Canonical ingest layout: a header row naming F channel columns followed by
/// the label column; comma separated, '.' decimal point, UTF-8.
struct CsvSchema {
  std::string label_column = "label";
  /// Label cells must match one of these names. Empty means labels are
  /// non-negative integers.
  std::vector<std::string> class_names;
  double sample_rate_hz = 0.0;
};

SensorRecording load_csv(const std::filesystem::path& path, const CsvSchema& schema);
SensorRecording load_csv(std::istream& is, const CsvSchema& schema);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

inline constexpr double kStdFloor = 1e-8;

struct WindowedDataset {
  Tensor windows;  // [M, W, F]
  std::vector<int> labels;
  std::size_t window_len = 0;
  std::size_t stride = 0;
  std::size_t classes = 0;
  std::vector<std::string> channel_names;
  std::optional<NormalizationStats> normalization;
  std::optional<ChannelPartition> partition;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t channels() const { return windows.rank() == 3 ? windows.dim(2) : channel_names.size(); }
  /// Windows and labels at `indices`, in that order.
  WindowedDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

/// floor((T - W) / stride) + 1 windows; label = majority of per-step labels,
/// ties resolved toward the final timestep's label when it is among the tied
/// classes, otherwise toward the lowest tied class id. W > T yields an empty
/// dataset and a warning on std::clog.
WindowedDataset sliding_windows(const SensorRecording& rec, std::size_t window_len, std::size_t stride);

/// Majority label of `labels` with the tie rule above.
int window_label(std::span<const int> labels);

/// Appends `more` to `into`; both must share W, F and class count.
void append(WindowedDataset& into, const WindowedDataset& more);

/// Per-channel population mean/std over every timestep of every window.
NormalizationStats fit_normalizer(const WindowedDataset& train);
/// z-score with std floored at kStdFloor; records `stats` on the result.
WindowedDataset apply_normalizer(const WindowedDataset& data, const NormalizationStats& stats);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, round(n * test_fraction) windows (clamped to [1, n-1]) go to test.
SplitIndices stratified_split_indices(std::span<const int> labels, double test_fraction, std::uint64_t seed);
std::pair<WindowedDataset, WindowedDataset> stratified_split(const WindowedDataset& data, double test_fraction,
                                                             std::uint64_t seed);

struct SynthConfig {
  std::size_t classes = 4;
  std::size_t modality1_channels = 3;
  std::size_t modality2_channels = 3;
  std::size_t window_len = 64;
  std::size_t samples_per_class = 16;
  /// Share of the class signal amplitude carried by modality 1.
  double dominance = 0.5;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class c, channel k carries amplitude * sin(2*pi*f_{c,k}*t/W + phi_{c,k}) plus
/// N(0, noise_std) noise. Amplitude is `dominance` on modality-1 channels and
/// `1 - dominance` on modality-2 channels. Frequencies are fixed per (c,k), phases
/// are drawn from the seed. The partition is modality 1 | modality 2.
WindowedDataset synth_generate(const SynthConfig& cfg);
/// Noise-free template of one class, [W, F].
Tensor synth_template(const SynthConfig& cfg, std::size_t cls);

/// Text cache, version 1: header JSON line, optional stats line, one
/// `window <label> <hex values>` line per window, `end`. Bit-exact round trip.
void save_dataset(const WindowedDataset& data, std::ostream& os);
void save_dataset(const WindowedDataset& data, const std::filesystem::path& path);
WindowedDataset load_dataset(std::istream& is);
WindowedDataset load_dataset(const std::filesystem::path& path);

}  // namespace dcdp
