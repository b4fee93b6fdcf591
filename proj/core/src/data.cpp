#include "dcdp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <random>

#include "serialization.hpp"

namespace dcdp {

// ---------------------------------------------------------------- csv

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

}  // namespace

SensorRecording load_csv(std::istream& is, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line)) throw ParseError("missing header row", 1);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv(line);
  if (header.size() < 2) throw SchemaError("CSV header needs at least one channel column and a label column");
  if (header.back() != schema.label_column) {
    throw SchemaError("last CSV column is '" + std::string(header.back()) + "', expected label column '" +
                      schema.label_column + "'");
  }

  SensorRecording rec;
  rec.sample_rate_hz = schema.sample_rate_hz;
  for (std::size_t i = 0; i + 1 < header.size(); ++i) rec.channel_names.emplace_back(header[i]);
  const std::size_t channels = rec.channel_names.size();

  std::map<std::string, int, std::less<>> label_ids;
  for (std::size_t i = 0; i < schema.class_names.size(); ++i) label_ids.emplace(schema.class_names[i], int(i));

  std::vector<double> values;
  int max_label = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < channels; ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric value '" + std::string(cell) + "' in column '" + rec.channel_names[c] + "'",
                         line_no);
      }
      values.push_back(v);
    }
    const auto label_cell = cells.back();
    int label = -1;
    if (!label_ids.empty()) {
      auto it = label_ids.find(label_cell);
      if (it == label_ids.end()) {
        throw SchemaError("unknown label '" + std::string(label_cell) + "' at line " + std::to_string(line_no));
      }
      label = it->second;
    } else {
      auto res = std::from_chars(label_cell.data(), label_cell.data() + label_cell.size(), label);
      if (res.ec != std::errc() || res.ptr != label_cell.data() + label_cell.size() || label < 0) {
        throw SchemaError("label '" + std::string(label_cell) + "' at line " + std::to_string(line_no) +
                          " is not a non-negative integer class id");
      }
    }
    max_label = std::max(max_label, label);
    rec.labels.push_back(label);
  }
  rec.samples = Tensor({rec.labels.size(), channels}, std::move(values));
  rec.classes = schema.class_names.empty() ? static_cast<std::size_t>(max_label + 1) : schema.class_names.size();
  return rec;
}

SensorRecording load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return load_csv(is, schema);
}

// ---------------------------------------------------------------- windows

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  WindowedDataset out = *this;
  out.windows = gather_rows(windows, indices);
  out.labels.clear();
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  return out;
}

std::vector<std::size_t> WindowedDataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
  return counts;
}

int window_label(std::span<const int> labels) {
  if (labels.empty()) throw ContractError("window_label: empty window");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  std::size_t best = 0;
  for (const auto& [l, n] : counts) best = std::max(best, n);
  const int last = labels.back();
  if (counts[last] == best) return last;
  for (const auto& [l, n] : counts) {
    if (n == best) return l;
  }
  return last;
}

WindowedDataset sliding_windows(const SensorRecording& rec, std::size_t window_len, std::size_t stride) {
  if (stride < 1) throw ContractError("sliding_windows: stride must be >= 1");
  if (window_len < 1) throw ContractError("sliding_windows: window length must be >= 1");
  const std::size_t total = rec.length();
  const std::size_t channels = rec.channel_names.size();
  WindowedDataset out;
  out.window_len = window_len;
  out.stride = stride;
  out.classes = rec.classes;
  out.channel_names = rec.channel_names;
  if (window_len > total) {
    std::clog << "warning: recording of " << total << " samples is shorter than window length " << window_len
              << "; no windows produced\n";
    out.windows = Tensor({0, window_len, channels});
    return out;
  }
  const std::size_t count = (total - window_len) / stride + 1;
  out.windows = Tensor({count, window_len, channels});
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    std::memcpy(out.windows.data() + w * window_len * channels, rec.samples.data() + start * channels,
                window_len * channels * sizeof(double));
    out.labels.push_back(window_label(std::span(rec.labels).subspan(start, window_len)));
  }
  return out;
}

void append(WindowedDataset& into, const WindowedDataset& more) {
  if (into.size() == 0 && into.windows.empty() && into.channel_names.empty()) {
    into = more;
    return;
  }
  if (into.window_len != more.window_len || into.channels() != more.channels()) {
    throw DimensionError("append: window shapes differ");
  }
  into.classes = std::max(into.classes, more.classes);
  Shape shape = into.windows.shape();
  shape[0] += more.size();
  std::vector<double> data = into.windows.storage();
  data.insert(data.end(), more.windows.storage().begin(), more.windows.storage().end());
  into.windows = Tensor(shape, std::move(data));
  into.labels.insert(into.labels.end(), more.labels.begin(), more.labels.end());
}

NormalizationStats fit_normalizer(const WindowedDataset& train) {
  const std::size_t channels = train.channels();
  const std::size_t values = train.size() * train.window_len;
  if (values < 2) throw ContractError("fit_normalizer: need at least 2 training values per channel");
  NormalizationStats stats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  const double* x = train.windows.data();
  for (std::size_t i = 0; i < values; ++i)
    for (std::size_t c = 0; c < channels; ++c) stats.mean[c] += x[i * channels + c];
  for (double& m : stats.mean) m /= static_cast<double>(values);
  for (std::size_t i = 0; i < values; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      const double d = x[i * channels + c] - stats.mean[c];
      stats.stddev[c] += d * d;
    }
  for (double& s : stats.stddev) s = std::sqrt(s / static_cast<double>(values));
  return stats;
}

WindowedDataset apply_normalizer(const WindowedDataset& data, const NormalizationStats& stats) {
  const std::size_t channels = data.channels();
  if (stats.mean.size() != channels || stats.stddev.size() != channels) {
    throw DimensionError("apply_normalizer: stats for " + std::to_string(stats.mean.size()) + " channels, data has " +
                         std::to_string(channels));
  }
  WindowedDataset out = data;
  double* x = out.windows.data();
  const std::size_t values = out.windows.size() / std::max<std::size_t>(channels, 1);
  for (std::size_t i = 0; i < values; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      x[i * channels + c] = (x[i * channels + c] - stats.mean[c]) / std::max(stats.stddev[c], kStdFloor);
    }
  out.normalization = stats;
  return out;
}

// ---------------------------------------------------------------- split

SplitIndices stratified_split_indices(std::span<const int> labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("stratified_split: test fraction must be in (0,1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      throw ContractError("stratified_split: class " + std::to_string(cls) + " has only " +
                          std::to_string(idx.size()) + " window; need at least 2");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_test = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(n * test_fraction)), 1,
                                                idx.size() - 1);
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<WindowedDataset, WindowedDataset> stratified_split(const WindowedDataset& data, double test_fraction,
                                                             std::uint64_t seed) {
  const SplitIndices idx = stratified_split_indices(data.labels, test_fraction, seed);
  return {data.subset(idx.train), data.subset(idx.test)};
}

// ---------------------------------------------------------------- synthetic

void SynthConfig::validate() const {
  if (classes < 1 || modality1_channels < 1 || modality2_channels < 1 || window_len < 1 || samples_per_class < 1) {
    throw ContractError("synth: all counts must be >= 1");
  }
  if (!(dominance >= 0.0 && dominance <= 1.0)) throw ContractError("synth: dominance must be in [0,1]");
  if (!(noise_std >= 0.0)) throw ContractError("synth: noise_std must be >= 0");
}

namespace {

std::vector<double> synth_phases(const SynthConfig& cfg) {
  const std::size_t channels = cfg.modality1_channels + cfg.modality2_channels;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> out(cfg.classes * channels);
  for (double& p : out) p = phase(rng);
  return out;
}

Tensor make_template(const SynthConfig& cfg, std::size_t cls, const std::vector<double>& phases) {
  const std::size_t channels = cfg.modality1_channels + cfg.modality2_channels;
  Tensor t({cfg.window_len, channels});
  for (std::size_t k = 0; k < channels; ++k) {
    const double amplitude = k < cfg.modality1_channels ? cfg.dominance : 1.0 - cfg.dominance;
    const double cycles = static_cast<double>(cls + 1) + 0.25 * static_cast<double>(k);
    const double phi = phases[cls * channels + k];
    for (std::size_t s = 0; s < cfg.window_len; ++s) {
      const double arg = 2.0 * std::numbers::pi * cycles * static_cast<double>(s) /
                         static_cast<double>(cfg.window_len);
      t.at(s, k) = amplitude * std::sin(arg + phi);
    }
  }
  return t;
}

}  // namespace

Tensor synth_template(const SynthConfig& cfg, std::size_t cls) {
  cfg.validate();
  if (cls >= cfg.classes) throw LabelError("synth_template: class " + std::to_string(cls) + " out of range");
  return make_template(cfg, cls, synth_phases(cfg));
}

WindowedDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t channels = cfg.modality1_channels + cfg.modality2_channels;
  const std::vector<double> phases = synth_phases(cfg);
  std::vector<Tensor> templates;
  for (std::size_t c = 0; c < cfg.classes; ++c) templates.push_back(make_template(cfg, c, phases));

  // Separate stream for noise so templates do not depend on the sample count.
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t count = cfg.classes * cfg.samples_per_class;
  const std::size_t per_window = cfg.window_len * channels;

  WindowedDataset out;
  out.window_len = cfg.window_len;
  out.stride = cfg.window_len;
  out.classes = cfg.classes;
  out.windows = Tensor({count, cfg.window_len, channels});
  for (std::size_t k = 0; k < channels; ++k) {
    out.channel_names.push_back((k < cfg.modality1_channels ? "m1_" : "m2_") + std::to_string(k));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % cfg.classes;
    out.labels.push_back(static_cast<int>(cls));
    double* dst = out.windows.data() + i * per_window;
    const double* src = templates[cls].data();
    for (std::size_t v = 0; v < per_window; ++v) {
      dst[v] = src[v] + (cfg.noise_std > 0.0 ? cfg.noise_std * noise(rng) : 0.0);
    }
  }
  out.partition = ChannelPartition::contiguous(channels, cfg.modality1_channels);
  return out;
}

// ---------------------------------------------------------------- cache

namespace {
constexpr std::string_view kDatasetMagic = "DCDP-DATASET";
constexpr int kDatasetVersion = 1;
}  // namespace

void save_dataset(const WindowedDataset& data, std::ostream& os) {
  detail::json header{{"window_len", data.window_len}, {"stride", data.stride},
                      {"classes", data.classes},       {"channels", data.channels()},
                      {"count", data.size()},          {"channel_names", data.channel_names}};
  if (data.partition) header["partition"] = detail::partition_to_json(*data.partition);
  os << kDatasetMagic << ' ' << kDatasetVersion << '\n';
  os << "header " << header.dump() << '\n';
  if (data.normalization) {
    os << "stats " << data.normalization->mean.size();
    detail::write_values(os, data.normalization->mean);
    detail::write_values(os, data.normalization->stddev);
    os << '\n';
  }
  const std::size_t per_window = data.window_len * data.channels();
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << "window " << data.labels[i];
    detail::write_values(os, data.windows.values().subspan(i * per_window, per_window));
    os << '\n';
  }
  os << "end\n";
  if (!os) throw IoError("failed writing dataset cache");
}

void save_dataset(const WindowedDataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  save_dataset(data, os);
}

WindowedDataset load_dataset(std::istream& is) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line)) throw ParseError("empty dataset cache", 1);
  const auto magic = detail::split_tokens(line);
  if (magic.size() != 2 || magic[0] != kDatasetMagic) throw ParseError("not a dataset cache", line_no);
  if (detail::parse_size(magic[1], line_no) != kDatasetVersion) {
    throw ParseError("unsupported dataset cache version", line_no);
  }
  ++line_no;
  if (!std::getline(is, line) || line.rfind("header ", 0) != 0) throw ParseError("missing header", line_no);
  WindowedDataset out;
  std::size_t channels = 0, count = 0;
  try {
    const auto h = detail::json::parse(line.substr(7));
    out.window_len = h.at("window_len").get<std::size_t>();
    out.stride = h.at("stride").get<std::size_t>();
    out.classes = h.at("classes").get<std::size_t>();
    channels = h.at("channels").get<std::size_t>();
    count = h.at("count").get<std::size_t>();
    out.channel_names = h.at("channel_names").get<std::vector<std::string>>();
    if (h.contains("partition")) out.partition = detail::partition_from_json(h.at("partition"));
  } catch (const detail::json::exception& e) {
    throw ParseError(std::string("bad dataset header: ") + e.what(), line_no);
  }
  const std::size_t per_window = out.window_len * channels;
  std::vector<double> values;
  values.reserve(count * per_window);
  bool ended = false;
  while (std::getline(is, line)) {
    ++line_no;
    const auto tok = detail::split_tokens(line);
    if (tok.empty()) continue;
    if (tok[0] == "end") {
      ended = true;
      break;
    }
    if (tok[0] == "stats") {
      if (tok.size() < 2) throw ParseError("truncated stats record", line_no);
      const std::size_t c = detail::parse_size(tok[1], line_no);
      if (c != channels || tok.size() != 2 + 2 * c) throw ParseError("wrong stats value count", line_no);
      NormalizationStats st;
      for (std::size_t i = 0; i < c; ++i) st.mean.push_back(detail::read_hex(tok[2 + i], line_no));
      for (std::size_t i = 0; i < c; ++i) st.stddev.push_back(detail::read_hex(tok[2 + c + i], line_no));
      out.normalization = std::move(st);
    } else if (tok[0] == "window") {
      if (tok.size() != 2 + per_window) throw ParseError("wrong window value count", line_no);
      int label = 0;
      auto res = std::from_chars(tok[1].data(), tok[1].data() + tok[1].size(), label);
      if (res.ec != std::errc() || label < 0 || static_cast<std::size_t>(label) >= out.classes) {
        throw SchemaError("window label '" + std::string(tok[1]) + "' invalid at line " + std::to_string(line_no));
      }
      out.labels.push_back(label);
      for (std::size_t i = 0; i < per_window; ++i) values.push_back(detail::read_hex(tok[2 + i], line_no));
    } else {
      throw ParseError("unknown record '" + std::string(tok[0]) + "'", line_no);
    }
  }
  if (!ended) throw ParseError("dataset cache truncated (no end marker)", line_no);
  if (out.labels.size() != count) throw SchemaError("dataset cache window count does not match its header");
  out.windows = Tensor({count, out.window_len, channels}, std::move(values));
  return out;
}

WindowedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset cache " + path.string());
  return load_dataset(is);
}

}  // namespace dcdp
