#include "dcdp/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dcdp/error.hpp"

namespace dcdp {

std::string Switches::label() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += "+";
    s += name;
  };
  add(dpfe, "DPFE");
  add(cl, "CL");
  add(cgm, "CGM");
  add(da, "DA");
  return s.empty() ? "baseline" : s;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("config: epochs must be >= 1");
  if (batch_size < 2) throw ContractError("config: batch_size must be >= 2 (batch norm)");
  if (!(lambda_align >= 0.0)) throw ContractError("config: lambda_align must be >= 0");
  if (!(temperature > 0.0)) throw ContractError("config: temperature must be > 0");
  if (!(alpha >= 0.0)) throw ContractError("config: alpha must be >= 0");
  if (!(epsilon > 0.0)) throw ContractError("config: epsilon must be > 0");
  if (!(learning_rate > 0.0)) throw ContractError("config: lr must be > 0");
  if (!(momentum_beta >= 0.0 && momentum_beta < 1.0)) throw ContractError("config: momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ContractError("config: weight_decay must be >= 0");
  if (!(augment.scale_range >= 0.0 && augment.scale_range < 1.0)) throw ContractError("config: da_scale must be in [0,1)");
  if (!(augment.jitter_std >= 0.0)) throw ContractError("config: da_jitter must be >= 0");
  if (!(bn_decay >= 0.0 && bn_decay < 1.0)) throw ContractError("config: bn_decay must be in [0,1)");
  if (d_proj < 1) throw ContractError("config: d_proj must be >= 1");
  if (partition_first.empty() != partition_second.empty()) {
    throw ContractError("config: give both partition_first and partition_second, or neither");
  }
  res.validate();
  dense.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ParseError("config key '" + key + "': '" + v + "' is not a number", 0);
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ParseError("config key '" + key + "': '" + v + "' is not a non-negative integer", 0);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ParseError("config key '" + key + "': '" + v + "' is not a boolean", 0);
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(key, trim(item)));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

void apply_setting(TrainConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "epochs") cfg.epochs = parse_uint(key, v);
  else if (key == "batch_size") cfg.batch_size = parse_uint(key, v);
  else if (key == "lambda_align") cfg.lambda_align = parse_double(key, v);
  else if (key == "temperature") cfg.temperature = parse_double(key, v);
  else if (key == "alpha") cfg.alpha = parse_double(key, v);
  else if (key == "epsilon") cfg.epsilon = parse_double(key, v);
  else if (key == "optimizer") {
    if (v == "adamw") cfg.optimizer = OptimizerKind::kAdamW;
    else if (v == "momentum" || v == "sgd-momentum") cfg.optimizer = OptimizerKind::kMomentum;
    else throw ParseError("config key 'optimizer': expected adamw or momentum, got '" + v + "'", 0);
  }
  else if (key == "lr") cfg.learning_rate = parse_double(key, v);
  else if (key == "momentum") cfg.momentum_beta = parse_double(key, v);
  else if (key == "weight_decay") cfg.weight_decay = parse_double(key, v);
  else if (key == "dpfe") cfg.switches.dpfe = parse_bool(key, v);
  else if (key == "cl") cfg.switches.cl = parse_bool(key, v);
  else if (key == "cgm") cfg.switches.cgm = parse_bool(key, v);
  else if (key == "da") cfg.switches.da = parse_bool(key, v);
  else if (key == "modulate_backbone") cfg.modulate_backbone = parse_bool(key, v);
  else if (key == "da_scale") cfg.augment.scale_range = parse_double(key, v);
  else if (key == "da_jitter") cfg.augment.jitter_std = parse_double(key, v);
  else if (key == "seed") cfg.seed = parse_uint(key, v);
  else if (key == "res_blocks") cfg.res.blocks_per_stage = parse_list(key, v);
  else if (key == "res_width") cfg.res.base_width = parse_uint(key, v);
  else if (key == "dense_layers") cfg.dense.layers_per_stage = parse_list(key, v);
  else if (key == "dense_growth") cfg.dense.growth_rate = parse_uint(key, v);
  else if (key == "dense_out") cfg.dense.output_dim = parse_uint(key, v);
  else if (key == "d_proj") cfg.d_proj = parse_uint(key, v);
  else if (key == "partition_first") cfg.partition_first = parse_list(key, v);
  else if (key == "partition_second") cfg.partition_second = parse_list(key, v);
  else if (key == "bn_decay") cfg.bn_decay = parse_double(key, v);
  else throw ParseError("unknown config key '" + key + "'", 0);
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    try {
      apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return base;
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "epochs = " << c.epochs << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "lambda_align = " << c.lambda_align << '\n'
     << "temperature = " << c.temperature << '\n'
     << "alpha = " << c.alpha << '\n'
     << "epsilon = " << c.epsilon << '\n'
     << "optimizer = " << (c.optimizer == OptimizerKind::kAdamW ? "adamw" : "momentum") << '\n'
     << "lr = " << c.learning_rate << '\n'
     << "momentum = " << c.momentum_beta << '\n'
     << "weight_decay = " << c.weight_decay << '\n'
     << "dpfe = " << (c.switches.dpfe ? "on" : "off") << '\n'
     << "cl = " << (c.switches.cl ? "on" : "off") << '\n'
     << "cgm = " << (c.switches.cgm ? "on" : "off") << '\n'
     << "da = " << (c.switches.da ? "on" : "off") << '\n'
     << "modulate_backbone = " << (c.modulate_backbone ? "on" : "off") << '\n'
     << "da_scale = " << c.augment.scale_range << '\n'
     << "da_jitter = " << c.augment.jitter_std << '\n'
     << "seed = " << c.seed << '\n'
     << "res_blocks = " << join(c.res.blocks_per_stage) << '\n'
     << "res_width = " << c.res.base_width << '\n'
     << "dense_layers = " << join(c.dense.layers_per_stage) << '\n'
     << "dense_growth = " << c.dense.growth_rate << '\n'
     << "dense_out = " << c.dense.output_dim << '\n'
     << "d_proj = " << c.d_proj << '\n'
     << "bn_decay = " << c.bn_decay << '\n';
  if (!c.partition_first.empty()) {
    os << "partition_first = " << join(c.partition_first) << '\n'
       << "partition_second = " << join(c.partition_second) << '\n';
  }
  return os.str();
}

ModelConfig make_model_config(const TrainConfig& cfg, std::size_t channels, std::size_t classes,
                              const std::optional<ChannelPartition>& dataset_partition,
                              const std::vector<std::string>& channel_names) {
  ModelConfig m;
  m.res = cfg.res;
  m.dense = cfg.dense;
  m.d_proj = cfg.d_proj;
  m.classes = classes;
  m.dual_path = cfg.switches.dpfe;
  if (!cfg.partition_first.empty()) {
    m.partition = ChannelPartition::make(cfg.partition_first, cfg.partition_second, channels);
  } else if (dataset_partition) {
    m.partition = *dataset_partition;
  } else {
    m.partition = ChannelPartition::from_channel_names(channel_names);
  }
  if (m.partition.total_channels != channels) {
    throw DimensionError("partition covers " + std::to_string(m.partition.total_channels) + " channels, data has " +
                         std::to_string(channels));
  }
  return m;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace dcdp
