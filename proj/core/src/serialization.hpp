#pragma once

// Internal helpers shared by the checkpoint and dataset-cache formats.

#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dcdp/error.hpp"
#include "dcdp/model.hpp"
#include "json.hpp"

namespace dcdp::detail {

using nlohmann::json;

/// Hex-float text is exact for every finite double, and round-trips NaN/Inf too.
inline void write_hex(std::ostream& os, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  os.write(buf, res.ptr - buf);
}

inline double read_hex(std::string_view token, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v, std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ParseError("bad hex float '" + std::string(token) + "'", line);
  }
  return v;
}

inline void write_values(std::ostream& os, std::span<const double> values) {
  for (double v : values) {
    os << ' ';
    write_hex(os, v);
  }
}

inline json partition_to_json(const ChannelPartition& p) {
  return json{{"first", p.first}, {"second", p.second}, {"total_channels", p.total_channels}};
}

inline ChannelPartition partition_from_json(const json& j) {
  return ChannelPartition::make(j.at("first").get<std::vector<std::size_t>>(),
                                j.at("second").get<std::vector<std::size_t>>(),
                                j.at("total_channels").get<std::size_t>());
}

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"res_blocks", c.res.blocks_per_stage},   {"res_base_width", c.res.base_width},
              {"dense_layers", c.dense.layers_per_stage}, {"dense_growth", c.dense.growth_rate},
              {"dense_output_dim", c.dense.output_dim},   {"d_dense", c.d_dense()},
              {"d_proj", c.d_proj},
              {"classes", c.classes},                     {"dual_path", c.dual_path},
              {"partition", partition_to_json(c.partition)}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.res.blocks_per_stage = j.at("res_blocks").get<std::vector<std::size_t>>();
  c.res.base_width = j.at("res_base_width").get<std::size_t>();
  c.dense.layers_per_stage = j.at("dense_layers").get<std::vector<std::size_t>>();
  c.dense.growth_rate = j.at("dense_growth").get<std::size_t>();
  c.dense.output_dim = j.at("dense_output_dim").get<std::size_t>();
  c.d_proj = j.at("d_proj").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.dual_path = j.at("dual_path").get<bool>();
  c.partition = partition_from_json(j.at("partition"));
  return c;
}

/// Splits on single spaces.
inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find(' ', start);
    if (end == std::string_view::npos) end = line.size();
    if (end > start) out.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

inline std::size_t parse_size(std::string_view token, std::size_t line) {
  std::size_t v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ParseError("expected a non-negative integer, got '" + std::string(token) + "'", line);
  }
  return v;
}

}  // namespace dcdp::detail
