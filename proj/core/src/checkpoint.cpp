#include "dcdp/checkpoint.hpp"

#include <fstream>
#include <map>

#include "serialization.hpp"

namespace dcdp {

namespace {
constexpr std::string_view kMagic = "DCDP-CHECKPOINT";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(const DualPathNetwork& net, std::ostream& os) {
  os << kMagic << ' ' << kVersion << '\n';
  os << "header " << detail::model_config_to_json(net.config()).dump() << '\n';
  for (const Parameter& p : net.parameter_storage()) {
    os << "param " << p.id << ' ';
    const Shape& s = p.value.shape();
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    detail::write_values(os, p.value.values());
    os << '\n';
  }
  const auto& states = net.norm_states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    os << "norm " << net.norm_state_ids()[i] << ' ' << states[i].running_mean.size();
    detail::write_values(os, states[i].running_mean.values());
    detail::write_values(os, states[i].running_var.values());
    os << '\n';
  }
  os << "end\n";
  if (!os) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const DualPathNetwork& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  save_checkpoint(net, os);
}

DualPathNetwork load_checkpoint(std::istream& is) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line)) throw ParseError("empty checkpoint", 1);
  const auto magic = detail::split_tokens(line);
  if (magic.size() != 2 || magic[0] != kMagic) throw ParseError("not a checkpoint file", line_no);
  if (detail::parse_size(magic[1], line_no) != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::string(magic[1]), line_no);
  }
  ++line_no;
  if (!std::getline(is, line) || line.rfind("header ", 0) != 0) throw ParseError("missing header", line_no);
  ModelConfig config;
  try {
    config = detail::model_config_from_json(detail::json::parse(line.substr(7)));
  } catch (const detail::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what(), line_no);
  }
  DualPathNetwork net(config, 0);

  std::map<std::string, BatchNormState*> states;
  for (std::size_t i = 0; i < net.norm_states().size(); ++i) states[net.norm_state_ids()[i]] = &net.norm_states()[i];
  std::size_t params_seen = 0, states_seen = 0;
  bool ended = false;

  while (std::getline(is, line)) {
    ++line_no;
    const auto tok = detail::split_tokens(line);
    if (tok.empty()) continue;
    if (tok[0] == "end") {
      ended = true;
      break;
    }
    if (tok.size() < 3) throw ParseError("truncated record", line_no);
    const std::string id(tok[1]);
    if (tok[0] == "param") {
      Parameter* p = net.find(id);
      if (!p) throw SchemaError("checkpoint parameter '" + id + "' does not exist in the configured network");
      Shape shape;
      std::string_view dims = tok[2];
      while (!dims.empty()) {
        const std::size_t comma = dims.find(',');
        shape.push_back(detail::parse_size(dims.substr(0, comma), line_no));
        dims = comma == std::string_view::npos ? std::string_view{} : dims.substr(comma + 1);
      }
      if (shape != p->value.shape()) {
        throw SchemaError("checkpoint parameter '" + id + "' has shape " + shape_string(shape) + ", expected " +
                          shape_string(p->value.shape()));
      }
      if (tok.size() != 3 + p->value.size()) throw ParseError("wrong value count for '" + id + "'", line_no);
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = detail::read_hex(tok[3 + i], line_no);
      ++params_seen;
    } else if (tok[0] == "norm") {
      auto it = states.find(id);
      if (it == states.end()) throw SchemaError("checkpoint norm state '" + id + "' is unknown");
      const std::size_t c = detail::parse_size(tok[2], line_no);
      BatchNormState& st = *it->second;
      if (c != st.running_mean.size() || tok.size() != 3 + 2 * c) {
        throw ParseError("wrong value count for norm state '" + id + "'", line_no);
      }
      for (std::size_t i = 0; i < c; ++i) {
        st.running_mean[i] = detail::read_hex(tok[3 + i], line_no);
        st.running_var[i] = detail::read_hex(tok[3 + c + i], line_no);
      }
      ++states_seen;
    } else {
      throw ParseError("unknown record '" + std::string(tok[0]) + "'", line_no);
    }
  }
  if (!ended) throw ParseError("checkpoint truncated (no end marker)", line_no);
  if (params_seen != net.parameter_storage().size() || states_seen != net.norm_states().size()) {
    throw SchemaError("checkpoint is missing parameters or norm states");
  }
  for (Parameter& p : net.parameter_storage()) p.zero_grad();
  return net;
}

DualPathNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return load_checkpoint(is);
}

}  // namespace dcdp
