#include "opinet/checkpoint.hpp"

#include "opinet/binary_io.hpp"
#include "opinet/error.hpp"

namespace opinet {

namespace {

constexpr std::string_view kMagic = "OPNETCK1";
constexpr int kFormatVersion = 1;

}  // namespace

nlohmann::json layer_spec_to_json(const LayerSpec& spec) {
  nlohmann::json j{{"kind", std::string(layer_kind_name(spec.kind))}, {"in_dim", spec.in_dim}, {"out_dim", spec.out_dim}};
  if (spec.kind == LayerKind::se_block) j["se_reduction"] = spec.se_reduction;
  if (spec.kind == LayerKind::linear) j["bias"] = spec.bias;
  return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = parse_layer_kind(j.at("kind").get<std::string>());
  s.in_dim = j.at("in_dim").get<std::size_t>();
  s.out_dim = j.at("out_dim").get<std::size_t>();
  s.se_reduction = j.value("se_reduction", std::size_t{1});
  s.bias = j.value("bias", s.kind != LayerKind::relu && s.kind != LayerKind::layer_norm);
  return s;
}

const Mlp& Checkpoint::network(std::string_view name) const {
  for (const auto& n : networks)
    if (n.name == name) return n.net;
  throw FormatError("checkpoint has no network named '" + std::string(name) + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["dtype"] = "f64le";
  header["seed"] = ckpt.seed;
  header["manifest"] = ckpt.manifest;
  std::size_t offset = 0;
  nlohmann::json nets = nlohmann::json::array();
  for (const auto& n : ckpt.networks) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& s : n.net.specs()) layers.push_back(layer_spec_to_json(s));
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& slot : n.net.params().layout())
      layout.push_back({{"name", slot.name}, {"offset", slot.offset}, {"shape", slot.shape}});
    nets.push_back({{"name", n.name},
                    {"layers", std::move(layers)},
                    {"layout", std::move(layout)},
                    {"payload_offset", offset},
                    {"count", n.net.param_count()}});
    offset += n.net.param_count();
  }
  header["networks"] = std::move(nets);
  header["payload_count"] = offset;

  const std::string text = header.dump();
  std::string out(kMagic);
  append_u64(out, text.size());
  out += text;
  out.reserve(out.size() + 8 * offset);
  for (const auto& n : ckpt.networks)
    for (double v : n.net.params().values()) append_f64(out, v);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  if (in.take(kMagic.size()) != kMagic) throw FormatError(source + ": bad checkpoint magic at offset 0");
  const auto header_len = in.u64();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    in.fail(std::string("malformed checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion) in.fail("unsupported checkpoint version");
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.manifest = header.at("manifest");
    const std::size_t payload_start = in.offset();
    for (const auto& n : header.at("networks")) {
      std::vector<LayerSpec> specs;
      for (const auto& l : n.at("layers")) specs.push_back(layer_spec_from_json(l));
      std::vector<ParamSlot> layout;
      for (const auto& s : n.at("layout"))
        layout.push_back({s.at("name").get<std::string>(), s.at("offset").get<std::size_t>(),
                          s.at("shape").get<Shape>()});
      const auto count = n.at("count").get<std::size_t>();
      const auto first = n.at("payload_offset").get<std::size_t>();
      ByteReader payload(bytes.substr(std::min(bytes.size(), payload_start + 8 * first)), source);
      std::vector<double> values(count);
      for (auto& v : values) v = payload.f64();
      ckpt.networks.push_back({n.at("name").get<std::string>(),
                               Mlp(std::move(specs), ParamVector(std::move(layout), std::move(values)))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": malformed checkpoint header: " + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace opinet
