#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "opinet/neural.hpp"

namespace opinet {

struct NamedNetwork {
  std::string name;
  Mlp net;
};

/// On-disk layout:
///   "OPNETCK1" | u64 header length | JSON header | f64 payload (little endian)
/// The header lists each network's layer specs, parameter layout and payload
/// offset, the seed it was initialised from, and a free-form manifest.
struct Checkpoint {
  std::uint64_t seed = 0;
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<NamedNetwork> networks;

  const Mlp& network(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json layer_spec_to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

}  // namespace opinet
