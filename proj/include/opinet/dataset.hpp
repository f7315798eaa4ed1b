#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "opinet/deeponet.hpp"
#include "opinet/fluids.hpp"
#include "opinet/tensor.hpp"

namespace opinet {

struct DatasetConfig {
  FluidConfig fluid;
  std::size_t n_samples = 200;
  std::size_t n_sources = 1;
  std::size_t n_receivers = 64;
  std::array<double, 2> strength_range{0.5, 1.5};
  /// Receivers stay this far inside the walls.
  double receiver_margin = 0.05;
  /// Minimum distance between two receivers of one sample.
  double receiver_spacing = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);
/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const DatasetConfig& cfg);

/// One simulated sample: observations at the receivers plus the sources that
/// produced them. fields columns are (u, v, p).
struct SampleRecord {
  static constexpr std::size_t kFields = 3;

  Tensor receivers;  // [T x 2]
  Tensor fields;     // [T x 3]
  std::vector<SourceSpec> labels;
  std::uint64_t seed = 0;
  std::string config_hash;

  ReceiverSet receiver_set() const { return ReceiverSet(receivers); }
  /// Column f of fields as [T].
  Tensor field(std::size_t f) const;
  bool operator==(const SampleRecord&) const = default;
};

/// "OPNETDS1" | u64 header length | JSON header | f32 little-endian payload
/// (receivers, fields, labels as [N x 4]). Values round to float on write.
std::string encode_sample(const SampleRecord& rec);
SampleRecord decode_sample(std::string_view bytes, const std::string& source = "sample");

/// Uniform receivers in [margin, 1 - margin]^2 with pairwise spacing enforced
/// by rejection.
Tensor draw_receivers(Rng& rng, const DatasetConfig& cfg);

/// Place sources, evolve from rest, sample (u, v, p) at the receivers.
SampleRecord generate_sample(const DatasetConfig& cfg, std::uint64_t sample_seed);

struct FailedSample {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string error;
};

struct GenerationReport {
  std::vector<std::string> files;
  std::vector<FailedSample> failures;
};

/// Generates cfg.n_samples samples in parallel, writes sample_NNNNN.opds and
/// manifest.json into dir. Sample i uses mix_seed(cfg.seed, i). A sample whose
/// simulation throws is skipped and listed in the manifest with its seed.
GenerationReport generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir);

struct Dataset {
  DatasetConfig config;
  std::vector<SampleRecord> samples;
};

/// Reads manifest.json and every listed file. FormatError on a missing file,
/// checksum mismatch or T/F inconsistent with the manifest.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace opinet
