#include "opinet/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>

#include "opinet/binary_io.hpp"
#include "opinet/error.hpp"
#include "opinet/parallel.hpp"
#include "opinet/rng.hpp"

namespace opinet {

namespace {

constexpr std::string_view kMagic = "OPNETDS1";
constexpr int kFormatVersion = 1;

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu.opds", i);
  return buf;
}

}  // namespace

void DatasetConfig::validate() const {
  fluid.validate();
  if (n_samples == 0) throw ParameterError("n_samples must be positive");
  if (n_sources == 0) throw ParameterError("n_sources must be positive");
  if (n_receivers == 0) throw ParameterError("n_receivers must be positive");
  if (!(strength_range[0] <= strength_range[1])) throw ParameterError("strength_range is empty");
  if (!(receiver_margin >= 0.0 && receiver_margin < 0.5)) throw ParameterError("receiver_margin must lie in [0, 0.5)");
  if (receiver_spacing < 0.0) throw ParameterError("receiver_spacing must be non-negative");
  const double side = 1.0 - 2.0 * receiver_margin;
  // Loose packing bound so rejection sampling terminates.
  if (static_cast<double>(n_receivers) * receiver_spacing * receiver_spacing > 0.25 * side * side) {
    throw ParameterError("receiver_spacing too large for n_receivers");
  }
}

nlohmann::json to_json(const DatasetConfig& c) {
  return {{"fluid", to_json(c.fluid)},
          {"n_samples", c.n_samples},
          {"n_sources", c.n_sources},
          {"n_receivers", c.n_receivers},
          {"strength_range", c.strength_range},
          {"receiver_margin", c.receiver_margin},
          {"receiver_spacing", c.receiver_spacing},
          {"seed", c.seed}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.fluid = fluid_config_from_json(j.at("fluid"));
  c.n_samples = j.at("n_samples");
  c.n_sources = j.at("n_sources");
  c.n_receivers = j.at("n_receivers");
  c.strength_range = j.at("strength_range");
  c.receiver_margin = j.at("receiver_margin");
  c.receiver_spacing = j.at("receiver_spacing");
  c.seed = j.at("seed");
  return c;
}

std::string config_hash(const DatasetConfig& cfg) {
  nlohmann::json j = to_json(cfg);
  // The per-sample physics does not depend on how many samples were asked for.
  j.erase("n_samples");
  return hex64(fnv1a64(j.dump()));
}

Tensor SampleRecord::field(std::size_t f) const {
  if (f >= fields.cols()) throw DimensionError("field index " + std::to_string(f) + " out of range");
  Tensor out({fields.rows()});
  for (std::size_t t = 0; t < fields.rows(); ++t) out[t] = fields(t, f);
  return out;
}

std::string encode_sample(const SampleRecord& rec) {
  const std::size_t T = rec.receivers.rows();
  if (rec.receivers.shape() != Shape{T, 2} || rec.fields.shape() != Shape{T, SampleRecord::kFields}) {
    throw DimensionError("sample record shapes do not match: receivers " + shape_string(rec.receivers.shape()) +
                         ", fields " + shape_string(rec.fields.shape()));
  }
  nlohmann::json header{{"format_version", kFormatVersion},
                        {"dtype", "f32le"},
                        {"T", T},
                        {"F", SampleRecord::kFields},
                        {"N", rec.labels.size()},
                        {"seed", rec.seed},
                        {"config_hash", rec.config_hash}};
  const std::string text = header.dump();
  std::string out(kMagic);
  append_u64(out, text.size());
  out += text;
  for (double v : rec.receivers.values()) append_f32(out, static_cast<float>(v));
  for (double v : rec.fields.values()) append_f32(out, static_cast<float>(v));
  for (const auto& s : rec.labels)
    for (double v : {s.location[0], s.location[1], s.strength[0], s.strength[1]}) append_f32(out, static_cast<float>(v));
  return out;
}

SampleRecord decode_sample(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  if (in.take(kMagic.size()) != kMagic) throw FormatError(source + ": bad dataset magic at offset 0");
  const auto header_len = in.u64();
  const std::size_t header_at = in.offset();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": malformed header at offset " + std::to_string(header_at) + ": " + e.what());
  }
  SampleRecord rec;
  std::size_t T = 0, F = 0, N = 0;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion) throw FormatError(source + ": unsupported format_version");
    if (header.at("dtype").get<std::string>() != "f32le") throw FormatError(source + ": unsupported dtype");
    T = header.at("T");
    F = header.at("F");
    N = header.at("N");
    rec.seed = header.at("seed");
    rec.config_hash = header.at("config_hash");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": bad header field: " + e.what());
  }
  if (F != SampleRecord::kFields) throw FormatError(source + ": expected F = 3, got " + std::to_string(F));
  const std::size_t expected = 4 * (2 * T + F * T + 4 * N);
  if (in.remaining() != expected) {
    in.fail("payload holds " + std::to_string(in.remaining()) + " bytes, header implies " + std::to_string(expected));
  }
  rec.receivers = Tensor({T, 2});
  for (auto& v : rec.receivers.values()) v = in.f32();
  rec.fields = Tensor({T, F});
  for (auto& v : rec.fields.values()) v = in.f32();
  rec.labels.resize(N);
  for (auto& s : rec.labels) {
    s.location[0] = in.f32();
    s.location[1] = in.f32();
    s.strength[0] = in.f32();
    s.strength[1] = in.f32();
  }
  return rec;
}

Tensor draw_receivers(Rng& rng, const DatasetConfig& cfg) {
  const double lo = cfg.receiver_margin, hi = 1.0 - cfg.receiver_margin;
  const double min_d2 = cfg.receiver_spacing * cfg.receiver_spacing;
  Tensor pts({cfg.n_receivers, 2});
  std::size_t have = 0;
  while (have < cfg.n_receivers) {
    const double x = rng.uniform(lo, hi), y = rng.uniform(lo, hi);
    bool ok = true;
    for (std::size_t k = 0; k < have && ok; ++k) {
      const double dx = pts(k, 0) - x, dy = pts(k, 1) - y;
      ok = dx * dx + dy * dy >= min_d2;
    }
    if (!ok) continue;
    pts(have, 0) = x;
    pts(have, 1) = y;
    ++have;
  }
  return pts;
}

SampleRecord generate_sample(const DatasetConfig& cfg, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  SampleRecord rec;
  rec.seed = sample_seed;
  rec.config_hash = config_hash(cfg);
  rec.labels = place_sources(rng, cfg.n_sources, cfg.strength_range);
  rec.receivers = draw_receivers(rng, cfg);
  const FlowField flow = simulate(rec.labels, cfg.fluid);
  rec.fields = Tensor({cfg.n_receivers, SampleRecord::kFields});
  const Tensor* grids[3] = {&flow.u, &flow.v, &flow.p};
  for (std::size_t f = 0; f < SampleRecord::kFields; ++f) {
    const Tensor col = sample_grid(*grids[f], cfg.fluid, rec.receivers);
    for (std::size_t t = 0; t < cfg.n_receivers; ++t) rec.fields(t, f) = col[t];
  }
  return rec;
}

GenerationReport generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ResourceError("cannot create " + dir.string() + ": " + ec.message());

  const std::size_t n = cfg.n_samples;
  std::vector<std::string> encoded(n);
  std::vector<std::string> errors(n);
  parallel_for(n, [&](std::size_t i) {
    try {
      encoded[i] = encode_sample(generate_sample(cfg, mix_seed(cfg.seed, i)));
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  GenerationReport report;
  nlohmann::json files = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      report.failures.push_back({i, mix_seed(cfg.seed, i), errors[i]});
      failures.push_back({{"index", i}, {"seed", mix_seed(cfg.seed, i)}, {"error", errors[i]}});
      std::fprintf(stderr, "datagen: sample %zu (seed %llu) failed: %s\n", i,
                   static_cast<unsigned long long>(mix_seed(cfg.seed, i)), errors[i].c_str());
      continue;
    }
    const std::string name = sample_name(i);
    write_file(dir / name, encoded[i]);
    files.push_back({{"name", name}, {"checksum", hex64(fnv1a64(encoded[i]))}, {"seed", mix_seed(cfg.seed, i)}});
    report.files.push_back(name);
  }
  const nlohmann::json manifest{{"format", std::string(kMagic)},
                                {"format_version", kFormatVersion},
                                {"master_seed", cfg.seed},
                                {"config", to_json(cfg)},
                                {"config_hash", config_hash(cfg)},
                                {"T", cfg.n_receivers},
                                {"F", SampleRecord::kFields},
                                {"files", std::move(files)},
                                {"failures", std::move(failures)}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return report;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw FormatError("no dataset manifest at " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  std::size_t T = 0, F = 0;
  try {
    ds.config = dataset_config_from_json(manifest.at("config"));
    T = manifest.at("T");
    F = manifest.at("F");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  for (const auto& entry : manifest.at("files")) {
    const std::string name = entry.at("name");
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) throw FormatError("dataset file missing: " + path.string());
    const std::string bytes = read_file(path);
    if (hex64(fnv1a64(bytes)) != entry.at("checksum").get<std::string>()) {
      throw FormatError("checksum mismatch for " + path.string());
    }
    SampleRecord rec = decode_sample(bytes, path.string());
    if (rec.receivers.rows() != T || rec.fields.cols() != F) {
      throw FormatError(path.string() + ": T/F disagree with the manifest");
    }
    ds.samples.push_back(std::move(rec));
  }
  if (ds.samples.empty()) throw FormatError("dataset at " + dir.string() + " has no samples");
  return ds;
}

}  // namespace opinet
