#include "opinet/dataio.hpp"

#include <algorithm>

#include "opinet/binary_io.hpp"
#include "opinet/error.hpp"

namespace opinet {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarPixels = 3 * 32 * 32;

std::string hex_magic(std::uint32_t m) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", m);
  return buf;
}

}  // namespace

Tensor ImageBatch::image(std::size_t i) const {
  const std::size_t n = pixels();
  if (i >= size()) throw DimensionError("image index " + std::to_string(i) + " out of range");
  return Tensor({channels(), height(), width()},
                std::vector<double>(images.data() + i * n, images.data() + (i + 1) * n));
}

ImageBatch ImageBatch::subset(const std::vector<std::size_t>& indices) const {
  const std::size_t n = pixels();
  ImageBatch out;
  out.images = Tensor({indices.size(), channels(), height(), width()});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw DimensionError("image index " + std::to_string(indices[k]) + " out of range");
    std::copy_n(images.data() + indices[k] * n, n, out.images.data() + k * n);
    if (!labels.empty()) out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

ImageBatch ImageBatch::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  return subset(idx);
}

ImageBatch parse_idx_images(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  const auto magic = in.u32_big_endian();
  if (magic != kIdxImages) throw FormatError(source + ": bad IDX image magic " + hex_magic(magic) + " at offset 0");
  const std::size_t n = in.u32_big_endian(), h = in.u32_big_endian(), w = in.u32_big_endian();
  if (in.remaining() != n * h * w) {
    in.fail("header declares " + std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w) + " = " +
            std::to_string(n * h * w) + " pixels, payload has " + std::to_string(in.remaining()));
  }
  ImageBatch out;
  out.images = Tensor({n, 1, h, w});
  const std::string_view px = in.take(n * h * w);
  for (std::size_t k = 0; k < px.size(); ++k) out.images[k] = static_cast<unsigned char>(px[k]) / 255.0;
  return out;
}

std::vector<int> parse_idx_labels(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  const auto magic = in.u32_big_endian();
  if (magic != kIdxLabels) throw FormatError(source + ": bad IDX label magic " + hex_magic(magic) + " at offset 0");
  const std::size_t n = in.u32_big_endian();
  if (in.remaining() != n) {
    in.fail("header declares " + std::to_string(n) + " labels, payload has " + std::to_string(in.remaining()));
  }
  std::vector<int> out(n);
  for (auto& l : out) l = in.u8();
  return out;
}

ImageBatch load_idx(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader peek(bytes, path.string());
  if (peek.u32_big_endian() == kIdxLabels) {
    ImageBatch out;
    out.labels = parse_idx_labels(bytes, path.string());
    return out;
  }
  return parse_idx_images(bytes, path.string());
}

ImageBatch load_idx_pair(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
  ImageBatch out = parse_idx_images(read_file(image_path), image_path.string());
  out.labels = parse_idx_labels(read_file(label_path), label_path.string());
  if (out.labels.size() != out.size()) {
    throw FormatError(label_path.string() + ": " + std::to_string(out.labels.size()) + " labels for " +
                      std::to_string(out.size()) + " images");
  }
  return out;
}

ImageBatch parse_cifar(std::string_view bytes, CifarVariant variant, const std::string& source) {
  const std::size_t label_bytes = variant == CifarVariant::cifar10 ? 1 : 2;
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.empty() || bytes.size() % record != 0) {
    throw FormatError(source + ": length " + std::to_string(bytes.size()) + " is not a multiple of the " +
                      std::to_string(record) + "-byte record (trailing record starts at offset " +
                      std::to_string(bytes.size() / record * record) + ")");
  }
  const std::size_t n = bytes.size() / record;
  ImageBatch out;
  out.images = Tensor({n, 3, 32, 32});
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* r = reinterpret_cast<const unsigned char*>(bytes.data() + i * record);
    out.labels[i] = variant == CifarVariant::cifar100_fine ? r[1] : r[0];
    for (std::size_t k = 0; k < kCifarPixels; ++k) out.images[i * kCifarPixels + k] = r[label_bytes + k] / 255.0;
  }
  return out;
}

ImageBatch load_cifar(const std::filesystem::path& path, CifarVariant variant) {
  return parse_cifar(read_file(path), variant, path.string());
}

CorruptedBatch corrupt(const ImageBatch& batch, const MaskSpec& mask, Rng& rng) {
  const std::size_t b = batch.size(), c = batch.channels(), h = batch.height(), w = batch.width();
  if (mask.side > h || mask.side > w) {
    throw ParameterError("mask side " + std::to_string(mask.side) + " does not fit a " + std::to_string(h) + "x" +
                         std::to_string(w) + " image");
  }
  CorruptedBatch out{batch, Tensor({b, h, w})};
  if (mask.side == 0) return out;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t top = rng.below(h - mask.side + 1);
    const std::size_t left = rng.below(w - mask.side + 1);
    for (std::size_t y = top; y < top + mask.side; ++y)
      for (std::size_t x = left; x < left + mask.side; ++x) {
        out.masks[(i * h + y) * w + x] = 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) out.batch.images[((i * c + ch) * h + y) * w + x] = 0.0;
      }
  }
  return out;
}

CorruptedBatch corrupt(const ImageBatch& batch, const MaskSpec& mask) {
  Rng rng(mask.seed);
  return corrupt(batch, mask, rng);
}

}  // namespace opinet
