#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "opinet/rng.hpp"
#include "opinet/tensor.hpp"

namespace opinet {

/// images: [B x C x H x W] with values in [0, 1]; labels may be empty.
struct ImageBatch {
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t pixels() const { return channels() * height() * width(); }

  /// [C x H x W] copy of image i.
  Tensor image(std::size_t i) const;
  /// Images (and labels, when present) at the given indices, in order.
  ImageBatch subset(const std::vector<std::size_t>& indices) const;
  /// The first n images.
  ImageBatch head(std::size_t n) const;
};

/// IDX image file (magic 0x00000803, dims N x H x W, unsigned bytes) scaled by
/// 1/255. FormatError carries the byte offset of the problem.
ImageBatch parse_idx_images(std::string_view bytes, const std::string& source = "idx");
/// IDX label file (magic 0x00000801).
std::vector<int> parse_idx_labels(std::string_view bytes, const std::string& source = "idx");

/// Reads an IDX file of either kind: images fill .images, labels fill .labels.
ImageBatch load_idx(const std::filesystem::path& path);
/// Images from image_path with labels from label_path; counts must agree.
ImageBatch load_idx_pair(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

enum class CifarVariant {
  cifar10,          // 1 label byte + 3072 pixels
  cifar100_fine,    // coarse + fine label bytes + 3072 pixels; keeps fine
  cifar100_coarse,  // same record, keeps coarse
};

/// CIFAR binary batch: plane-major RGB, 32 x 32.
ImageBatch parse_cifar(std::string_view bytes, CifarVariant variant, const std::string& source = "cifar");
ImageBatch load_cifar(const std::filesystem::path& path, CifarVariant variant = CifarVariant::cifar10);

struct MaskSpec {
  /// Square side in pixels; 0 leaves images untouched.
  std::size_t side = 8;
  std::uint64_t seed = 0;
};

struct CorruptedBatch {
  ImageBatch batch;
  /// [B x H x W], 1 where the pixel was masked.
  Tensor masks;
};

/// Zeroes one uniformly placed side x side square per image (all channels).
/// ParameterError when side exceeds H or W.
CorruptedBatch corrupt(const ImageBatch& batch, const MaskSpec& mask, Rng& rng);
CorruptedBatch corrupt(const ImageBatch& batch, const MaskSpec& mask);

}  // namespace opinet
