#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "opinet/tensor.hpp"

namespace opinet {

/// Frozen convolutional feature map used by the perceptual loss.
///
/// Three 3x3 convolutions, stride 2, padding 1, each followed by ReLU, with
/// channels in -> 16 -> 32 -> 64. Weights are He-normal draws from a fixed
/// seed (2024 by default) and never change after construction; biases are
/// zero.
class FeatureExtractor {
 public:
  static constexpr std::uint64_t kDefaultSeed = 2024;

  explicit FeatureExtractor(std::size_t in_channels = 1, std::uint64_t seed = kDefaultSeed);

  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  /// Output shape [C x H x W] for an input of height x width.
  Shape output_shape(std::size_t height, std::size_t width) const;

  /// image: [C x H x W] -> final feature map.
  Tensor forward(const Tensor& image) const;
  /// Gradient of <out_grad, forward(image)> with respect to the image.
  Tensor input_gradient(const Tensor& image, const Tensor& out_grad) const;

  const std::vector<double>& weights(std::size_t layer) const { return layers_.at(layer).weights; }

 private:
  struct Conv {
    std::size_t in_channels;
    std::size_t out_channels;
    std::vector<double> weights;  // [out x in x 3 x 3]
  };

  std::vector<Tensor> activations(const Tensor& image) const;

  std::size_t in_channels_;
  std::vector<Conv> layers_;
};

}  // namespace opinet
