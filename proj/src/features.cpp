#include "opinet/features.hpp"

#include <cmath>

#include "opinet/error.hpp"
#include "opinet/parallel.hpp"
#include "opinet/rng.hpp"

namespace opinet {

namespace {

constexpr std::size_t kChannels[] = {16, 32, 64};

std::size_t out_extent(std::size_t n) { return (n - 1) / 2 + 1; }  // 3x3, stride 2, pad 1

// Pre-activation of one strided convolution. in: [C x H x W].
Tensor conv_forward(const Tensor& in, std::size_t cout, const std::vector<double>& w) {
  const std::size_t cin = in.dim(0), h = in.dim(1), wd = in.dim(2);
  const std::size_t oh = out_extent(h), ow = out_extent(wd);
  Tensor out({cout, oh, ow});
  parallel_for(cout, [&](std::size_t o) {
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const long iy = static_cast<long>(2 * y + ky) - 1;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const long ix = static_cast<long>(2 * x + kx) - 1;
              if (ix < 0 || ix >= static_cast<long>(wd)) continue;
              acc += w[((o * cin + c) * 3 + ky) * 3 + kx] * in[(c * h + iy) * wd + ix];
            }
          }
        out[(o * oh + y) * ow + x] = acc;
      }
  });
  return out;
}

// Gradient with respect to the conv input, gathered per input pixel so each
// output element is written by one iteration.
Tensor conv_input_grad(const Shape& in_shape, const Tensor& dout, const std::vector<double>& w) {
  const std::size_t cin = in_shape[0], h = in_shape[1], wd = in_shape[2];
  const std::size_t cout = dout.dim(0), oh = dout.dim(1), ow = dout.dim(2);
  Tensor din(in_shape);
  parallel_for(cin, [&](std::size_t c) {
    for (std::size_t iy = 0; iy < h; ++iy)
      for (std::size_t ix = 0; ix < wd; ++ix) {
        double acc = 0.0;
        for (std::size_t o = 0; o < cout; ++o)
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::size_t sy = iy + 1;
            if (sy < ky || (sy - ky) % 2) continue;
            const std::size_t y = (sy - ky) / 2;
            if (y >= oh) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::size_t sx = ix + 1;
              if (sx < kx || (sx - kx) % 2) continue;
              const std::size_t x = (sx - kx) / 2;
              if (x >= ow) continue;
              acc += w[((o * cin + c) * 3 + ky) * 3 + kx] * dout[(o * oh + y) * ow + x];
            }
          }
        din[(c * h + iy) * wd + ix] = acc;
      }
  });
  return din;
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::size_t in_channels, std::uint64_t seed) : in_channels_(in_channels) {
  if (in_channels == 0) throw ParameterError("feature extractor needs at least one input channel");
  Rng rng(seed);
  std::size_t cin = in_channels;
  for (std::size_t cout : kChannels) {
    Conv conv{cin, cout, std::vector<double>(cout * cin * 9)};
    const double std = std::sqrt(2.0 / static_cast<double>(cin * 9));
    for (auto& v : conv.weights) v = std * rng.normal();
    layers_.push_back(std::move(conv));
    cin = cout;
  }
}

Shape FeatureExtractor::output_shape(std::size_t height, std::size_t width) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    height = out_extent(height);
    width = out_extent(width);
  }
  return {layers_.back().out_channels, height, width};
}

std::vector<Tensor> FeatureExtractor::activations(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != in_channels_) {
    throw DimensionError("feature extractor expects [" + std::to_string(in_channels_) + " x H x W], got " +
                         shape_string(image.shape()));
  }
  std::vector<Tensor> pre;
  const Tensor* h = &image;
  Tensor act;
  for (const auto& conv : layers_) {
    pre.push_back(conv_forward(*h, conv.out_channels, conv.weights));
    act = pre.back();
    for (auto& v : act.values()) v = v > 0.0 ? v : 0.0;
    h = &act;
  }
  return pre;
}

Tensor FeatureExtractor::forward(const Tensor& image) const {
  Tensor out = activations(image).back();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor FeatureExtractor::input_gradient(const Tensor& image, const Tensor& out_grad) const {
  const std::vector<Tensor> pre = activations(image);
  if (out_grad.shape() != pre.back().shape()) {
    throw DimensionError("feature gradient shape " + shape_string(out_grad.shape()) + " does not match " +
                         shape_string(pre.back().shape()));
  }
  Tensor g = out_grad;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(pre[l][i] > 0.0)) g[i] = 0.0;
    const Shape in_shape = l == 0 ? image.shape() : pre[l - 1].shape();
    g = conv_input_grad(in_shape, g, layers_[l].weights);
  }
  return g;
}

}  // namespace opinet
