#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "opinet/tensor.hpp"

namespace opinet {

/// Mean squared difference over all elements; DimensionError on a shape mismatch.
double mse(const Tensor& a, const Tensor& b);

struct Psnr {
  static constexpr double kCap = 99.0;
  double db = kCap;
  /// True when the images are identical; db then holds the cap.
  bool exact = false;
};

/// 10 log10(1 / mse) for images in [0, 1].
Psnr psnr(const Tensor& a, const Tensor& b);

/// Windowed SSIM with an 11x11 Gaussian (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// L = 1, averaged over all fully inside windows. Images are [H x W] or
/// [C x H x W]; colour images are reduced to their channel mean first.
/// ParameterError when the image is smaller than the window.
double ssim(const Tensor& a, const Tensor& b);

struct MeanStd {
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single value.
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& values);

/// Metrics of one evaluation split.
struct MetricSample {
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
};

/// Metrics of a [B x C x H x W] batch: mse and ssim are per-image means,
/// psnr is taken from that mean mse (so it stays finite when some images
/// match exactly).
MetricSample batch_metrics(const Tensor& pred, const Tensor& target);

struct MetricReport {
  std::size_t n = 0;
  MeanStd psnr;
  MeanStd ssim;
  MeanStd mse;
};

MetricReport summarize(const std::vector<MetricSample>& samples);

/// "metric,mean,std,n" header plus one row per metric.
void write_metric_report(std::ostream& out, const MetricReport& report);

}  // namespace opinet
