#include "opinet/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include "opinet/error.hpp"

namespace opinet {

namespace {

constexpr std::size_t kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin> gaussian_taps() {
  std::array<double, kWin> g{};
  double total = 0.0;
  for (std::size_t k = 0; k < kWin; ++k) {
    const double d = static_cast<double>(k) - 5.0;
    g[k] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[k];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Grayscale [H x W] view: rank 2 as is, rank 3 averaged over channels.
Tensor to_gray(const Tensor& img) {
  if (img.rank() == 2) return img;
  if (img.rank() != 3) throw DimensionError("ssim expects [H x W] or [C x H x W], got " + shape_string(img.shape()));
  const std::size_t c = img.dim(0), hw = img.dim(1) * img.dim(2);
  Tensor g({img.dim(1), img.dim(2)});
  for (std::size_t k = 0; k < hw; ++k) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += img[ch * hw + k];
    g[k] = s / static_cast<double>(c);
  }
  return g;
}

// Separable valid-mode filtering: [H x W] -> [(H-10) x (W-10)].
Tensor filter_valid(const Tensor& x, const std::array<double, kWin>& g) {
  const std::size_t h = x.dim(0), w = x.dim(1), oh = h - kWin + 1, ow = w - kWin + 1;
  Tensor rows({h, ow});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += g[k] * x(i, j + k);
      rows(i, j) = s;
    }
  Tensor out({oh, ow});
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWin; ++k) s += g[k] * rows(i + k, j);
      out(i, j) = s;
    }
  return out;
}

Tensor product(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
  return out;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw DimensionError("mse of empty tensors");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

Psnr psnr(const Tensor& a, const Tensor& b) {
  const double m = mse(a, b);
  if (m == 0.0) return {Psnr::kCap, true};
  return {std::min(Psnr::kCap, 10.0 * std::log10(1.0 / m)), false};
}

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  const Tensor x = to_gray(a), y = to_gray(b);
  if (x.dim(0) < kWin || x.dim(1) < kWin) {
    throw ParameterError("ssim needs images of at least 11x11, got " + shape_string(x.shape()));
  }
  const auto g = gaussian_taps();
  const Tensor mx = filter_valid(x, g), my = filter_valid(y, g);
  const Tensor sxx = filter_valid(product(x, x), g), syy = filter_valid(product(y, y), g),
               sxy = filter_valid(product(x, y), g);
  double total = 0.0;
  for (std::size_t k = 0; k < mx.size(); ++k) {
    const double vx = sxx[k] - mx[k] * mx[k], vy = syy[k] - my[k] * my[k], cxy = sxy[k] - mx[k] * my[k];
    total += ((2 * mx[k] * my[k] + kC1) * (2 * cxy + kC2)) /
             ((mx[k] * mx[k] + my[k] * my[k] + kC1) * (vx + vy + kC2));
  }
  return total / static_cast<double>(mx.size());
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw ParameterError("mean_std of no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

MetricSample batch_metrics(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "batch_metrics");
  if (pred.rank() != 4) throw DimensionError("batch_metrics expects [B x C x H x W], got " + shape_string(pred.shape()));
  const std::size_t b = pred.dim(0), n = pred.size() / b;
  const Shape img{pred.dim(1), pred.dim(2), pred.dim(3)};
  MetricSample out;
  for (std::size_t i = 0; i < b; ++i) {
    const Tensor p(img, std::vector<double>(pred.data() + i * n, pred.data() + (i + 1) * n));
    const Tensor t(img, std::vector<double>(target.data() + i * n, target.data() + (i + 1) * n));
    out.ssim += ssim(p, t);
    out.mse += mse(p, t);
  }
  out.ssim /= static_cast<double>(b);
  out.mse /= static_cast<double>(b);
  out.psnr = out.mse == 0.0 ? Psnr::kCap : std::min(Psnr::kCap, 10.0 * std::log10(1.0 / out.mse));
  return out;
}

MetricReport summarize(const std::vector<MetricSample>& samples) {
  std::vector<double> p, s, m;
  for (const auto& x : samples) {
    p.push_back(x.psnr);
    s.push_back(x.ssim);
    m.push_back(x.mse);
  }
  return {samples.size(), mean_std(p), mean_std(s), mean_std(m)};
}

void write_metric_report(std::ostream& out, const MetricReport& r) {
  out << "metric,mean,std,n\n";
  char buf[128];
  const std::pair<const char*, MeanStd> rows[] = {{"psnr", r.psnr}, {"ssim", r.ssim}, {"mse", r.mse}};
  for (const auto& [name, v] : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%zu\n", name, v.mean, v.std, r.n);
    out << buf;
  }
}

}  // namespace opinet
