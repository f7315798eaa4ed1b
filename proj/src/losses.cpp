#include "opinet/losses.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>

#include "opinet/error.hpp"
#include "opinet/parallel.hpp"

namespace opinet {

namespace {

constexpr std::size_t kStencil = 5;

void require_same_length(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": lengths differ (" + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()) + ")");
  }
}

// Residual from the five stencil values of one receiver.
double stencil_residual(const double* u, double inv_h2, double k2, double f) {
  return (u[1] + u[2] + u[3] + u[4] - 4.0 * u[0]) * inv_h2 + k2 * u[0] - f;
}

}  // namespace

void LossWeights::validate() const {
  const double w[] = {alpha, beta, gamma, delta, ntk};
  const char* names[] = {"alpha", "beta", "gamma", "delta", "ntk"};
  for (int i = 0; i < 5; ++i)
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw ParameterError(std::string("loss weight ") + names[i] + " must be finite and >= 0");
}

void PhysicsConfig::validate() const {
  if (!(wavenumber >= 0.0)) throw ParameterError("wavenumber must be >= 0");
  if (!(fd_step > 0.0)) throw ParameterError("fd_step must be positive");
  if (!(source_width > 0.0)) throw ParameterError("source_width must be positive");
}

double data_loss(const Tensor& pred, const Tensor& obs) {
  require_same_length(pred, obs, "data_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - obs[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

Tensor data_loss_gradient(const Tensor& pred, const Tensor& obs) {
  require_same_length(pred, obs, "data_loss");
  Tensor g(pred.shape());
  const double c = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = c * (pred[i] - obs[i]);
  return g;
}

Tensor stencil_points(const ReceiverSet& receivers, double h) {
  const Tensor& p = receivers.points();
  const std::size_t n = receivers.size();
  Tensor out({kStencil * n, 2});
  const double dx[kStencil] = {0.0, h, -h, 0.0, 0.0};
  const double dy[kStencil] = {0.0, 0.0, 0.0, h, -h};
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t s = 0; s < kStencil; ++s) {
      out(kStencil * t + s, 0) = p(t, 0) + dx[s];
      out(kStencil * t + s, 1) = p(t, 1) + dy[s];
    }
  return out;
}

void check_physics_receivers(const ReceiverSet& receivers, const PhysicsConfig& cfg) {
  cfg.validate();
  const auto& d = cfg.domain;
  const double margin = 2.0 * cfg.fd_step;
  const Tensor& p = receivers.points();
  std::string offenders;
  std::size_t count = 0;
  for (std::size_t t = 0; t < receivers.size(); ++t) {
    const double x = p(t, 0), y = p(t, 1);
    if (x - d.x_lo < margin || d.x_hi - x < margin || y - d.y_lo < margin || d.y_hi - y < margin) {
      if (count < 16) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s#%zu (%.6g, %.6g)", count ? ", " : "", t, x, y);
        offenders += buf;
      }
      ++count;
    }
  }
  if (count) {
    throw ContractError("physics loss needs receivers at least 2h = " + std::to_string(margin) +
                        " from the boundary; offenders: " + offenders + (count > 16 ? ", ..." : ""));
  }
  for (std::size_t a = 0; a < receivers.size(); ++a)
    for (std::size_t b = a + 1; b < receivers.size(); ++b) {
      const double dist = std::hypot(p(a, 0) - p(b, 0), p(a, 1) - p(b, 1));
      if (dist > 0.0 && dist < cfg.fd_step) {
        throw ContractError("fd_step " + std::to_string(cfg.fd_step) + " exceeds the spacing of receivers #" +
                            std::to_string(a) + " and #" + std::to_string(b));
      }
    }
}

Tensor fd_laplacian(const FieldFn& u, const ReceiverSet& receivers, double h) {
  const Tensor vals = u(stencil_points(receivers, h));
  if (vals.size() != kStencil * receivers.size()) throw DimensionError("field returned the wrong number of values");
  Tensor lap({receivers.size()});
  const double inv_h2 = 1.0 / (h * h);
  for (std::size_t t = 0; t < receivers.size(); ++t) lap[t] = stencil_residual(vals.data() + kStencil * t, inv_h2, 0.0, 0.0);
  return lap;
}

Tensor physics_residuals(const FieldFn& u, const FieldFn& f, const ReceiverSet& receivers, const PhysicsConfig& cfg) {
  check_physics_receivers(receivers, cfg);
  const double h = cfg.fd_step, inv_h2 = 1.0 / (h * h), k2 = cfg.wavenumber * cfg.wavenumber;
  const Tensor vals = u(stencil_points(receivers, h));
  const Tensor forcing = f(receivers.points());
  if (vals.size() != kStencil * receivers.size() || forcing.size() != receivers.size()) {
    throw DimensionError("field callbacks returned the wrong number of values");
  }
  Tensor r({receivers.size()});
  for (std::size_t t = 0; t < receivers.size(); ++t)
    r[t] = stencil_residual(vals.data() + kStencil * t, inv_h2, k2, forcing[t]);
  return r;
}

double physics_loss(const FieldFn& u, const FieldFn& f, const ReceiverSet& receivers, const PhysicsConfig& cfg) {
  const Tensor r = physics_residuals(u, f, receivers, cfg);
  double acc = 0.0;
  for (double v : r.values()) acc += v * v;
  return acc / static_cast<double>(r.size());
}

Tensor mollified_forcing(const std::vector<SourceSpec>& sources, const Tensor& points, double width) {
  if (!(width > 0.0)) throw ParameterError("mollifier width must be positive");
  const double inv2s2 = 1.0 / (2.0 * width * width);
  const double norm = 1.0 / (2.0 * std::numbers::pi * width * width);
  Tensor f({points.rows()});
  for (std::size_t t = 0; t < points.rows(); ++t) {
    double acc = 0.0;
    for (const auto& s : sources) {
      const double dx = points(t, 0) - s.location[0], dy = points(t, 1) - s.location[1];
      acc += s.strength[0] * norm * std::exp(-(dx * dx + dy * dy) * inv2s2);
    }
    f[t] = acc;
  }
  return f;
}

double physics_loss(const DeepONetModel& model, const std::vector<SourceSpec>& sources, const ReceiverSet& receivers,
                    const PhysicsConfig& cfg) {
  const Tensor s = source_matrix(sources);
  return physics_loss([&](const Tensor& pts) { return model.field_from_branch_input(s, pts); },
                      [&](const Tensor& pts) { return mollified_forcing(sources, pts, cfg.source_width); }, receivers,
                      cfg);
}

PhysicsGradients physics_loss_backward(const DeepONetModel& model, const std::vector<SourceSpec>& sources,
                                       const ReceiverSet& receivers, const PhysicsConfig& cfg) {
  check_physics_receivers(receivers, cfg);
  const Tensor s = source_matrix(sources);
  const Tensor pts = stencil_points(receivers, cfg.fd_step);
  const Tensor u = model.field_from_branch_input(s, pts);
  const Tensor& c = receivers.points();
  const Tensor f = mollified_forcing(sources, c, cfg.source_width);
  const std::size_t n = receivers.size();
  const double h = cfg.fd_step, inv_h2 = 1.0 / (h * h), k2 = cfg.wavenumber * cfg.wavenumber;

  PhysicsGradients out;
  Tensor r({n});
  double acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    r[t] = stencil_residual(u.data() + kStencil * t, inv_h2, k2, f[t]);
    acc += r[t] * r[t];
  }
  out.loss = acc / static_cast<double>(n);

  const double w[kStencil] = {-4.0 * inv_h2 + k2, inv_h2, inv_h2, inv_h2, inv_h2};
  Tensor gu({kStencil * n});
  const double scale = 2.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < kStencil; ++k) gu[kStencil * t + k] = scale * r[t] * w[k];
  FieldGradients fg = model.field_backward(s, pts, gu);
  out.branch = std::move(fg.branch);
  out.trunk = std::move(fg.trunk);
  out.source_grad = std::move(fg.branch_input);

  // f_pred enters the residual with a minus sign.
  const double width = cfg.source_width;
  const double inv2s2 = 1.0 / (2.0 * width * width), inv_s2 = 1.0 / (width * width);
  const double norm = 1.0 / (2.0 * std::numbers::pi * width * width);
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const auto& src = sources[j];
    double gx = 0.0, gy = 0.0, gl = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double dx = c(t, 0) - src.location[0], dy = c(t, 1) - src.location[1];
      const double g = norm * std::exp(-(dx * dx + dy * dy) * inv2s2);
      const double gf = -scale * r[t];
      gl += gf * g;
      gx += gf * src.strength[0] * g * dx * inv_s2;
      gy += gf * src.strength[0] * g * dy * inv_s2;
    }
    out.source_grad(j, 0) += gx;
    out.source_grad(j, 1) += gy;
    out.source_grad(j, 2) += gl;
  }
  return out;
}

std::vector<std::size_t> hungarian(const Tensor& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw DimensionError("assignment cost must be square, got " + shape_string(cost.shape()));
  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with potentials; rows/cols are 1-based, 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> result(n);
  for (std::size_t j = 1; j <= n; ++j) result[match[j] - 1] = j - 1;
  return result;
}

SourceLossResult source_loss_detail(const std::vector<SourceSpec>& pred, const std::vector<SourceSpec>& truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("source_loss: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " true sources");
  }
  if (pred.empty()) throw DimensionError("source_loss: no sources");
  const std::size_t n = pred.size();
  Tensor cost({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = pred[i].location[0] - truth[j].location[0];
      const double dy = pred[i].location[1] - truth[j].location[1];
      cost(i, j) = std::sqrt(dx * dx + dy * dy);
    }
  SourceLossResult out;
  out.assignment = hungarian(cost);
  out.pred_grad = Tensor({n, 4});
  const double inv_n = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pred[i];
    const auto& t = truth[out.assignment[i]];
    const double d[4] = {p.location[0] - t.location[0], p.location[1] - t.location[1], p.strength[0] - t.strength[0],
                         p.strength[1] - t.strength[1]};
    for (int k = 0; k < 4; ++k) {
      acc += d[k] * d[k];
      out.pred_grad(i, k) = 2.0 * inv_n * d[k];
    }
  }
  out.loss = acc * inv_n;
  return out;
}

double source_loss(const std::vector<SourceSpec>& pred, const std::vector<SourceSpec>& truth) {
  return source_loss_detail(pred, truth).loss;
}

namespace {

// Splits [C x H x W] or [B x C x H x W] into single images.
std::vector<Tensor> split_images(const Tensor& t) {
  if (t.rank() == 3) return {t};
  if (t.rank() != 4) throw DimensionError("images must be [C x H x W] or [B x C x H x W], got " + shape_string(t.shape()));
  const std::size_t b = t.dim(0), per = t.size() / b;
  std::vector<Tensor> out;
  out.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> v(t.storage().begin() + static_cast<std::ptrdiff_t>(i * per),
                          t.storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out.emplace_back(Shape{t.dim(1), t.dim(2), t.dim(3)}, std::move(v));
  }
  return out;
}

}  // namespace

double perceptual_loss(const Tensor& pred, const Tensor& obs, const FeatureExtractor& fx) {
  require_same_shape(pred, obs, "perceptual_loss");
  const auto ps = split_images(pred), os = split_images(obs);
  std::vector<double> per(ps.size());
  parallel_for(ps.size(), [&](std::size_t i) {
    const Tensor a = fx.forward(ps[i]), b = fx.forward(os[i]);
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    per[i] = acc;
  });
  const Shape fs = fx.output_shape(ps[0].dim(1), ps[0].dim(2));
  const std::size_t count = ps.size() * fs[0] * fs[1] * fs[2];
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(count);
}

Tensor perceptual_loss_gradient(const Tensor& pred, const Tensor& obs, const FeatureExtractor& fx) {
  require_same_shape(pred, obs, "perceptual_loss");
  const auto ps = split_images(pred), os = split_images(obs);
  const Shape fs = fx.output_shape(ps[0].dim(1), ps[0].dim(2));
  const double scale = 2.0 / static_cast<double>(ps.size() * fs[0] * fs[1] * fs[2]);
  Tensor grad(pred.shape());
  const std::size_t per = ps[0].size();
  parallel_for(ps.size(), [&](std::size_t i) {
    const Tensor a = fx.forward(ps[i]), b = fx.forward(os[i]);
    Tensor g(a.shape());
    for (std::size_t k = 0; k < a.size(); ++k) g[k] = scale * (a[k] - b[k]);
    const Tensor gi = fx.input_gradient(ps[i], g);
    std::copy(gi.storage().begin(), gi.storage().end(), grad.storage().begin() + static_cast<std::ptrdiff_t>(i * per));
  });
  return grad;
}

LossReport total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  LossReport report;
  report.components = c;
  const std::pair<const std::optional<double>*, const char*> items[] = {
      {&c.data, "data"}, {&c.physics, "physics"}, {&c.source, "source"}, {&c.perceptual, "perceptual"}, {&c.ntk, "ntk"}};
  const double weights[] = {w.alpha, w.beta, w.gamma, w.delta, w.ntk};
  double total = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto& value = *items[i].first;
    if (!value) continue;
    if (!std::isfinite(*value)) throw NumericError(std::string("loss component '") + items[i].second + "' is not finite");
    total += weights[i] * *value;
  }
  report.total = total;
  return report;
}

void write_loss_header(std::ostream& out) { out << "step,L_data,L_phys,L_source,L_perceptual,L_ntk,total\n"; }

void write_loss_row(std::ostream& out, long step, const LossReport& r) {
  auto field = [&](const std::optional<double>& v) {
    if (!v) {
      out << ",disabled";
      return;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, ",%.17g", *v);
    out << buf;
  };
  out << step;
  field(r.components.data);
  field(r.components.physics);
  field(r.components.source);
  field(r.components.perceptual);
  field(r.components.ntk);
  char buf[40];
  std::snprintf(buf, sizeof buf, ",%.17g\n", r.total);
  out << buf;
}

}  // namespace opinet
