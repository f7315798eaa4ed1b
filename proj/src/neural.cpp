#include "opinet/neural.hpp"

#include <algorithm>
#include <cmath>

#include "opinet/error.hpp"
#include "opinet/kernels.hpp"

namespace opinet {

namespace {

constexpr double kLayerNormEps = 1e-5;

std::string layer_prefix(std::size_t index) { return "l" + std::to_string(index); }

// y[b, :] += bias
void add_bias(Tensor& y, std::span<const double> bias) {
  const std::size_t rows = y.rows(), cols = y.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = y.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += bias[c];
  }
}

void column_sums(const Tensor& g, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t rows = g.rows(), cols = g.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = g.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
  }
}

// x [B x in] * W^T, W [out x in]
Tensor affine(const Tensor& x, std::span<const double> w, std::span<const double> b, std::size_t out) {
  const std::size_t batch = x.rows(), in = x.cols();
  Tensor y({batch, out});
  kernels::gemm_nt(batch, out, in, x.data(), w.data(), y.data());
  if (!b.empty()) add_bias(y, b);
  return y;
}

// Given dY for y = x W^T + b, write dW, db and return dX.
Tensor affine_backward(const Tensor& x, const Tensor& dy, std::span<const double> w, std::span<double> dw,
                       std::span<double> db) {
  const std::size_t batch = x.rows(), in = x.cols(), out = dy.cols();
  kernels::gemm_tn(out, in, batch, dy.data(), x.data(), dw.data());
  if (!db.empty()) column_sums(dy, db);
  Tensor dx({batch, in});
  kernels::gemm_nn(batch, in, out, dy.data(), w.data(), dx.data());
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

// Subgradient at 0 is 0.
Tensor relu_backward(const Tensor& pre, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(pre[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::residual_block: return "residual_block";
    case LayerKind::se_block: return "se_block";
    case LayerKind::layer_norm: return "layer_norm";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto kind : {LayerKind::linear, LayerKind::relu, LayerKind::residual_block, LayerKind::se_block,
                    LayerKind::layer_norm}) {
    if (layer_kind_name(kind) == name) return kind;
  }
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out, bool bias) {
  return {LayerKind::linear, in, out, 1, bias};
}
LayerSpec LayerSpec::relu(std::size_t dim) { return {LayerKind::relu, dim, dim, 1, false}; }
LayerSpec LayerSpec::residual(std::size_t dim) { return {LayerKind::residual_block, dim, dim, 1, true}; }
LayerSpec LayerSpec::se(std::size_t dim, std::size_t reduction) {
  return {LayerKind::se_block, dim, dim, reduction, true};
}
LayerSpec LayerSpec::layer_norm(std::size_t dim) { return {LayerKind::layer_norm, dim, dim, 1, false}; }

std::size_t LayerSpec::se_hidden() const { return std::max<std::size_t>(1, se_channels() / 2); }

std::size_t LayerSpec::param_count() const {
  switch (kind) {
    case LayerKind::linear: return in_dim * out_dim + (bias ? out_dim : 0);
    case LayerKind::residual_block: return 2 * (in_dim * in_dim + in_dim);
    case LayerKind::se_block: {
      const std::size_t c = se_channels(), h = se_hidden();
      return h * c + h + c * h + c;
    }
    case LayerKind::relu:
    case LayerKind::layer_norm: return 0;
  }
  return 0;
}

void validate_chain(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ParameterError("invalid layer chain: no layers");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(s.kind)) + ")";
    if (s.in_dim == 0 || s.out_dim == 0) throw ParameterError("invalid layer chain: " + where + " has a zero dim");
    if (s.kind != LayerKind::linear && s.in_dim != s.out_dim) {
      throw ParameterError("invalid layer chain: " + where + " requires in_dim == out_dim");
    }
    if (s.kind == LayerKind::se_block && (s.se_reduction == 0 || s.in_dim % s.se_reduction != 0)) {
      throw ParameterError("invalid layer chain: " + where + " se_reduction must divide in_dim");
    }
    if (i > 0 && specs[i - 1].out_dim != s.in_dim) {
      throw ParameterError("invalid layer chain: " + where + " expects " + std::to_string(s.in_dim) +
                           " inputs but the previous layer emits " + std::to_string(specs[i - 1].out_dim));
    }
  }
}

std::size_t ParamSlot::count() const {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

ParamVector::ParamVector(std::vector<ParamSlot> layout) : layout_(std::move(layout)) {
  std::size_t total = 0;
  for (const auto& s : layout_) {
    if (s.offset != total) throw FormatError("parameter layout is not contiguous at '" + s.name + "'");
    total += s.count();
  }
  values_.assign(total, 0.0);
}

ParamVector::ParamVector(std::vector<ParamSlot> layout, std::vector<double> values) : ParamVector(std::move(layout)) {
  if (values.size() != values_.size()) {
    throw DimensionError("parameter vector has " + std::to_string(values.size()) + " values, layout declares " +
                         std::to_string(values_.size()));
  }
  values_ = std::move(values);
}

std::vector<ParamSlot> ParamVector::layout_for(std::span<const LayerSpec> specs) {
  std::vector<ParamSlot> layout;
  std::size_t offset = 0;
  auto push = [&](std::string name, Shape shape) {
    ParamSlot slot{std::move(name), offset, std::move(shape)};
    offset += slot.count();
    layout.push_back(std::move(slot));
  };
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const auto p = layer_prefix(i);
    switch (s.kind) {
      case LayerKind::linear:
        push(p + ".weight", {s.out_dim, s.in_dim});
        if (s.bias) push(p + ".bias", {s.out_dim});
        break;
      case LayerKind::residual_block:
        push(p + ".fc1.weight", {s.in_dim, s.in_dim});
        push(p + ".fc1.bias", {s.in_dim});
        push(p + ".fc2.weight", {s.in_dim, s.in_dim});
        push(p + ".fc2.bias", {s.in_dim});
        break;
      case LayerKind::se_block:
        push(p + ".squeeze.weight", {s.se_hidden(), s.se_channels()});
        push(p + ".squeeze.bias", {s.se_hidden()});
        push(p + ".excite.weight", {s.se_channels(), s.se_hidden()});
        push(p + ".excite.bias", {s.se_channels()});
        break;
      case LayerKind::relu:
      case LayerKind::layer_norm: break;
    }
  }
  return layout;
}

const ParamSlot& ParamVector::slot(std::string_view name) const {
  for (const auto& s : layout_)
    if (s.name == name) return s;
  throw ParameterError("no parameter named '" + std::string(name) + "'");
}

std::string ParamVector::owner(std::size_t index) const {
  for (const auto& s : layout_)
    if (index >= s.offset && index < s.offset + s.count()) return s.name;
  return "?";
}

ParamVector init_params(std::span<const LayerSpec> specs, Rng& rng, InitScheme scheme) {
  validate_chain(specs);
  (void)scheme;  // he_normal is the only scheme
  ParamVector params(ParamVector::layout_for(specs));
  for (const auto& slot : params.layout()) {
    if (slot.shape.size() != 2) continue;  // biases stay zero
    const double fan_in = static_cast<double>(slot.shape[1]);
    const double std = std::sqrt(2.0 / fan_in);
    for (auto& w : params.view(slot)) w = std * rng.normal();
  }
  return params;
}

Mlp::Mlp(std::vector<LayerSpec> specs, ParamVector params) : specs_(std::move(specs)), params_(std::move(params)) {
  validate_chain(specs_);
  if (params_.layout() != ParamVector::layout_for(specs_)) {
    throw DimensionError("parameter layout does not match the layer specs");
  }
}

Mlp::Mlp(std::vector<LayerSpec> specs, Rng& rng) : specs_(std::move(specs)) {
  params_ = init_params(specs_, rng);
}

void Mlp::check_input(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in_dim()) {
    throw DimensionError("network expects [batch x " + std::to_string(in_dim()) + "] input, got " +
                         shape_string(x.shape()));
  }
}

Tensor Mlp::forward(const Tensor& x) const { return trace(x).output; }

ForwardTrace Mlp::trace(const Tensor& x) const {
  check_input(x);
  ForwardTrace tr;
  tr.layers.reserve(specs_.size());
  Tensor h = x;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    const auto p = layer_prefix(i);
    LayerCache cache;
    cache.input = h;
    switch (s.kind) {
      case LayerKind::linear:
        h = affine(h, params_.view(p + ".weight"),
                   s.bias ? params_.view(p + ".bias") : std::span<const double>{}, s.out_dim);
        break;
      case LayerKind::relu: h = relu(h); break;
      case LayerKind::residual_block: {
        Tensor z1 = affine(h, params_.view(p + ".fc1.weight"), params_.view(p + ".fc1.bias"), s.in_dim);
        Tensor a1 = relu(z1);
        Tensor out = affine(a1, params_.view(p + ".fc2.weight"), params_.view(p + ".fc2.bias"), s.in_dim);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += h[k];
        cache.aux = {std::move(z1), std::move(a1)};
        h = std::move(out);
        break;
      }
      case LayerKind::se_block: {
        const std::size_t batch = h.rows(), channels = s.se_channels(), group = s.se_reduction;
        Tensor pooled({batch, channels});
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < group; ++k) acc += h(b, c * group + k);
            pooled(b, c) = acc / static_cast<double>(group);
          }
        Tensor z1 = affine(pooled, params_.view(p + ".squeeze.weight"), params_.view(p + ".squeeze.bias"),
                           s.se_hidden());
        Tensor a1 = relu(z1);
        Tensor gate = affine(a1, params_.view(p + ".excite.weight"), params_.view(p + ".excite.bias"), channels);
        for (auto& g : gate.values()) g = sigmoid(g);
        Tensor out = h;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < group; ++k) out(b, c * group + k) *= gate(b, c);
        cache.aux = {std::move(pooled), std::move(z1), std::move(a1), std::move(gate)};
        h = std::move(out);
        break;
      }
      case LayerKind::layer_norm: {
        const std::size_t batch = h.rows(), dim = h.cols();
        Tensor xhat({batch, dim});
        Tensor inv_std({batch});
        for (std::size_t b = 0; b < batch; ++b) {
          double mean = 0.0;
          for (std::size_t k = 0; k < dim; ++k) mean += h(b, k);
          mean /= static_cast<double>(dim);
          double var = 0.0;
          for (std::size_t k = 0; k < dim; ++k) var += (h(b, k) - mean) * (h(b, k) - mean);
          var /= static_cast<double>(dim);
          inv_std[b] = 1.0 / std::sqrt(var + kLayerNormEps);
          for (std::size_t k = 0; k < dim; ++k) xhat(b, k) = (h(b, k) - mean) * inv_std[b];
        }
        cache.aux = {xhat, std::move(inv_std)};
        h = std::move(xhat);
        break;
      }
    }
    tr.layers.push_back(std::move(cache));
  }
  tr.output = std::move(h);
  return tr;
}

Gradients Mlp::backward(const ForwardTrace& tr, const Tensor& out_grad) const {
  if (out_grad.shape() != tr.output.shape()) {
    throw DimensionError("output gradient shape " + shape_string(out_grad.shape()) + " does not match output " +
                         shape_string(tr.output.shape()));
  }
  Gradients grads{params_.zeros_like(), Tensor{}};
  Tensor g = out_grad;
  for (std::size_t idx = specs_.size(); idx-- > 0;) {
    const auto& s = specs_[idx];
    const auto p = layer_prefix(idx);
    const auto& cache = tr.layers[idx];
    switch (s.kind) {
      case LayerKind::linear:
        g = affine_backward(cache.input, g, params_.view(p + ".weight"), grads.params.view(p + ".weight"),
                            s.bias ? grads.params.view(p + ".bias") : std::span<double>{});
        break;
      case LayerKind::relu: g = relu_backward(cache.input, g); break;
      case LayerKind::residual_block: {
        const Tensor& z1 = cache.aux[0];
        const Tensor& a1 = cache.aux[1];
        Tensor da1 = affine_backward(a1, g, params_.view(p + ".fc2.weight"), grads.params.view(p + ".fc2.weight"),
                                     grads.params.view(p + ".fc2.bias"));
        Tensor dz1 = relu_backward(z1, da1);
        Tensor dx = affine_backward(cache.input, dz1, params_.view(p + ".fc1.weight"),
                                    grads.params.view(p + ".fc1.weight"), grads.params.view(p + ".fc1.bias"));
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += g[k];
        g = std::move(dx);
        break;
      }
      case LayerKind::se_block: {
        const Tensor& x = cache.input;
        const Tensor& pooled = cache.aux[0];
        const Tensor& z1 = cache.aux[1];
        const Tensor& a1 = cache.aux[2];
        const Tensor& gate = cache.aux[3];
        const std::size_t batch = x.rows(), channels = s.se_channels(), group = s.se_reduction;
        Tensor dz2({batch, channels});
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < group; ++k) acc += g(b, c * group + k) * x(b, c * group + k);
            const double gv = gate(b, c);
            dz2(b, c) = acc * gv * (1.0 - gv);
          }
        Tensor da1 = affine_backward(a1, dz2, params_.view(p + ".excite.weight"),
                                     grads.params.view(p + ".excite.weight"), grads.params.view(p + ".excite.bias"));
        Tensor dz1 = relu_backward(z1, da1);
        Tensor dpooled = affine_backward(pooled, dz1, params_.view(p + ".squeeze.weight"),
                                         grads.params.view(p + ".squeeze.weight"),
                                         grads.params.view(p + ".squeeze.bias"));
        Tensor dx({batch, x.cols()});
        const double inv_group = 1.0 / static_cast<double>(group);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < group; ++k) {
              const std::size_t j = c * group + k;
              dx(b, j) = g(b, j) * gate(b, c) + dpooled(b, c) * inv_group;
            }
        g = std::move(dx);
        break;
      }
      case LayerKind::layer_norm: {
        const Tensor& xhat = cache.aux[0];
        const Tensor& inv_std = cache.aux[1];
        const std::size_t batch = xhat.rows(), dim = xhat.cols();
        Tensor dx({batch, dim});
        for (std::size_t b = 0; b < batch; ++b) {
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t k = 0; k < dim; ++k) {
            mean_g += g(b, k);
            mean_gx += g(b, k) * xhat(b, k);
          }
          mean_g /= static_cast<double>(dim);
          mean_gx /= static_cast<double>(dim);
          for (std::size_t k = 0; k < dim; ++k) dx(b, k) = inv_std[b] * (g(b, k) - mean_g - xhat(b, k) * mean_gx);
        }
        g = std::move(dx);
        break;
      }
    }
  }
  grads.input = std::move(g);
  return grads;
}

std::vector<LayerSpec> build_specs(const MlpArchitecture& arch) {
  if (arch.in_dim == 0 || arch.hidden == 0 || arch.out_dim == 0 || arch.hidden_layers == 0) {
    throw ParameterError("architecture dims and depth must be positive");
  }
  std::vector<LayerSpec> specs;
  specs.push_back(LayerSpec::linear(arch.in_dim, arch.hidden));
  specs.push_back(LayerSpec::relu(arch.hidden));
  if (arch.layer_norm) specs.push_back(LayerSpec::layer_norm(arch.hidden));
  for (std::size_t l = 1; l < arch.hidden_layers; ++l) {
    if (arch.residual)
      specs.push_back(LayerSpec::residual(arch.hidden));
    else
      specs.push_back(LayerSpec::linear(arch.hidden, arch.hidden));
    specs.push_back(LayerSpec::relu(arch.hidden));
    if (arch.layer_norm) specs.push_back(LayerSpec::layer_norm(arch.hidden));
  }
  if (arch.se) specs.push_back(LayerSpec::se(arch.hidden, arch.se_reduction));
  specs.push_back(LayerSpec::linear(arch.hidden, arch.out_dim));
  validate_chain(specs);
  return specs;
}

}  // namespace opinet
