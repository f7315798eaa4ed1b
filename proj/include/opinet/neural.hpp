#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "opinet/rng.hpp"
#include "opinet/tensor.hpp"

namespace opinet {

enum class LayerKind { linear, relu, residual_block, se_block, layer_norm };

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// One stage of a feed-forward stack.
///
/// residual_block: x + W2 relu(W1 x + b1) + b2, both layers dim x dim.
/// se_block: features split into in_dim / se_reduction contiguous groups
///   ("channels"); each group is mean-pooled, passed through
///   relu(W1 s + b1) -> sigmoid(W2 h + b2), and the gate rescales every
///   feature of its group. Hidden width is max(1, channels / 2).
/// layer_norm: (x - mean) / sqrt(var + 1e-5) per row, no learned affine.
struct LayerSpec {
  LayerKind kind = LayerKind::linear;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t se_reduction = 1;
  bool bias = true;

  static LayerSpec linear(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec relu(std::size_t dim);
  static LayerSpec residual(std::size_t dim);
  static LayerSpec se(std::size_t dim, std::size_t reduction);
  static LayerSpec layer_norm(std::size_t dim);

  std::size_t se_channels() const { return in_dim / se_reduction; }
  std::size_t se_hidden() const;
  std::size_t param_count() const;

  bool operator==(const LayerSpec&) const = default;
};

/// Throws ParameterError when the specs do not chain or violate a per-kind rule.
void validate_chain(std::span<const LayerSpec> specs);

struct ParamSlot {
  std::string name;
  std::size_t offset = 0;
  Shape shape;
  std::size_t count() const;
  bool operator==(const ParamSlot&) const = default;
};

/// All trainable parameters of a network in one flat vector, plus the
/// ordered name -> (offset, shape) layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<ParamSlot> layout);
  ParamVector(std::vector<ParamSlot> layout, std::vector<double> values);

  static std::vector<ParamSlot> layout_for(std::span<const LayerSpec> specs);

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<ParamSlot>& layout() const noexcept { return layout_; }
  const ParamSlot& slot(std::string_view name) const;
  /// Name of the parameter that owns flat index i.
  std::string owner(std::size_t index) const;

  std::span<double> view(const ParamSlot& slot) { return std::span<double>(values_).subspan(slot.offset, slot.count()); }
  std::span<const double> view(const ParamSlot& slot) const {
    return std::span<const double>(values_).subspan(slot.offset, slot.count());
  }
  std::span<double> view(std::string_view name) { return view(slot(name)); }
  std::span<const double> view(std::string_view name) const { return view(slot(name)); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& storage() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }
  ParamVector zeros_like() const { return ParamVector(layout_); }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<ParamSlot> layout_;
  std::vector<double> values_;
};

enum class InitScheme { he_normal };

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
ParamVector init_params(std::span<const LayerSpec> specs, Rng& rng, InitScheme scheme = InitScheme::he_normal);

struct LayerCache {
  Tensor input;
  std::vector<Tensor> aux;
};

/// Everything a backward pass needs from the matching forward pass.
struct ForwardTrace {
  std::vector<LayerCache> layers;
  Tensor output;
};

struct Gradients {
  ParamVector params;
  Tensor input;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<LayerSpec> specs, ParamVector params);
  Mlp(std::vector<LayerSpec> specs, Rng& rng);

  const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
  const ParamVector& params() const noexcept { return params_; }
  ParamVector& params() noexcept { return params_; }
  std::size_t in_dim() const { return specs_.front().in_dim; }
  std::size_t out_dim() const { return specs_.back().out_dim; }
  std::size_t param_count() const { return params_.size(); }

  /// x: [batch x in_dim] -> [batch x out_dim].
  Tensor forward(const Tensor& x) const;
  ForwardTrace trace(const Tensor& x) const;
  /// Exact reverse-mode gradients. Parameter gradients are summed over the batch.
  Gradients backward(const ForwardTrace& trace, const Tensor& out_grad) const;
  Gradients backward(const Tensor& x, const Tensor& out_grad) const { return backward(trace(x), out_grad); }

 private:
  void check_input(const Tensor& x) const;

  std::vector<LayerSpec> specs_;
  ParamVector params_;
};

/// Width/depth recipe used to build the branch, trunk and inverse networks.
struct MlpArchitecture {
  std::size_t in_dim = 0;
  std::size_t hidden = 128;
  std::size_t hidden_layers = 3;
  std::size_t out_dim = 64;
  bool residual = false;      // hidden layers after the first become residual blocks
  bool se = false;            // SE block before the output layer
  std::size_t se_reduction = 4;
  bool layer_norm = false;    // layer norm after each hidden activation
};

std::vector<LayerSpec> build_specs(const MlpArchitecture& arch);

}  // namespace opinet
