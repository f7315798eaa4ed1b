#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <json.hpp>

#include "opinet/checkpoint.hpp"
#include "opinet/neural.hpp"
#include "opinet/rng.hpp"
#include "opinet/tensor.hpp"

namespace opinet {

/// Axis-aligned rectangle the sources and receivers live in.
struct Domain {
  double x_lo = 0.0, x_hi = 1.0;
  double y_lo = 0.0, y_hi = 1.0;

  bool contains(double x, double y) const { return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi; }
  bool operator==(const Domain&) const = default;
};

/// A point source: location z and complex strength lambda stored as (Re, Im).
struct SourceSpec {
  std::array<double, 2> location{};
  std::array<double, 2> strength{};
  bool operator==(const SourceSpec&) const = default;
};

/// Branch input rows: [x, y, Re(lambda), Im(lambda)] per source.
Tensor source_matrix(const std::vector<SourceSpec>& sources);

/// Observation points, [T x 2] in domain units.
class ReceiverSet {
 public:
  ReceiverSet() = default;
  explicit ReceiverSet(Tensor points);
  ReceiverSet(Tensor points, const Domain& domain);

  const Tensor& points() const noexcept { return points_; }
  std::size_t size() const { return points_.rows(); }

 private:
  Tensor points_;
};

struct DeepONetConfig {
  std::size_t latent_dim = 64;
  std::size_t branch_in = 4;
  std::size_t trunk_in = 2;
  std::size_t hidden = 128;
  std::size_t hidden_layers = 3;
  bool residual = false;
  bool se = false;
  std::size_t se_reduction = 4;
  bool layer_norm = false;

  // Inverse head: per-receiver encoder -> mean pool -> decoder -> N_max x 4.
  bool inverse_head = true;
  std::size_t n_fields = 1;
  std::size_t head_hidden = 128;
  std::size_t head_layers = 2;
  std::size_t decoder_hidden_layers = 1;
  std::size_t max_sources = 4;
  bool pin_imag_strength = false;
  /// Observed values are divided by these before entering the encoder.
  std::vector<double> field_scale;

  Domain domain;
};

nlohmann::json to_json(const DeepONetConfig& cfg);
DeepONetConfig deeponet_config_from_json(const nlohmann::json& j);

struct FieldGradients {
  ParamVector branch;
  ParamVector trunk;
  Tensor branch_input;  // [N x branch_in]
  Tensor points;        // [T x trunk_in]
};

/// Cached forward pass of the inverse head, needed for its backward pass.
struct InverseTrace {
  ForwardTrace encoder;
  ForwardTrace decoder;
  Tensor raw;  // [1 x 4 * max_sources]
  std::size_t receivers = 0;
  std::size_t n_sources = 0;
};

struct InverseGradients {
  ParamVector encoder;
  ParamVector decoder;
};

/// Branch network over source parameters, trunk network over coordinates,
/// inner-product combiner u(x_t) = sum_j <b_j, t_t>, and an optional
/// permutation-invariant inverse head emitting source parameters.
class DeepONetModel {
 public:
  DeepONetModel() = default;
  DeepONetModel(const DeepONetConfig& cfg, Rng& rng);
  DeepONetModel(DeepONetConfig cfg, Mlp branch, Mlp trunk, Mlp encoder, Mlp decoder);

  const DeepONetConfig& config() const noexcept { return cfg_; }
  const Mlp& branch() const noexcept { return branch_; }
  const Mlp& trunk() const noexcept { return trunk_; }
  const Mlp& encoder() const noexcept { return encoder_; }
  const Mlp& decoder() const noexcept { return decoder_; }
  Mlp& branch() noexcept { return branch_; }
  Mlp& trunk() noexcept { return trunk_; }
  Mlp& encoder() noexcept { return encoder_; }
  Mlp& decoder() noexcept { return decoder_; }
  bool has_inverse_head() const noexcept { return cfg_.inverse_head; }

  /// Parameters the NTK is defined over (branch then trunk).
  std::size_t field_param_count() const { return branch_.param_count() + trunk_.param_count(); }

  /// All trainable parameters, prefixed "branch.", "trunk.", "encoder.", "decoder.".
  ParamVector parameters() const;
  void assign_parameters(const ParamVector& flat);
  ParamVector zero_gradients() const { return parameters().zeros_like(); }
  /// Concatenate per-network gradients in the parameters() layout; missing parts are zero.
  ParamVector flatten(const ParamVector* branch, const ParamVector* trunk, const ParamVector* encoder,
                      const ParamVector* decoder) const;

  // --- forward operator -------------------------------------------------

  /// u(x_t) for arbitrary branch input rows: sum over rows of <b_j, t_t>,
  /// accumulated in row order. Returns [T].
  Tensor field_from_branch_input(const Tensor& branch_input, const Tensor& points) const;
  FieldGradients field_backward(const Tensor& branch_input, const Tensor& points, const Tensor& out_grad) const;

  /// Per-row operator output: out[b, t] = <branch(row b), trunk(point t)>, [B x T].
  Tensor batch_field(const Tensor& branch_input, const Tensor& points) const;
  FieldGradients batch_field_backward(const Tensor& branch_input, const Tensor& points, const Tensor& out_grad) const;

  Tensor predict_field(const std::vector<SourceSpec>& sources, const ReceiverSet& receivers) const;

  /// Row t is d u(x_t) / d(branch, trunk params), computed with a one-hot
  /// output gradient at receiver t. [T x field_param_count()].
  Tensor param_jacobian(const std::vector<SourceSpec>& sources, const ReceiverSet& receivers) const;
  /// Same for raw branch input rows and trunk points.
  Tensor param_jacobian(const Tensor& branch_input, const Tensor& points) const;

  // --- inverse head ------------------------------------------------------

  /// Encoder input rows [x, y, observed / field_scale...].
  Tensor receiver_features(const Tensor& observed, const ReceiverSet& receivers) const;
  InverseTrace inverse_trace(const Tensor& observed, const ReceiverSet& receivers, std::size_t n_sources) const;
  std::vector<SourceSpec> decode_sources(const InverseTrace& trace) const;
  /// source_grad rows: d loss / d [x, y, Re, Im] for each decoded source.
  InverseGradients inverse_backward(const InverseTrace& trace, const Tensor& source_grad) const;

  /// observed: [T] or [T x n_fields].
  std::vector<SourceSpec> predict_sources(const Tensor& observed, const ReceiverSet& receivers,
                                          std::size_t n_sources) const;

  Checkpoint to_checkpoint(std::uint64_t seed, nlohmann::json manifest = nlohmann::json::object()) const;
  static DeepONetModel from_checkpoint(const Checkpoint& ckpt);

 private:
  DeepONetConfig cfg_;
  Mlp branch_;
  Mlp trunk_;
  Mlp encoder_;
  Mlp decoder_;
};

/// Architecture hash: FNV-1a over the layer specs of every network.
std::string architecture_hash(const DeepONetModel& model);

}  // namespace opinet
