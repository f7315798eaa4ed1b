#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "opinet/deeponet.hpp"
#include "opinet/features.hpp"
#include "opinet/tensor.hpp"

namespace opinet {

struct LossWeights {
  double alpha = 1.0;  // data
  double beta = 0.5;   // physics
  double gamma = 0.2;  // source
  double delta = 0.3;  // perceptual
  double ntk = 0.0;    // kernel drift term, off unless configured

  /// ParameterError when any weight is negative or non-finite.
  void validate() const;
};

struct PhysicsConfig {
  double wavenumber = 1.0;
  /// Finite-difference step in domain units.
  double fd_step = 1e-3;
  /// Width of the Gaussian used for f_pred, in domain units (2 cells of the 32-node grid).
  double source_width = 2.0 / 31.0;
  Domain domain;

  void validate() const;
};

/// (1/T) sum (pred - obs)^2 over every element.
double data_loss(const Tensor& pred, const Tensor& obs);
/// d data_loss / d pred, same shape as pred.
Tensor data_loss_gradient(const Tensor& pred, const Tensor& obs);

/// Scalar field evaluated at a batch of points: [M x 2] -> [M].
using FieldFn = std::function<Tensor(const Tensor& points)>;

/// 5-point stencil nodes for every receiver, rows ordered per receiver as
/// centre, +x, -x, +y, -y. Returns [5T x 2].
Tensor stencil_points(const ReceiverSet& receivers, double h);

/// ContractError listing every receiver closer than 2h to the boundary, or
/// any two receivers closer than h to each other.
void check_physics_receivers(const ReceiverSet& receivers, const PhysicsConfig& cfg);

/// FD Laplacian of u at each receiver.
Tensor fd_laplacian(const FieldFn& u, const ReceiverSet& receivers, double h);

/// r_t = lap_h u(x_t) + k^2 u(x_t) - f(x_t).
Tensor physics_residuals(const FieldFn& u, const FieldFn& f, const ReceiverSet& receivers, const PhysicsConfig& cfg);
double physics_loss(const FieldFn& u, const FieldFn& f, const ReceiverSet& receivers, const PhysicsConfig& cfg);

/// f(x) = sum_j Re(lambda_j) exp(-|x - z_j|^2 / (2 s^2)) / (2 pi s^2).
Tensor mollified_forcing(const std::vector<SourceSpec>& sources, const Tensor& points, double width);

/// Physics loss of the model's field for the given (usually predicted) sources,
/// with f_pred built from the same sources.
double physics_loss(const DeepONetModel& model, const std::vector<SourceSpec>& sources, const ReceiverSet& receivers,
                    const PhysicsConfig& cfg);

struct PhysicsGradients {
  double loss = 0.0;
  ParamVector branch;
  ParamVector trunk;
  /// d loss / d [x, y, Re, Im] per source, through both u and f_pred.
  Tensor source_grad;
};
PhysicsGradients physics_loss_backward(const DeepONetModel& model, const std::vector<SourceSpec>& sources,
                                       const ReceiverSet& receivers, const PhysicsConfig& cfg);

/// Minimum-cost perfect matching on a square cost matrix; result[i] is the
/// column assigned to row i.
std::vector<std::size_t> hungarian(const Tensor& cost);

struct SourceLossResult {
  double loss = 0.0;
  /// assignment[i] = index of the true source matched to prediction i.
  std::vector<std::size_t> assignment;
  /// d loss / d [x, y, Re, Im] per predicted source.
  Tensor pred_grad;
};

/// (1/N) sum (|z_pred - z_true|^2 + |lambda_pred - lambda_true|^2) after
/// matching predictions to truths on location distance.
SourceLossResult source_loss_detail(const std::vector<SourceSpec>& pred, const std::vector<SourceSpec>& truth);
double source_loss(const std::vector<SourceSpec>& pred, const std::vector<SourceSpec>& truth);

/// Mean squared difference of final feature maps. Images are [C x H x W] or
/// a batch [B x C x H x W]; the mean runs over batch and feature elements.
double perceptual_loss(const Tensor& pred, const Tensor& obs, const FeatureExtractor& fx);
Tensor perceptual_loss_gradient(const Tensor& pred, const Tensor& obs, const FeatureExtractor& fx);

/// Unweighted component values; an empty optional means the component is disabled.
struct LossComponents {
  std::optional<double> data;
  std::optional<double> physics;
  std::optional<double> source;
  std::optional<double> perceptual;
  std::optional<double> ntk;
};

struct LossReport {
  double total = 0.0;
  LossComponents components;
};

/// alpha L_data + beta L_phys + gamma L_source + delta L_perceptual + w_ntk L_ntk.
/// NumericError naming the component when an enabled value is not finite.
LossReport total_loss(const LossComponents& components, const LossWeights& weights);

void write_loss_header(std::ostream& out);
/// Disabled components print as "disabled".
void write_loss_row(std::ostream& out, long step, const LossReport& report);

}  // namespace opinet
