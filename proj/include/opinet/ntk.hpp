#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "opinet/deeponet.hpp"
#include "opinet/error.hpp"
#include "opinet/tensor.hpp"

namespace opinet {

/// Fixed probe for kernel measurements: one branch context and a receiver
/// list. Kept fixed for a whole run so drift is measured on the same points.
/// The context is branch_input when set, otherwise the source matrix; the
/// points are trunk_points when set, otherwise the receivers.
struct ProbeSet {
  std::vector<SourceSpec> sources;
  ReceiverSet receivers;
  Tensor branch_input;
  Tensor trunk_points;

  Tensor context() const;
  const Tensor& points() const { return trunk_points.empty() ? receivers.points() : trunk_points; }
  std::size_t size() const { return points().empty() ? 0 : points().rows(); }

  /// Hash of the exact probe coordinates; grams from different probes never compare.
  std::uint64_t fingerprint() const;
};

/// Empirical NTK Gram Theta = J J^T over a probe, with its cached spectrum.
struct NtkGram {
  Tensor theta;         // [n x n]
  Tensor eigenvalues;   // [n], descending
  Tensor eigenvectors;  // [n x n]
  long step = 0;
  std::uint64_t probe_id = 0;

  std::size_t size() const { return theta.rows(); }
  double lambda_max() const { return eigenvalues[0]; }
  /// Smallest eigenvalue above 1e-10 * lambda_max, or 0 when none is.
  double lambda_min_positive() const;
  double condition_number() const;
};

struct NtkSchedule {
  std::size_t period = 100;
  double base_lr = 1e-3;
  double safety = 1.0;
  double lr_floor = 1e-6;
  double lr_ceiling = 1e-1;
  std::size_t probe_size = 64;
  std::size_t cap = 256;

  /// ParameterError unless period >= 1, 0 < safety <= 1 and 0 < floor <= ceiling.
  void validate() const;
};

class DegenerateKernelError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Gram of an explicit Jacobian; the result is symmetric by construction and
/// this is asserted before the eigensolve.
NtkGram gram_from_jacobian(const Tensor& jacobian, long step = 0, std::uint64_t probe_id = 0);

/// Theta over the probe for the field output u. ResourceError when the probe
/// has more than `cap` receivers.
NtkGram assemble_gram(const DeepONetModel& model, const ProbeSet& probe, long step = 0, std::size_t cap = 256);

/// clamp(safety * 2 / (lambda_max + lambda_min+), floor, ceiling).
/// DegenerateKernelError when no eigenvalue is positive.
double adapt_lr(const NtkGram& gram, const NtkSchedule& schedule);

/// ||Theta_t - Theta_0||_F^2 / max(||Theta_0||_F^2, 1e-12). ContractError on probe mismatch.
double ntk_drift_penalty(const NtkGram& current, const NtkGram& reference);

/// r_t = (I - lr * Theta)^t r_0 by repeated multiplication.
Tensor predict_linearized_residuals(const NtkGram& gram, const Tensor& initial_residual, double lr, std::size_t steps);
/// Same quantity through the cached spectrum: V (I - lr Lambda)^t V^T r_0.
Tensor predict_linearized_residuals_spectral(const NtkGram& gram, const Tensor& initial_residual, double lr,
                                             std::size_t steps);

/// Gradient of the drift penalty with respect to all model parameters
/// (non-zero only in the branch and trunk blocks). Uses central-difference
/// Hessian-vector products of the per-receiver output gradients, 2n extra
/// backward passes for an n-point probe.
ParamVector ntk_drift_gradient(const DeepONetModel& model, const ProbeSet& probe, const NtkGram& reference,
                               double relative_step = 1e-5);

struct NtkReportRow {
  long step = 0;
  double lambda_max = 0.0;
  double lambda_min_pos = 0.0;
  double condition_number = 0.0;
  double drift_penalty = 0.0;
  double adapted_lr = 0.0;
};

void write_ntk_report_header(std::ostream& out);
void write_ntk_report_row(std::ostream& out, const NtkReportRow& row);

}  // namespace opinet
