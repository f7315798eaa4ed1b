#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "opinet/deeponet.hpp"
#include "opinet/rng.hpp"
#include "opinet/tensor.hpp"

namespace opinet {

enum class Boundary { no_slip, periodic };

/// Collocated finite-difference grid on [0,1]^2.
///
/// no_slip: nodes at i / (nx - 1); the outer ring holds u = v = p = 0.
/// periodic: nodes at i / nx with wrap-around neighbours (used for the
/// Taylor-Green check).
struct FluidConfig {
  std::size_t nx = 32;
  std::size_t ny = 32;
  double viscosity = 0.05;
  /// 0 selects dt_safety * 0.25 * min(dx, dy)^2 / viscosity.
  double dt = 0.0;
  double dt_safety = 0.5;
  std::size_t n_steps = 500;
  double poisson_tol = 1e-8;
  std::size_t poisson_max_iters = 20000;
  /// SOR relaxation; 0 picks 2 / (1 + sin(2 pi / max(nx, ny))).
  double sor_omega = 0.0;
  double source_width_cells = 2.0;
  Boundary boundary = Boundary::no_slip;

  double dx() const;
  double dy() const;
  double x(std::size_t i) const { return static_cast<double>(i) * dx(); }
  double y(std::size_t j) const { return static_cast<double>(j) * dy(); }
  double resolved_dt() const;
  double resolved_omega() const;
  double source_width() const { return source_width_cells * dx(); }
  /// ParameterError on non-positive sizes or a dt above the diffusive limit.
  void validate() const;
};

nlohmann::json to_json(const FluidConfig& cfg);
FluidConfig fluid_config_from_json(const nlohmann::json& j);

/// Grids are [nx x ny], index (i, j) with i along x.
struct FlowField {
  Tensor u;
  Tensor v;
  Tensor p;

  static FlowField zeros(const FluidConfig& cfg);
  bool operator==(const FlowField&) const = default;
};

struct StepStats {
  std::size_t poisson_iterations = 0;
  double max_divergence = 0.0;
};

/// n sources uniform over [0.1, 0.9]^2 with Re(lambda) uniform over
/// strength_range and Im(lambda) = 0.
std::vector<SourceSpec> place_sources(Rng& rng, std::size_t n, std::array<double, 2> strength_range);

/// x-momentum forcing sum_j lambda_j G_sigma(x - z_j) on the grid, y component
/// zero. [nx x ny x 2].
Tensor forcing_field(const std::vector<SourceSpec>& sources, const FluidConfig& cfg);

/// Advection (first-order upwind), diffusion (central) and forcing, before
/// projection. Boundary nodes stay at rest for no_slip.
FlowField provisional_velocity(const FlowField& field, const Tensor& forcing, const FluidConfig& cfg);

/// One Chorin projection step. StabilityError when the CFL limits fail,
/// SolverError when the pressure solve does not reach poisson_tol.
FlowField step(const FlowField& field, const Tensor& forcing, const FluidConfig& cfg, StepStats* stats = nullptr);

/// Central-difference divergence at the nodes where it is enforced.
Tensor divergence(const FlowField& field, const FluidConfig& cfg);
double max_divergence(const FlowField& field, const FluidConfig& cfg);
/// 0.5 * sum (u^2 + v^2) dx dy
double kinetic_energy(const FlowField& field, const FluidConfig& cfg);

/// Evolve from rest under the sources' forcing for cfg.n_steps.
FlowField simulate(const std::vector<SourceSpec>& sources, const FluidConfig& cfg);

/// Bilinear interpolation of a grid at points [T x 2]; returns [T].
Tensor sample_grid(const Tensor& grid, const FluidConfig& cfg, const Tensor& points);

}  // namespace opinet
