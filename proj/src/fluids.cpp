#include "opinet/fluids.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "opinet/error.hpp"
#include "opinet/losses.hpp"

namespace opinet {

namespace {

// Neighbour lookup and interior mask for one axis.
struct Axis {
  std::size_t n;
  bool periodic;

  bool interior(long i) const { return periodic || (i > 0 && i < static_cast<long>(n) - 1); }
  // Index of i + offset, or -1 when it falls outside a walled grid.
  long shift(long i, long offset) const {
    long k = i + offset;
    if (periodic) return ((k % static_cast<long>(n)) + static_cast<long>(n)) % static_cast<long>(n);
    return (k < 0 || k >= static_cast<long>(n)) ? -1 : k;
  }
};

struct Grid {
  Axis ax, ay;
  double dx, dy;

  Grid(const FluidConfig& cfg)
      : ax{cfg.nx, cfg.boundary == Boundary::periodic},
        ay{cfg.ny, cfg.boundary == Boundary::periodic},
        dx(cfg.dx()),
        dy(cfg.dy()) {}

  std::size_t at(long i, long j) const { return static_cast<std::size_t>(i) * ay.n + static_cast<std::size_t>(j); }
  bool interior(long i, long j) const { return ax.interior(i) && ay.interior(j); }
  // Value at (i, j) or 0 outside the grid.
  double value(const Tensor& g, long i, long j) const {
    if (i < 0 || j < 0) return 0.0;
    return g[at(i, j)];
  }
  double mask(long i, long j) const { return (i >= 0 && j >= 0 && interior(i, j)) ? 1.0 : 0.0; }
};

// (D w)(i, j) for the x and y component grids.
double div_at(const Grid& g, const Tensor& wx, const Tensor& wy, long i, long j) {
  const double ddx = (g.value(wx, g.ax.shift(i, 1), j) - g.value(wx, g.ax.shift(i, -1), j)) / (2.0 * g.dx);
  const double ddy = (g.value(wy, i, g.ay.shift(j, 1)) - g.value(wy, i, g.ay.shift(j, -1))) / (2.0 * g.dy);
  return ddx + ddy;
}

// L p = D(mask * G p) at an unknown node. With this operator the corrected
// velocity's divergence is exactly dt times the Poisson residual.
double laplace_at(const Grid& g, const Tensor& p, long i, long j) {
  const long ip = g.ax.shift(i, 1), im = g.ax.shift(i, -1);
  const long jp = g.ay.shift(j, 1), jm = g.ay.shift(j, -1);
  const double c = p[g.at(i, j)];
  double lx = 0.0, ly = 0.0;
  if (g.mask(ip, j) > 0.0) lx += g.value(p, g.ax.shift(ip, 1), j) - c;
  if (g.mask(im, j) > 0.0) lx -= c - g.value(p, g.ax.shift(im, -1), j);
  if (g.mask(i, jp) > 0.0) ly += g.value(p, i, g.ay.shift(jp, 1)) - c;
  if (g.mask(i, jm) > 0.0) ly -= c - g.value(p, i, g.ay.shift(jm, -1));
  return lx / (4.0 * g.dx * g.dx) + ly / (4.0 * g.dy * g.dy);
}

double laplace_diag(const Grid& g, long i, long j) {
  const double mx = g.mask(g.ax.shift(i, 1), j) + g.mask(g.ax.shift(i, -1), j);
  const double my = g.mask(i, g.ay.shift(j, 1)) + g.mask(i, g.ay.shift(j, -1));
  return -mx / (4.0 * g.dx * g.dx) - my / (4.0 * g.dy * g.dy);
}

// SOR on L p = rhs, warm-started from p; returns iterations used.
std::size_t solve_pressure(const Grid& g, const FluidConfig& cfg, const Tensor& rhs, Tensor& p, double dt) {
  const long nx = static_cast<long>(cfg.nx), ny = static_cast<long>(cfg.ny);
  const double omega = cfg.resolved_omega();
  auto residual = [&] {
    double worst = 0.0;
    for (long i = 0; i < nx; ++i)
      for (long j = 0; j < ny; ++j)
        if (g.interior(i, j)) worst = std::max(worst, std::abs(rhs[g.at(i, j)] - laplace_at(g, p, i, j)));
    return worst;
  };
  constexpr std::size_t kCheckEvery = 10;
  for (std::size_t it = 0; it <= cfg.poisson_max_iters; ++it) {
    if (it % kCheckEvery == 0 && dt * residual() <= cfg.poisson_tol) return it;
    if (it == cfg.poisson_max_iters) break;
    for (long i = 0; i < nx; ++i)
      for (long j = 0; j < ny; ++j) {
        if (!g.interior(i, j)) continue;
        const double diag = laplace_diag(g, i, j);
        const double r = rhs[g.at(i, j)] - laplace_at(g, p, i, j);
        p[g.at(i, j)] += omega * r / diag;
      }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "pressure solve did not reach tolerance %.3g in %zu iterations (residual %.3g)",
                cfg.poisson_tol, cfg.poisson_max_iters, dt * residual());
  throw SolverError(buf);
}

void check_cfl(const FlowField& f, const FluidConfig& cfg, double dt) {
  const double diff_limit = 0.25 * std::min(cfg.dx() * cfg.dx(), cfg.dy() * cfg.dy()) / cfg.viscosity;
  if (dt > diff_limit * (1.0 + 1e-12)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "diffusive CFL violated: dt / limit = %.4g (dt %.4g, limit %.4g)", dt / diff_limit,
                  dt, diff_limit);
    throw StabilityError(buf);
  }
  const double vmax = std::max(max_abs(f.u), max_abs(f.v));
  const double ratio = dt * vmax / std::min(cfg.dx(), cfg.dy());
  if (ratio > 0.5) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "advective CFL violated: dt * |u|max / dx = %.4g exceeds 0.5", ratio);
    throw StabilityError(buf);
  }
}

}  // namespace

double FluidConfig::dx() const {
  return boundary == Boundary::periodic ? 1.0 / static_cast<double>(nx) : 1.0 / static_cast<double>(nx - 1);
}

double FluidConfig::dy() const {
  return boundary == Boundary::periodic ? 1.0 / static_cast<double>(ny) : 1.0 / static_cast<double>(ny - 1);
}

double FluidConfig::resolved_dt() const {
  if (dt > 0.0) return dt;
  return dt_safety * 0.25 * std::min(dx() * dx(), dy() * dy()) / viscosity;
}

double FluidConfig::resolved_omega() const {
  if (sor_omega > 0.0) return sor_omega;
  const double n = static_cast<double>(std::max(nx, ny));
  return 2.0 / (1.0 + std::sin(2.0 * std::numbers::pi / n));
}

void FluidConfig::validate() const {
  if (nx < 4 || ny < 4) throw ParameterError("fluid grid needs at least 4 nodes per axis");
  if (!(viscosity > 0.0)) throw ParameterError("viscosity must be positive");
  if (dt < 0.0) throw ParameterError("dt must be positive (or 0 for automatic)");
  if (!(dt_safety > 0.0 && dt_safety <= 1.0)) throw ParameterError("dt_safety must lie in (0, 1]");
  if (n_steps == 0) throw ParameterError("n_steps must be positive");
  if (!(poisson_tol > 0.0)) throw ParameterError("poisson_tol must be positive");
  if (poisson_max_iters == 0) throw ParameterError("poisson_max_iters must be positive");
  if (sor_omega < 0.0 || sor_omega >= 2.0) throw ParameterError("sor_omega must lie in (0, 2), or 0 for automatic");
  if (!(source_width_cells > 0.0)) throw ParameterError("source_width_cells must be positive");
  const double limit = 0.25 * std::min(dx() * dx(), dy() * dy()) / viscosity;
  if (resolved_dt() > limit * (1.0 + 1e-12)) {
    throw ParameterError("dt " + std::to_string(resolved_dt()) + " exceeds the diffusive limit " + std::to_string(limit));
  }
}

nlohmann::json to_json(const FluidConfig& c) {
  return {{"nx", c.nx},
          {"ny", c.ny},
          {"viscosity", c.viscosity},
          {"dt", c.dt},
          {"dt_safety", c.dt_safety},
          {"n_steps", c.n_steps},
          {"poisson_tol", c.poisson_tol},
          {"poisson_max_iters", c.poisson_max_iters},
          {"sor_omega", c.sor_omega},
          {"source_width_cells", c.source_width_cells},
          {"boundary", c.boundary == Boundary::periodic ? "periodic" : "no_slip"}};
}

FluidConfig fluid_config_from_json(const nlohmann::json& j) {
  FluidConfig c;
  c.nx = j.at("nx");
  c.ny = j.at("ny");
  c.viscosity = j.at("viscosity");
  c.dt = j.at("dt");
  c.dt_safety = j.at("dt_safety");
  c.n_steps = j.at("n_steps");
  c.poisson_tol = j.at("poisson_tol");
  c.poisson_max_iters = j.at("poisson_max_iters");
  c.sor_omega = j.at("sor_omega");
  c.source_width_cells = j.at("source_width_cells");
  const std::string b = j.at("boundary");
  if (b == "periodic")
    c.boundary = Boundary::periodic;
  else if (b == "no_slip")
    c.boundary = Boundary::no_slip;
  else
    throw ParameterError("unknown boundary '" + b + "'");
  return c;
}

FlowField FlowField::zeros(const FluidConfig& cfg) {
  return {Tensor({cfg.nx, cfg.ny}), Tensor({cfg.nx, cfg.ny}), Tensor({cfg.nx, cfg.ny})};
}

std::vector<SourceSpec> place_sources(Rng& rng, std::size_t n, std::array<double, 2> strength_range) {
  if (n == 0) throw ParameterError("place_sources needs n >= 1");
  if (!(strength_range[0] <= strength_range[1])) throw ParameterError("strength range is empty");
  std::vector<SourceSpec> out(n);
  for (auto& s : out) {
    s.location = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    s.strength = {strength_range[0] + (strength_range[1] - strength_range[0]) * rng.uniform(), 0.0};
  }
  return out;
}

Tensor forcing_field(const std::vector<SourceSpec>& sources, const FluidConfig& cfg) {
  Tensor nodes({cfg.nx * cfg.ny, 2});
  for (std::size_t i = 0; i < cfg.nx; ++i)
    for (std::size_t j = 0; j < cfg.ny; ++j) {
      nodes(i * cfg.ny + j, 0) = cfg.x(i);
      nodes(i * cfg.ny + j, 1) = cfg.y(j);
    }
  const Tensor fx = mollified_forcing(sources, nodes, cfg.source_width());
  Tensor out({cfg.nx, cfg.ny, 2});
  for (std::size_t k = 0; k < fx.size(); ++k) out[2 * k] = fx[k];
  return out;
}

FlowField provisional_velocity(const FlowField& f, const Tensor& forcing, const FluidConfig& cfg) {
  if (forcing.shape() != Shape{cfg.nx, cfg.ny, 2}) {
    throw DimensionError("forcing must be " + shape_string({cfg.nx, cfg.ny, 2}) + ", got " +
                         shape_string(forcing.shape()));
  }
  const Grid g(cfg);
  const double dt = cfg.resolved_dt(), nu = cfg.viscosity;
  FlowField out{Tensor({cfg.nx, cfg.ny}), Tensor({cfg.nx, cfg.ny}), f.p};
  const long nx = static_cast<long>(cfg.nx), ny = static_cast<long>(cfg.ny);
  for (long i = 0; i < nx; ++i)
    for (long j = 0; j < ny; ++j) {
      if (!g.interior(i, j)) continue;
      const long ip = g.ax.shift(i, 1), im = g.ax.shift(i, -1), jp = g.ay.shift(j, 1), jm = g.ay.shift(j, -1);
      const std::size_t c = g.at(i, j);
      const double uc = f.u[c], vc = f.v[c];
      const Tensor* comps[2] = {&f.u, &f.v};
      Tensor* outs[2] = {&out.u, &out.v};
      for (int k = 0; k < 2; ++k) {
        const Tensor& q = *comps[k];
        const double qc = q[c];
        const double qxp = q[g.at(ip, j)], qxm = q[g.at(im, j)], qyp = q[g.at(i, jp)], qym = q[g.at(i, jm)];
        const double adv_x = uc > 0.0 ? uc * (qc - qxm) / g.dx : uc * (qxp - qc) / g.dx;
        const double adv_y = vc > 0.0 ? vc * (qc - qym) / g.dy : vc * (qyp - qc) / g.dy;
        const double lap = (qxp - 2.0 * qc + qxm) / (g.dx * g.dx) + (qyp - 2.0 * qc + qym) / (g.dy * g.dy);
        (*outs[k])[c] = qc + dt * (-(adv_x + adv_y) + nu * lap + forcing[2 * c + static_cast<std::size_t>(k)]);
      }
    }
  return out;
}

FlowField step(const FlowField& field, const Tensor& forcing, const FluidConfig& cfg, StepStats* stats) {
  const double dt = cfg.resolved_dt();
  check_cfl(field, cfg, dt);
  FlowField star = provisional_velocity(field, forcing, cfg);
  const Grid g(cfg);
  const long nx = static_cast<long>(cfg.nx), ny = static_cast<long>(cfg.ny);
  Tensor rhs({cfg.nx, cfg.ny});
  for (long i = 0; i < nx; ++i)
    for (long j = 0; j < ny; ++j)
      if (g.interior(i, j)) rhs[g.at(i, j)] = div_at(g, star.u, star.v, i, j) / dt;
  Tensor p = field.p;
  const std::size_t iters = solve_pressure(g, cfg, rhs, p, dt);
  FlowField out{star.u, star.v, p};
  for (long i = 0; i < nx; ++i)
    for (long j = 0; j < ny; ++j) {
      if (!g.interior(i, j)) continue;
      const std::size_t c = g.at(i, j);
      out.u[c] -= dt * (g.value(p, g.ax.shift(i, 1), j) - g.value(p, g.ax.shift(i, -1), j)) / (2.0 * g.dx);
      out.v[c] -= dt * (g.value(p, i, g.ay.shift(j, 1)) - g.value(p, i, g.ay.shift(j, -1))) / (2.0 * g.dy);
    }
  require_finite(out.u, "velocity u");
  require_finite(out.v, "velocity v");
  if (stats) {
    stats->poisson_iterations = iters;
    stats->max_divergence = max_divergence(out, cfg);
  }
  return out;
}

Tensor divergence(const FlowField& f, const FluidConfig& cfg) {
  const Grid g(cfg);
  Tensor d({cfg.nx, cfg.ny});
  for (long i = 0; i < static_cast<long>(cfg.nx); ++i)
    for (long j = 0; j < static_cast<long>(cfg.ny); ++j)
      if (g.interior(i, j)) d[g.at(i, j)] = div_at(g, f.u, f.v, i, j);
  return d;
}

double max_divergence(const FlowField& f, const FluidConfig& cfg) { return max_abs(divergence(f, cfg)); }

double kinetic_energy(const FlowField& f, const FluidConfig& cfg) {
  double acc = 0.0;
  for (std::size_t k = 0; k < f.u.size(); ++k) acc += f.u[k] * f.u[k] + f.v[k] * f.v[k];
  return 0.5 * acc * cfg.dx() * cfg.dy();
}

FlowField simulate(const std::vector<SourceSpec>& sources, const FluidConfig& cfg) {
  cfg.validate();
  const Tensor forcing = forcing_field(sources, cfg);
  FlowField f = FlowField::zeros(cfg);
  for (std::size_t s = 0; s < cfg.n_steps; ++s) f = step(f, forcing, cfg);
  return f;
}

Tensor sample_grid(const Tensor& grid, const FluidConfig& cfg, const Tensor& points) {
  if (grid.shape() != Shape{cfg.nx, cfg.ny}) throw DimensionError("grid does not match the fluid config");
  const bool periodic = cfg.boundary == Boundary::periodic;
  Tensor out({points.rows()});
  for (std::size_t t = 0; t < points.rows(); ++t) {
    double fx = points(t, 0) / cfg.dx(), fy = points(t, 1) / cfg.dy();
    long i0, j0;
    if (periodic) {
      i0 = static_cast<long>(std::floor(fx));
      j0 = static_cast<long>(std::floor(fy));
    } else {
      fx = std::clamp(fx, 0.0, static_cast<double>(cfg.nx - 1));
      fy = std::clamp(fy, 0.0, static_cast<double>(cfg.ny - 1));
      i0 = std::min(static_cast<long>(fx), static_cast<long>(cfg.nx) - 2);
      j0 = std::min(static_cast<long>(fy), static_cast<long>(cfg.ny) - 2);
    }
    const double wx = fx - static_cast<double>(i0), wy = fy - static_cast<double>(j0);
    auto at = [&](long i, long j) {
      if (periodic) {
        i = ((i % static_cast<long>(cfg.nx)) + static_cast<long>(cfg.nx)) % static_cast<long>(cfg.nx);
        j = ((j % static_cast<long>(cfg.ny)) + static_cast<long>(cfg.ny)) % static_cast<long>(cfg.ny);
      }
      return grid[static_cast<std::size_t>(i) * cfg.ny + static_cast<std::size_t>(j)];
    };
    out[t] = (1 - wx) * (1 - wy) * at(i0, j0) + wx * (1 - wy) * at(i0 + 1, j0) + (1 - wx) * wy * at(i0, j0 + 1) +
             wx * wy * at(i0 + 1, j0 + 1);
  }
  return out;
}

}  // namespace opinet
