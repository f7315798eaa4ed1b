#include <doctest.h>

#include <cmath>
#include <numbers>

#include "opinet/error.hpp"
#include "opinet/fluids.hpp"

using namespace opinet;

namespace {

constexpr double kPi = std::numbers::pi;

FlowField taylor_green(const FluidConfig& cfg, double amplitude) {
  FlowField f = FlowField::zeros(cfg);
  for (std::size_t i = 0; i < cfg.nx; ++i)
    for (std::size_t j = 0; j < cfg.ny; ++j) {
      const double x = cfg.x(i), y = cfg.y(j);
      f.u[i * cfg.ny + j] = amplitude * std::sin(2 * kPi * x) * std::cos(2 * kPi * y);
      f.v[i * cfg.ny + j] = -amplitude * std::cos(2 * kPi * x) * std::sin(2 * kPi * y);
    }
  return f;
}

FlowField random_interior_field(const FluidConfig& cfg, Rng& rng, double scale) {
  FlowField f = FlowField::zeros(cfg);
  for (std::size_t i = 1; i + 1 < cfg.nx; ++i)
    for (std::size_t j = 1; j + 1 < cfg.ny; ++j) {
      f.u[i * cfg.ny + j] = rng.uniform(-scale, scale);
      f.v[i * cfg.ny + j] = rng.uniform(-scale, scale);
    }
  return f;
}

Tensor zero_forcing(const FluidConfig& cfg) { return Tensor({cfg.nx, cfg.ny, 2}); }

SourceSpec src(double x, double y, double re) { return {{x, y}, {re, 0.0}}; }

}  // namespace

TEST_CASE("config defaults and validation") {
  FluidConfig cfg;
  CHECK(cfg.dx() == doctest::Approx(1.0 / 31.0));
  CHECK(cfg.resolved_dt() == doctest::Approx(0.5 * 0.25 / (31.0 * 31.0) / 0.05));
  CHECK_NOTHROW(cfg.validate());
  FluidConfig bad = cfg;
  bad.dt = 1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = cfg;
  bad.viscosity = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = cfg;
  bad.nx = 2;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  const FluidConfig back = fluid_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
}

TEST_CASE("place_sources") {
  SUBCASE("deterministic per seed") {
    Rng a(11), b(11);
    CHECK(place_sources(a, 1, {0.5, 1.5}) == place_sources(b, 1, {0.5, 1.5}));
  }
  SUBCASE("location mean over 10^4 draws") {
    Rng rng(3);
    const auto s = place_sources(rng, 10000, {0.5, 1.5});
    double mx = 0, my = 0, ms = 0;
    for (const auto& p : s) {
      CHECK(p.location[0] >= 0.1);
      CHECK(p.location[0] <= 0.9);
      CHECK(p.location[1] >= 0.1);
      CHECK(p.location[1] <= 0.9);
      CHECK(p.strength[1] == 0.0);
      mx += p.location[0];
      my += p.location[1];
      ms += p.strength[0];
    }
    CHECK(std::abs(mx / 1e4 - 0.5) < 0.02);
    CHECK(std::abs(my / 1e4 - 0.5) < 0.02);
    CHECK(std::abs(ms / 1e4 - 1.0) < 0.02);
  }
  SUBCASE("degenerate strength range") {
    Rng rng(5);
    for (const auto& p : place_sources(rng, 50, {0.7, 0.7})) CHECK(p.strength[0] == 0.7);
  }
  SUBCASE("errors") {
    Rng rng(5);
    CHECK_THROWS_AS(place_sources(rng, 1, {1.0, 0.5}), ParameterError);
    CHECK_THROWS_AS(place_sources(rng, 0, {0.5, 1.0}), ParameterError);
  }
}

TEST_CASE("forcing field") {
  FluidConfig cfg;
  SUBCASE("quadrature recovers strength") {
    const double lambda = 1.3;
    const Tensor f = forcing_field({src(0.47, 0.52, lambda)}, cfg);
    double total = 0.0, ysum = 0.0;
    for (std::size_t k = 0; k < cfg.nx * cfg.ny; ++k) {
      total += f[2 * k];
      ysum += std::abs(f[2 * k + 1]);
    }
    total *= cfg.dx() * cfg.dy();
    CHECK(std::abs(total - lambda) / lambda < 0.01);
    CHECK(ysum == 0.0);
  }
  SUBCASE("peak matches the Gaussian at a node") {
    const double s = cfg.source_width();
    const Tensor f = forcing_field({src(cfg.x(10), cfg.y(20), 2.0)}, cfg);
    CHECK(f[(10 * cfg.ny + 20) * 2] == doctest::Approx(2.0 / (2 * kPi * s * s)).epsilon(1e-12));
  }
  SUBCASE("zero strength") {
    const Tensor f = forcing_field({src(0.5, 0.5, 0.0)}, cfg);
    CHECK(max_abs(f) == 0.0);
  }
  SUBCASE("linearity") {
    const Tensor a = forcing_field({src(0.3, 0.4, 0.8)}, cfg);
    const Tensor b = forcing_field({src(0.7, 0.6, 1.1)}, cfg);
    const Tensor ab = forcing_field({src(0.3, 0.4, 0.8), src(0.7, 0.6, 1.1)}, cfg);
    for (std::size_t k = 0; k < ab.size(); ++k) CHECK(ab[k] == doctest::Approx(a[k] + b[k]).epsilon(1e-14));
  }
}

TEST_CASE("zero field is a fixed point") {
  FluidConfig cfg;
  const FlowField z = FlowField::zeros(cfg);
  StepStats st;
  const FlowField next = step(z, zero_forcing(cfg), cfg, &st);
  CHECK(next == z);
  CHECK(st.poisson_iterations == 0);
}

TEST_CASE("momentum injected before projection equals dt times total forcing") {
  FluidConfig cfg;
  const Tensor forcing = forcing_field({src(0.4, 0.6, 1.0), src(0.65, 0.3, 0.7)}, cfg);
  const FlowField star = provisional_velocity(FlowField::zeros(cfg), forcing, cfg);
  double mom = 0.0, fsum = 0.0;
  for (std::size_t i = 1; i + 1 < cfg.nx; ++i)
    for (std::size_t j = 1; j + 1 < cfg.ny; ++j) fsum += forcing[(i * cfg.ny + j) * 2];
  for (std::size_t k = 0; k < star.u.size(); ++k) mom += star.u[k];
  CHECK(std::abs(mom - cfg.resolved_dt() * fsum) <= 1e-10);
  CHECK(max_abs(star.v) == 0.0);
}

TEST_CASE("projection enforces the divergence bound and walls") {
  FluidConfig cfg;
  const Tensor forcing = forcing_field({src(0.4, 0.6, 1.0)}, cfg);
  FlowField f = FlowField::zeros(cfg);
  const double bound = 10.0 * cfg.poisson_tol / cfg.dx();
  for (int s = 0; s < 40; ++s) {
    StepStats st;
    f = step(f, forcing, cfg, &st);
    CHECK(st.max_divergence <= bound);
    CHECK(st.max_divergence <= 1e-6);
  }
  CHECK(max_abs(f.u) > 0.0);
  for (std::size_t i = 0; i < cfg.nx; ++i) {
    for (std::size_t j : {std::size_t{0}, cfg.ny - 1}) {
      CHECK(f.u(i, j) == 0.0);
      CHECK(f.v(i, j) == 0.0);
      CHECK(f.p(i, j) == 0.0);
      CHECK(f.u(j, i) == 0.0);
      CHECK(f.v(j, i) == 0.0);
      CHECK(f.p(j, i) == 0.0);
    }
  }
}

TEST_CASE("unforced energy never increases") {
  FluidConfig cfg;
  Rng rng(17);
  FlowField f = random_interior_field(cfg, rng, 0.5);
  double e = kinetic_energy(f, cfg);
  for (int s = 0; s < 60; ++s) {
    f = step(f, zero_forcing(cfg), cfg);
    const double next = kinetic_energy(f, cfg);
    CHECK(next <= e + 1e-12);
    e = next;
  }
}

TEST_CASE("Taylor-Green decay rate") {
  FluidConfig cfg;
  cfg.nx = cfg.ny = 64;
  cfg.viscosity = 0.01;
  cfg.boundary = Boundary::periodic;
  FlowField f = taylor_green(cfg, 0.01);
  const double e0 = kinetic_energy(f, cfg);
  const std::size_t steps = 200;
  for (std::size_t s = 0; s < steps; ++s) f = step(f, zero_forcing(cfg), cfg);
  const double t = static_cast<double>(steps) * cfg.resolved_dt();
  const double k = 2 * kPi;
  const double measured = -std::log(kinetic_energy(f, cfg) / e0) / t;
  const double analytic = 4 * cfg.viscosity * k * k;
  CHECK(std::abs(measured - analytic) / analytic < 0.02);
}

TEST_CASE("CFL violations raise StabilityError") {
  FluidConfig cfg;
  FlowField f = FlowField::zeros(cfg);
  f.u(10, 10) = 100.0;
  CHECK_THROWS_AS(step(f, zero_forcing(cfg), cfg), StabilityError);
  FluidConfig fast = cfg;
  fast.dt = 1.0;
  CHECK_THROWS_AS(step(FlowField::zeros(cfg), zero_forcing(cfg), fast), StabilityError);
  try {
    step(f, zero_forcing(cfg), cfg);
  } catch (const StabilityError& e) {
    CHECK(std::string(e.what()).find("advective") != std::string::npos);
  }
}

TEST_CASE("Poisson non-convergence raises SolverError") {
  FluidConfig cfg;
  cfg.poisson_max_iters = 3;
  cfg.poisson_tol = 1e-14;
  const Tensor forcing = forcing_field({src(0.5, 0.5, 1.0)}, cfg);
  CHECK_THROWS_AS(step(FlowField::zeros(cfg), forcing, cfg), SolverError);
}

TEST_CASE("simulate is deterministic") {
  FluidConfig cfg;
  cfg.n_steps = 20;
  const std::vector<SourceSpec> s = {src(0.3, 0.5, 1.0)};
  CHECK(simulate(s, cfg) == simulate(s, cfg));
}

TEST_CASE("bilinear sampling") {
  FluidConfig cfg;
  Tensor g({cfg.nx, cfg.ny});
  for (std::size_t i = 0; i < cfg.nx; ++i)
    for (std::size_t j = 0; j < cfg.ny; ++j) g(i, j) = 2.0 * cfg.x(i) - 3.0 * cfg.y(j) + 0.5;
  const Tensor pts = Tensor::matrix({{0.13, 0.77}, {0.5, 0.5}, {0.999, 0.001}, {0.0, 1.0}});
  const Tensor got = sample_grid(g, cfg, pts);
  for (std::size_t t = 0; t < 4; ++t) CHECK(got[t] == doctest::Approx(2.0 * pts(t, 0) - 3.0 * pts(t, 1) + 0.5));
  CHECK_THROWS_AS(sample_grid(Tensor({3, 3}), cfg, pts), DimensionError);
}
