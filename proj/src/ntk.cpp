#include "opinet/ntk.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>

#include "opinet/binary_io.hpp"
#include "opinet/kernels.hpp"
#include "opinet/linalg.hpp"
#include "opinet/parallel.hpp"

namespace opinet {

std::uint64_t ProbeSet::fingerprint() const {
  std::string bytes;
  for (const auto& s : sources) {
    append_f64(bytes, s.location[0]);
    append_f64(bytes, s.location[1]);
    append_f64(bytes, s.strength[0]);
    append_f64(bytes, s.strength[1]);
  }
  for (double v : branch_input.values()) append_f64(bytes, v);
  for (double v : points().values()) append_f64(bytes, v);
  return fnv1a64(bytes);
}

Tensor ProbeSet::context() const { return branch_input.empty() ? source_matrix(sources) : branch_input; }

double NtkGram::lambda_min_positive() const {
  const double cutoff = 1e-10 * lambda_max();
  double best = 0.0;
  for (double v : eigenvalues.values())
    if (v > cutoff) best = v;  // descending order: the last one above the cutoff wins
  return best;
}

double NtkGram::condition_number() const {
  const double lo = lambda_min_positive();
  return lo > 0.0 ? lambda_max() / lo : std::numeric_limits<double>::infinity();
}

void NtkSchedule::validate() const {
  if (period < 1) throw ParameterError("ntk period must be >= 1");
  if (!(safety > 0.0 && safety <= 1.0)) throw ParameterError("ntk safety must lie in (0, 1]");
  if (!(lr_floor > 0.0 && lr_floor <= lr_ceiling)) throw ParameterError("ntk lr clamp requires 0 < floor <= ceiling");
}

NtkGram gram_from_jacobian(const Tensor& jacobian, long step, std::uint64_t probe_id) {
  const std::size_t n = jacobian.rows(), p = jacobian.cols();
  NtkGram g;
  g.step = step;
  g.probe_id = probe_id;
  g.theta = Tensor({n, n});
  kernels::gram(n, p, jacobian.data(), g.theta.data());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(g.theta(i, j) - g.theta(j, i)) > 1e-10 * std::max(1.0, std::abs(g.theta(i, j)))) {
        throw ContractError("NTK gram is not symmetric");
      }
  SymEig eig = sym_eig(g.theta);
  g.eigenvalues = std::move(eig.eigenvalues);
  g.eigenvectors = std::move(eig.eigenvectors);
  return g;
}

NtkGram assemble_gram(const DeepONetModel& model, const ProbeSet& probe, long step, std::size_t cap) {
  const std::size_t n = probe.size();
  if (n == 0 || (probe.sources.empty() && probe.branch_input.empty())) throw ParameterError("NTK probe set is empty");
  if (n > cap) {
    throw ResourceError("NTK probe of " + std::to_string(n) + " points exceeds the cap of " + std::to_string(cap));
  }
  return gram_from_jacobian(model.param_jacobian(probe.context(), probe.points()), step, probe.fingerprint());
}

double adapt_lr(const NtkGram& gram, const NtkSchedule& schedule) {
  schedule.validate();
  const double top = gram.lambda_max();
  if (!(top > 0.0)) throw DegenerateKernelError("NTK spectrum has no positive eigenvalue");
  const double bottom = gram.lambda_min_positive();
  const double lr = schedule.safety * 2.0 / (top + bottom);
  return std::clamp(lr, schedule.lr_floor, schedule.lr_ceiling);
}

double ntk_drift_penalty(const NtkGram& current, const NtkGram& reference) {
  if (current.probe_id != reference.probe_id || current.theta.shape() != reference.theta.shape()) {
    throw ContractError("NTK drift requires grams over the same probe set");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < current.theta.size(); ++i) {
    const double d = current.theta[i] - reference.theta[i];
    num += d * d;
    den += reference.theta[i] * reference.theta[i];
  }
  return num / std::max(den, 1e-12);
}

Tensor predict_linearized_residuals(const NtkGram& gram, const Tensor& initial_residual, double lr,
                                    std::size_t steps) {
  const std::size_t n = gram.size();
  if (initial_residual.size() != n) throw DimensionError("residual length does not match the gram");
  if (lr < 0.0) throw ParameterError("learning rate must be non-negative");
  Tensor r = initial_residual.reshaped({n});
  Tensor next({n});
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gram.theta(i, j) * r[j];
      next[i] = r[i] - lr * acc;
    }
    std::swap(r, next);
  }
  return r;
}

Tensor predict_linearized_residuals_spectral(const NtkGram& gram, const Tensor& initial_residual, double lr,
                                             std::size_t steps) {
  const std::size_t n = gram.size();
  if (initial_residual.size() != n) throw DimensionError("residual length does not match the gram");
  const Tensor& v = gram.eigenvectors;
  Tensor coeff({n});
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += v(i, k) * initial_residual[i];
    coeff[k] = acc * std::pow(1.0 - lr * gram.eigenvalues[k], static_cast<double>(steps));
  }
  Tensor r({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += v(i, k) * coeff[k];
    r[i] = acc;
  }
  return r;
}

ParamVector ntk_drift_gradient(const DeepONetModel& model, const ProbeSet& probe, const NtkGram& reference,
                               double relative_step) {
  const Tensor context = probe.context();
  const Tensor jac = model.param_jacobian(context, probe.points());
  const NtkGram current = gram_from_jacobian(jac, 0, probe.fingerprint());
  if (current.probe_id != reference.probe_id || current.theta.shape() != reference.theta.shape()) {
    throw ContractError("NTK drift requires grams over the same probe set");
  }
  const std::size_t n = jac.rows(), p = jac.cols();
  const double ref_sq = std::max(frobenius_norm(reference.theta) * frobenius_norm(reference.theta), 1e-12);
  const Tensor diff = sub(current.theta, reference.theta);
  // w_a = sum_b diff_ab J_b
  const Tensor w = matmul(diff, jac);

  const ParamVector base = model.parameters();
  const std::size_t field = model.field_param_count();
  double theta_norm = 0.0;
  for (std::size_t q = 0; q < field; ++q) theta_norm += base.storage()[q] * base.storage()[q];
  theta_norm = std::sqrt(theta_norm);

  std::vector<std::vector<double>> contributions(n);
  parallel_for(n, [&](std::size_t a) {
    std::vector<double>& out = contributions[a];
    out.assign(p, 0.0);
    double wn = 0.0;
    for (std::size_t q = 0; q < p; ++q) wn += w(a, q) * w(a, q);
    wn = std::sqrt(wn);
    if (wn == 0.0) return;
    const double eps = relative_step * std::max(1.0, theta_norm) / wn;
    const Tensor& pts = probe.points();
    const Tensor single({1, pts.cols()}, std::vector<double>(pts.data() + a * pts.cols(), pts.data() + (a + 1) * pts.cols()));
    Tensor rows[2];
    for (int side = 0; side < 2; ++side) {
      ParamVector shifted = base;
      const double sign = side == 0 ? 1.0 : -1.0;
      for (std::size_t q = 0; q < p; ++q) shifted.storage()[q] += sign * eps * w(a, q);
      DeepONetModel m = model;
      m.assign_parameters(shifted);
      rows[side] = m.param_jacobian(context, single);
    }
    for (std::size_t q = 0; q < p; ++q) out[q] = (rows[0][q] - rows[1][q]) / (2.0 * eps);
  });

  ParamVector grad = model.zero_gradients();
  const double scale = 4.0 / ref_sq;
  for (std::size_t a = 0; a < n; ++a) {
    if (contributions[a].empty()) continue;
    for (std::size_t q = 0; q < p; ++q) grad.storage()[q] += scale * contributions[a][q];
  }
  return grad;
}

void write_ntk_report_header(std::ostream& out) {
  out << "step,lambda_max,lambda_min_pos,condition_number,drift_penalty,adapted_lr\n";
}

void write_ntk_report_row(std::ostream& out, const NtkReportRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.lambda_max, r.lambda_min_pos,
                r.condition_number, r.drift_penalty, r.adapted_lr);
  out << buf;
}

}  // namespace opinet
