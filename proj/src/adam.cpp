#include "opinet/adam.hpp"

#include <cmath>

#include "opinet/error.hpp"

namespace opinet {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ParameterError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ParameterError("eps must be positive");
  if (batch == 0) throw ParameterError("batch must be positive");
  if (epochs == 0) throw ParameterError("epochs must be positive");
}

TrainState::TrainState(ParamVector initial, double lr_, std::uint64_t seed)
    : params(std::move(initial)), lr(lr_), rng(seed) {
  m = params.zeros_like();
  v = params.zeros_like();
}

void adam_step(TrainState& s, const ParamVector& grads, const OptimizerConfig& cfg) {
  if (!grads.same_layout(s.params) || !s.m.same_layout(s.params) || !s.v.same_layout(s.params)) {
    throw DimensionError("adam_step: gradient or moment layout differs from the parameters");
  }
  const auto& g = grads.storage();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!std::isfinite(g[k])) throw NumericError("non-finite gradient for " + grads.owner(k));
  }
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto& p = s.params.storage();
  auto& m = s.m.storage();
  auto& v = s.v.storage();
  for (std::size_t k = 0; k < g.size(); ++k) {
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
    p[k] -= s.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
  }
}

}  // namespace opinet
