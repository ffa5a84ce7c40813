#include "cad/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cad {

void OptimizerConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("OptimizerConfig: lr must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("OptimizerConfig: weight_decay must be >= 0");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("OptimizerConfig: moment betas must lie in (0,1)");
  if (eps <= 0.0) throw std::invalid_argument("OptimizerConfig: eps must be positive");
}

AdamWState AdamWState::forParams(const ParameterSet& params) {
  AdamWState s;
  s.m = params.shapeLike();
  s.v = params.shapeLike();
  return s;
}

void adamwStep(ParameterSet& params, const ParameterSet& grads, AdamWState& state,
               const OptimizerConfig& cfg, double lr_override) {
  cfg.validate();
  if (grads.entries.size() != params.entries.size())
    throw std::invalid_argument("adamwStep: gradient set does not match parameter set");
  const double lr = lr_override >= 0.0 ? lr_override : cfg.lr;

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (size_t e = 0; e < params.entries.size(); ++e) {
    auto& entry = params.entries[e];
    if (!entry.trainable) continue;
    const Matrix& g = grads.entries[e].tensor;
    if (!g.allFinite())
      throw std::runtime_error("adamwStep: non-finite gradient in tensor '" + entry.name + "'");
    Matrix& m = state.m.entries[e].tensor;
    Matrix& v = state.v.entries[e].tensor;
    double* theta = entry.tensor.data();
    const double* gd = g.data();
    double* md = m.data();
    double* vd = v.data();
    for (size_t i = 0; i < entry.tensor.size(); ++i) {
      theta[i] -= lr * cfg.weight_decay * theta[i];  // decoupled decay on the incoming value
      md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
      vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      const double mhat = md[i] / bc1;
      const double vhat = vd[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double clipGradNorm(ParameterSet& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& e : grads.entries) {
    if (!e.trainable) continue;
    const double* d = e.tensor.data();
    for (size_t i = 0; i < e.tensor.size(); ++i) sq += d[i] * d[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& e : grads.entries) {
      if (!e.trainable) continue;
      scaleInPlace(e.tensor, scale);
    }
  }
  return norm;
}

}  // namespace cad
