#pragma once

#include "cad/model.hpp"

namespace cad {

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// First/second moment estimates, one tensor per trainable parameter.
struct AdamWState {
  ParameterSet m, v;
  long long step = 0;

  static AdamWState forParams(const ParameterSet& params);
};

// Bias-corrected Adam update with decoupled weight decay: the decay term
// theta -= lr * lambda * theta is applied separately from the gradient step.
// lr overrides cfg.lr when >= 0 (the schedule owns the current rate).
// Throws on non-finite gradients, naming the offending tensor.
void adamwStep(ParameterSet& params, const ParameterSet& grads, AdamWState& state,
               const OptimizerConfig& cfg, double lr_override = -1.0);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm; returns the pre-clip norm.
double clipGradNorm(ParameterSet& grads, double max_norm = 1.0);

}  // namespace cad
