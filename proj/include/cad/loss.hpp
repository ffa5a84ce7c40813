#pragma once

#include <vector>

#include "cad/matrix.hpp"

namespace cad {

// Class-balanced focal loss:
//   L(p, y) = -(1-beta)/(1-beta^{n_y}) * (1-p_y)^gamma * log(p_y)
// with n_y the training-split frame count of class y and p_y clamped to
// >= 1e-12. beta=gamma=0 reduces to plain cross-entropy.
struct LossConfig {
  double beta = 0.0;
  double gamma = 0.0;
  std::vector<long long> counts;

  void validate() const;
  // (1-beta)/(1-beta^{n_y})
  double classWeight(int y) const;
};

inline constexpr double kProbClamp = 1e-12;

// Mean over frames.
double cbFocalLoss(const Matrix& posteriors, const std::vector<int>& targets, const LossConfig& cfg);
// Sum over frames; callers averaging across several chunks divide by the
// total frame count themselves.
double cbFocalLossSum(const Matrix& posteriors, const std::vector<int>& targets, const LossConfig& cfg);

// d(scale * sum-over-frames loss)/d(logits) for softmax posteriors.
Matrix cbFocalLossBackward(const Matrix& posteriors, const std::vector<int>& targets, const LossConfig& cfg,
                           double scale);

}  // namespace cad
