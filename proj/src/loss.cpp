#include "cad/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cad {

void LossConfig::validate() const {
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("LossConfig: beta in [0,1)");
  if (gamma < 0.0) throw std::invalid_argument("LossConfig: gamma must be >= 0");
  for (long long n : counts)
    if (n < 0) throw std::invalid_argument("LossConfig: negative class count");
}

double LossConfig::classWeight(int y) const {
  if (y < 0 || y >= static_cast<int>(counts.size()))
    throw std::invalid_argument("LossConfig: target class " + std::to_string(y) + " outside count table");
  const long long n = counts[y];
  if (n <= 0)
    throw std::invalid_argument("LossConfig: class " + std::to_string(y) +
                                " appears in targets but has zero training count");
  if (beta == 0.0) return 1.0;
  return (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(n)));
}

namespace {

void checkShapes(const Matrix& posteriors, const std::vector<int>& targets) {
  if (posteriors.rows() != static_cast<int>(targets.size()))
    throw std::invalid_argument("cbFocalLoss: " + std::to_string(posteriors.rows()) + " posterior rows vs " +
                                std::to_string(targets.size()) + " targets");
}

}  // namespace

double cbFocalLossSum(const Matrix& posteriors, const std::vector<int>& targets, const LossConfig& cfg) {
  cfg.validate();
  checkShapes(posteriors, targets);
  double sum = 0.0;
  for (int t = 0; t < posteriors.rows(); ++t) {
    const int y = targets[t];
    if (y < 0 || y >= posteriors.cols())
      throw std::invalid_argument("cbFocalLoss: target " + std::to_string(y) + " out of range at frame " +
                                  std::to_string(t));
    const double w = cfg.classWeight(y);
    const double p = std::max(posteriors(t, y), kProbClamp);
    const double focal = cfg.gamma == 0.0 ? 1.0 : std::pow(std::max(0.0, 1.0 - p), cfg.gamma);
    sum += -w * focal * std::log(p);
  }
  return sum;
}

double cbFocalLoss(const Matrix& posteriors, const std::vector<int>& targets, const LossConfig& cfg) {
  if (targets.empty()) throw std::invalid_argument("cbFocalLoss: no frames");
  return cbFocalLossSum(posteriors, targets, cfg) / static_cast<double>(targets.size());
}

Matrix cbFocalLossBackward(const Matrix& posteriors, const std::vector<int>& targets, const LossConfig& cfg,
                           double scale) {
  cfg.validate();
  checkShapes(posteriors, targets);
  const int C = posteriors.cols();
  Matrix dlogits(posteriors.rows(), C);
  for (int t = 0; t < posteriors.rows(); ++t) {
    const int y = targets[t];
    const double w = cfg.classWeight(y);
    const double p_raw = posteriors(t, y);
    if (p_raw < kProbClamp) continue;  // clamped flat region of the loss
    const double p = p_raw;
    const double q = std::max(0.0, 1.0 - p);

    // dL/dp_y for L = -w (1-p)^g log p
    double dLdp;
    if (cfg.gamma == 0.0) {
      dLdp = -w / p;
    } else if (q == 0.0) {
      dLdp = 0.0;  // (1-p)^g and its product with log p both vanish at p=1
    } else {
      dLdp = -w * (std::pow(q, cfg.gamma) / p - cfg.gamma * std::pow(q, cfg.gamma - 1.0) * std::log(p));
    }

    // chain through softmax: dp_y/dz_j = p_y (1{j=y} - p_j)
    const double* row = posteriors.row(t);
    double* out = dlogits.row(t);
    const double base = scale * dLdp * p;
    for (int j = 0; j < C; ++j) out[j] = base * ((j == y ? 1.0 : 0.0) - row[j]);
  }
  return dlogits;
}

}  // namespace cad
