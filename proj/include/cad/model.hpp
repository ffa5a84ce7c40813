#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cad/matrix.hpp"
#include "cad/rng.hpp"

namespace cad {

enum class Arch { Dnn, Dtcnn, Gru, BiGru };
enum class NormKind { Layer, Instance, Batch };

Arch parseArch(const std::string& name);
const std::string& archName(Arch a);
NormKind parseNormKind(const std::string& name);
const std::string& normKindName(NormKind k);

struct ModelConfig {
  Arch arch = Arch::Gru;
  int input_dim = 0;
  int hidden_size = 64;
  int n_layers = 1;
  double dropout_rate = 0.0;
  int context_frames = 0;        // K context frames each side (DNN)
  double dilation_base = 2.1;    // per-layer dilation growth (DTCNN)
  int kernel_size = 3;           // odd (DTCNN)
  NormKind norm_kind = NormKind::Layer;  // DNN / DTCNN
  int n_classes = 4;
  double leaky_slope = 0.01;

  void validate() const;
};

// Named tensors making up one model: every weight matrix and bias vector,
// plus non-trainable buffers (batch-norm running statistics). Iteration
// order is fixed at construction, so initialization, optimization, and
// checkpointing are all deterministic.
struct ParameterSet {
  struct Entry {
    std::string name;
    Matrix tensor;
    bool trainable = true;
  };
  std::vector<Entry> entries;

  Matrix& add(const std::string& name, int rows, int cols, bool trainable = true);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool has(const std::string& name) const;
  size_t totalElements() const;
  bool allFinite() const;
  // Same names/shapes/flags, all zeros.
  ParameterSet shapeLike() const;

 private:
  std::map<std::string, size_t> index_;
};

// d_l = max(1, round(b^(l-1))), l = 1..n_layers.
std::vector<int> dilationSchedule(double base, int n_layers);
// Frames influencing one output frame: 1 + (k-1) * sum(dilations), symmetric.
int receptiveField(int kernel_size, const std::vector<int>& dilations);

// Row t concatenates frames t-K..t+K; out-of-range frames replicate the edge.
Matrix buildContextWindows(const Matrix& seq, int context_frames);

// In-place row softmax.
void softmaxRows(Matrix& logits);

// A differentiable map from a feature sequence (T x input_dim) to per-frame
// posteriors (T x n_classes). forward caches what backward needs; backward
// must see the dlogits for the most recent forward call.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Posteriors, row-stochastic. In training mode dropout draws from rng.
  Matrix forward(const Matrix& x, bool training = false, Rng* rng = nullptr);
  // Accumulates parameter gradients given d(loss)/d(logits) for the cached
  // forward pass.
  void backward(const Matrix& dlogits, ParameterSet& grads);

 protected:
  explicit SequenceModel(const ModelConfig& cfg) : cfg_(cfg) {}
  virtual Matrix forwardImpl(const Matrix& x, bool training, Rng* rng) = 0;
  virtual void backwardImpl(const Matrix& dlogits, ParameterSet& grads) = 0;

  ModelConfig cfg_;
  ParameterSet params_;
  int cached_frames_ = -1;
};

// Constructs the architecture named by cfg.arch with uniform(-1/sqrt(fan_in),
// +1/sqrt(fan_in)) initialization drawn deterministically from seed.
std::unique_ptr<SequenceModel> buildModel(const ModelConfig& cfg, uint64_t seed);

}  // namespace cad
