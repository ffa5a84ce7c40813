#include "cad/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cad {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix reverseRows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (int t = 0; t < m.rows(); ++t)
    std::copy(m.row(m.rows() - 1 - t), m.row(m.rows() - 1 - t) + m.cols(), out.row(t));
  return out;
}

// ---------------------------------------------------------------------------
// elementwise pieces

Matrix leakyRelu(const Matrix& x, double slope) {
  Matrix y = x;
  double* d = y.data();
  for (size_t i = 0; i < y.size(); ++i)
    if (d[i] < 0.0) d[i] *= slope;
  return y;
}

// dx from dy given the pre-activation.
Matrix leakyReluBackward(const Matrix& dy, const Matrix& pre, double slope) {
  Matrix dx = dy;
  double* d = dx.data();
  const double* p = pre.data();
  for (size_t i = 0; i < dx.size(); ++i)
    if (p[i] < 0.0) d[i] *= slope;
  return dx;
}

struct DropoutCache {
  Matrix mask;
  bool active = false;
};

void dropoutForward(Matrix& x, double rate, bool training, Rng* rng, DropoutCache& cache) {
  cache.active = training && rate > 0.0;
  if (!cache.active) return;
  if (!rng) throw std::invalid_argument("dropout: training mode needs an rng");
  cache.mask = Matrix(x.rows(), x.cols());
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  double* m = cache.mask.data();
  double* d = x.data();
  for (size_t i = 0; i < x.size(); ++i) {
    m[i] = rng->uniform() < keep ? scale : 0.0;
    d[i] *= m[i];
  }
}

void dropoutBackward(Matrix& dy, const DropoutCache& cache) {
  if (!cache.active) return;
  double* d = dy.data();
  const double* m = cache.mask.data();
  for (size_t i = 0; i < dy.size(); ++i) d[i] *= m[i];
}

// ---------------------------------------------------------------------------
// normalization layers
//
// Layer norm normalizes each frame across channels; instance norm normalizes
// each channel across the frames of the sequence. Batch norm in this engine
// sees one sequence per call, so its training-mode statistics coincide with
// instance norm while running estimates are kept for eval mode.

struct NormCache {
  Matrix xhat;
  std::vector<double> inv_std;    // one per group
  bool per_row = false;           // layer norm
  bool scale_only = false;        // batch norm, eval path
  std::vector<double> eval_scale; // per channel, scale_only path
};

Matrix normForward(const Matrix& x, NormKind kind, const Matrix& gamma, const Matrix& beta,
                   Matrix* running_mean, Matrix* running_var, bool training, NormCache& cache) {
  const int T = x.rows(), C = x.cols();
  Matrix y(T, C);
  cache.per_row = kind == NormKind::Layer;
  cache.scale_only = false;

  if (kind == NormKind::Batch && !training) {
    cache.scale_only = true;
    cache.xhat = Matrix(T, C);
    cache.eval_scale.resize(C);
    for (int c = 0; c < C; ++c)
      cache.eval_scale[c] = 1.0 / std::sqrt((*running_var)(0, c) + kNormEps);
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c) {
        const double xh = (x(t, c) - (*running_mean)(0, c)) * cache.eval_scale[c];
        cache.xhat(t, c) = xh;
        y(t, c) = gamma(0, c) * xh + beta(0, c);
      }
    return y;
  }

  cache.xhat = Matrix(T, C);
  if (cache.per_row) {
    cache.inv_std.resize(T);
    for (int t = 0; t < T; ++t) {
      const double* row = x.row(t);
      double mean = 0.0;
      for (int c = 0; c < C; ++c) mean += row[c];
      mean /= C;
      double var = 0.0;
      for (int c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
      var /= C;
      const double inv = 1.0 / std::sqrt(var + kNormEps);
      cache.inv_std[t] = inv;
      for (int c = 0; c < C; ++c) {
        const double xh = (row[c] - mean) * inv;
        cache.xhat(t, c) = xh;
        y(t, c) = gamma(0, c) * xh + beta(0, c);
      }
    }
  } else {
    cache.inv_std.resize(C);
    for (int c = 0; c < C; ++c) {
      double mean = 0.0;
      for (int t = 0; t < T; ++t) mean += x(t, c);
      mean /= T;
      double var = 0.0;
      for (int t = 0; t < T; ++t) var += (x(t, c) - mean) * (x(t, c) - mean);
      var /= T;
      const double inv = 1.0 / std::sqrt(var + kNormEps);
      cache.inv_std[c] = inv;
      for (int t = 0; t < T; ++t) {
        const double xh = (x(t, c) - mean) * inv;
        cache.xhat(t, c) = xh;
        y(t, c) = gamma(0, c) * xh + beta(0, c);
      }
      if (kind == NormKind::Batch && training && running_mean) {
        const double unbiased = T > 1 ? var * T / (T - 1) : var;
        (*running_mean)(0, c) = (1.0 - kBatchNormMomentum) * (*running_mean)(0, c) + kBatchNormMomentum * mean;
        (*running_var)(0, c) = (1.0 - kBatchNormMomentum) * (*running_var)(0, c) + kBatchNormMomentum * unbiased;
      }
    }
  }
  return y;
}

Matrix normBackward(const Matrix& dy, const Matrix& gamma, const NormCache& cache, Matrix& dgamma,
                    Matrix& dbeta) {
  const int T = dy.rows(), C = dy.cols();
  Matrix dx(T, C);

  for (int t = 0; t < T; ++t)
    for (int c = 0; c < C; ++c) {
      dgamma(0, c) += dy(t, c) * cache.xhat(t, c);
      dbeta(0, c) += dy(t, c);
    }

  if (cache.scale_only) {
    for (int t = 0; t < T; ++t)
      for (int c = 0; c < C; ++c) dx(t, c) = dy(t, c) * gamma(0, c) * cache.eval_scale[c];
    return dx;
  }

  if (cache.per_row) {
    for (int t = 0; t < T; ++t) {
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int c = 0; c < C; ++c) {
        const double dxh = dy(t, c) * gamma(0, c);
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * cache.xhat(t, c);
      }
      const double inv = cache.inv_std[t];
      for (int c = 0; c < C; ++c) {
        const double dxh = dy(t, c) * gamma(0, c);
        dx(t, c) = inv * (dxh - sum_dxhat / C - cache.xhat(t, c) * sum_dxhat_xhat / C);
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int t = 0; t < T; ++t) {
        const double dxh = dy(t, c) * gamma(0, c);
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * cache.xhat(t, c);
      }
      const double inv = cache.inv_std[c];
      for (int t = 0; t < T; ++t) {
        const double dxh = dy(t, c) * gamma(0, c);
        dx(t, c) = inv * (dxh - sum_dxhat / T - cache.xhat(t, c) * sum_dxhat_xhat / T);
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// shared classifier head: framewise two-layer MLP, leaky ReLU hidden, softmax

struct HeadCache {
  Matrix input, pre, act;
};

Matrix headForward(const ParameterSet& p, const Matrix& h, double slope, HeadCache& cache) {
  cache.input = h;
  cache.pre = matmulTransB(h, p.at("head.W1"));
  addRowVector(cache.pre, p.at("head.b1"));
  cache.act = leakyRelu(cache.pre, slope);
  Matrix logits = matmulTransB(cache.act, p.at("head.W2"));
  addRowVector(logits, p.at("head.b2"));
  softmaxRows(logits);
  return logits;
}

Matrix headBackward(const ParameterSet& p, const Matrix& dlogits, double slope, const HeadCache& cache,
                    ParameterSet& grads) {
  axpy(grads.at("head.W2"), matmulTransA(dlogits, cache.act));
  axpy(grads.at("head.b2"), colSums(dlogits));
  Matrix dact = matmul(dlogits, p.at("head.W2"));
  Matrix dpre = leakyReluBackward(dact, cache.pre, slope);
  axpy(grads.at("head.W1"), matmulTransA(dpre, cache.input));
  axpy(grads.at("head.b1"), colSums(dpre));
  return matmul(dpre, p.at("head.W1"));
}

// ---------------------------------------------------------------------------
// GRU cell over a whole sequence
//
//   r_t = sigma(W_ir x_t + W_hr h_{t-1} + b_r)
//   z_t = sigma(W_iz x_t + W_hz h_{t-1} + b_z)
//   n_t = tanh(W_in x_t + b_in + r_t o (W_hn h_{t-1} + b_hn))
//   h_t = (1 - z_t) o n_t + z_t o h_{t-1},   h_0 = 0

struct GruCache {
  Matrix x;                      // cell input
  Matrix r, z, n, hg, h, hprev;  // per-step activations; hg = W_hn h_{t-1} + b_hn
};

Matrix gruCellForward(const ParameterSet& p, const std::string& prefix, const Matrix& x, GruCache& c) {
  const Matrix& W_ir = p.at(prefix + "W_ir");
  const Matrix& W_iz = p.at(prefix + "W_iz");
  const Matrix& W_in = p.at(prefix + "W_in");
  const Matrix& W_hr = p.at(prefix + "W_hr");
  const Matrix& W_hz = p.at(prefix + "W_hz");
  const Matrix& W_hn = p.at(prefix + "W_hn");
  const Matrix& b_hn = p.at(prefix + "b_hn");
  const int T = x.rows(), H = W_ir.rows();
  if (x.cols() != W_ir.cols())
    throw std::invalid_argument("gru cell " + prefix + ": input dim " + std::to_string(x.cols()) +
                                " != weight dim " + std::to_string(W_ir.cols()));

  Matrix xr = matmulTransB(x, W_ir);
  addRowVector(xr, p.at(prefix + "b_r"));
  Matrix xz = matmulTransB(x, W_iz);
  addRowVector(xz, p.at(prefix + "b_z"));
  Matrix xn = matmulTransB(x, W_in);
  addRowVector(xn, p.at(prefix + "b_in"));

  c.x = x;
  c.r = Matrix(T, H);
  c.z = Matrix(T, H);
  c.n = Matrix(T, H);
  c.hg = Matrix(T, H);
  c.h = Matrix(T, H);
  c.hprev = Matrix(T, H);

  std::vector<double> hp(H, 0.0);
  for (int t = 0; t < T; ++t) {
    double* hprev_row = c.hprev.row(t);
    std::copy(hp.begin(), hp.end(), hprev_row);
    for (int j = 0; j < H; ++j) {
      const double r = sigmoid(xr(t, j) + dot(W_hr.row(j), hp.data(), H));
      const double z = sigmoid(xz(t, j) + dot(W_hz.row(j), hp.data(), H));
      const double hg = dot(W_hn.row(j), hp.data(), H) + b_hn(0, j);
      const double n = std::tanh(xn(t, j) + r * hg);
      c.r(t, j) = r;
      c.z(t, j) = z;
      c.hg(t, j) = hg;
      c.n(t, j) = n;
      c.h(t, j) = (1.0 - z) * n + z * hp[j];
    }
    std::copy(c.h.row(t), c.h.row(t) + H, hp.begin());
  }
  return c.h;
}

// dh_out is d(loss)/d(h_t) from downstream; returns d(loss)/d(x).
Matrix gruCellBackward(const ParameterSet& p, const std::string& prefix, const Matrix& dh_out,
                       const GruCache& c, ParameterSet& grads) {
  const Matrix& W_hr = p.at(prefix + "W_hr");
  const Matrix& W_hz = p.at(prefix + "W_hz");
  const Matrix& W_hn = p.at(prefix + "W_hn");
  const int T = c.h.rows(), H = c.h.cols();

  Matrix dRpre(T, H), dZpre(T, H), dNpre(T, H), dHg(T, H);
  std::vector<double> carry(H, 0.0), next_carry(H);

  for (int t = T - 1; t >= 0; --t) {
    std::fill(next_carry.begin(), next_carry.end(), 0.0);
    for (int j = 0; j < H; ++j) {
      const double dht = dh_out(t, j) + carry[j];
      const double r = c.r(t, j), z = c.z(t, j), n = c.n(t, j);
      const double hp = c.hprev(t, j), hg = c.hg(t, j);
      const double dz = dht * (hp - n);
      const double dn = dht * (1.0 - z);
      next_carry[j] += dht * z;
      const double dnpre = dn * (1.0 - n * n);
      const double dr = dnpre * hg;
      const double dhg = dnpre * r;
      dNpre(t, j) = dnpre;
      dHg(t, j) = dhg;
      dRpre(t, j) = dr * r * (1.0 - r);
      dZpre(t, j) = dz * z * (1.0 - z);
    }
    for (int j = 0; j < H; ++j) {
      const double vr = dRpre(t, j), vz = dZpre(t, j), vg = dHg(t, j);
      const double* wr = W_hr.row(j);
      const double* wz = W_hz.row(j);
      const double* wn = W_hn.row(j);
      for (int i = 0; i < H; ++i) next_carry[i] += vr * wr[i] + vz * wz[i] + vg * wn[i];
    }
    carry.swap(next_carry);
  }

  axpy(grads.at(prefix + "W_ir"), matmulTransA(dRpre, c.x));
  axpy(grads.at(prefix + "W_iz"), matmulTransA(dZpre, c.x));
  axpy(grads.at(prefix + "W_in"), matmulTransA(dNpre, c.x));
  axpy(grads.at(prefix + "W_hr"), matmulTransA(dRpre, c.hprev));
  axpy(grads.at(prefix + "W_hz"), matmulTransA(dZpre, c.hprev));
  axpy(grads.at(prefix + "W_hn"), matmulTransA(dHg, c.hprev));
  axpy(grads.at(prefix + "b_r"), colSums(dRpre));
  axpy(grads.at(prefix + "b_z"), colSums(dZpre));
  axpy(grads.at(prefix + "b_in"), colSums(dNpre));
  axpy(grads.at(prefix + "b_hn"), colSums(dHg));

  Matrix dx = matmul(dRpre, p.at(prefix + "W_ir"));
  axpy(dx, matmul(dZpre, p.at(prefix + "W_iz")));
  axpy(dx, matmul(dNpre, p.at(prefix + "W_in")));
  return dx;
}

// ---------------------------------------------------------------------------
// deterministic initialization

struct Initializer {
  ParameterSet& p;
  Rng rng;

  Initializer(ParameterSet& params, uint64_t seed) : p(params), rng(seed) {}

  void tensor(const std::string& name, int rows, int cols, int fan_in) {
    Matrix& m = p.add(name, rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    double* d = m.data();
    for (size_t i = 0; i < m.size(); ++i) d[i] = rng.uniform(-bound, bound);
  }

  void norm(const std::string& prefix, int dim, bool with_running) {
    p.add(prefix + ".gamma", 1, dim).fill(1.0);
    p.add(prefix + ".beta", 1, dim);
    if (with_running) {
      p.add(prefix + ".running_mean", 1, dim, /*trainable=*/false);
      p.add(prefix + ".running_var", 1, dim, /*trainable=*/false).fill(1.0);
    }
  }

  void gruCell(const std::string& prefix, int in_dim, int hidden) {
    tensor(prefix + "W_ir", hidden, in_dim, in_dim);
    tensor(prefix + "W_iz", hidden, in_dim, in_dim);
    tensor(prefix + "W_in", hidden, in_dim, in_dim);
    tensor(prefix + "W_hr", hidden, hidden, hidden);
    tensor(prefix + "W_hz", hidden, hidden, hidden);
    tensor(prefix + "W_hn", hidden, hidden, hidden);
    tensor(prefix + "b_r", 1, hidden, hidden);
    tensor(prefix + "b_z", 1, hidden, hidden);
    tensor(prefix + "b_in", 1, hidden, hidden);
    tensor(prefix + "b_hn", 1, hidden, hidden);
  }

  void head(int in_dim, int mid, int n_classes) {
    tensor("head.W1", mid, in_dim, in_dim);
    tensor("head.b1", 1, mid, in_dim);
    tensor("head.W2", n_classes, mid, mid);
    tensor("head.b2", 1, n_classes, mid);
  }
};

}  // namespace

// ---------------------------------------------------------------------------

Arch parseArch(const std::string& name) {
  if (name == "dnn") return Arch::Dnn;
  if (name == "dtcnn") return Arch::Dtcnn;
  if (name == "gru") return Arch::Gru;
  if (name == "bigru") return Arch::BiGru;
  throw std::invalid_argument("unknown architecture '" + name + "' (want dnn|dtcnn|gru|bigru)");
}

const std::string& archName(Arch a) {
  static const std::string names[] = {"dnn", "dtcnn", "gru", "bigru"};
  return names[static_cast<int>(a)];
}

NormKind parseNormKind(const std::string& name) {
  if (name == "layer") return NormKind::Layer;
  if (name == "instance") return NormKind::Instance;
  if (name == "batch") return NormKind::Batch;
  throw std::invalid_argument("unknown norm kind '" + name + "' (want layer|instance|batch)");
}

const std::string& normKindName(NormKind k) {
  static const std::string names[] = {"layer", "instance", "batch"};
  return names[static_cast<int>(k)];
}

void ModelConfig::validate() const {
  if (input_dim <= 0) throw std::invalid_argument("ModelConfig: input_dim must be positive");
  if (hidden_size <= 0) throw std::invalid_argument("ModelConfig: hidden_size must be positive");
  if (n_layers < 1) throw std::invalid_argument("ModelConfig: need at least one layer");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("ModelConfig: dropout in [0,1)");
  if (context_frames < 0) throw std::invalid_argument("ModelConfig: context_frames must be >= 0");
  if (dilation_base < 1.0) throw std::invalid_argument("ModelConfig: dilation_base must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("ModelConfig: kernel_size must be odd so convolutions stay centered");
  if (n_classes < 2) throw std::invalid_argument("ModelConfig: n_classes must be >= 2");
  if (leaky_slope < 0.0) throw std::invalid_argument("ModelConfig: leaky_slope must be >= 0");
}

Matrix& ParameterSet::add(const std::string& name, int rows, int cols, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("ParameterSet: duplicate tensor '" + name + "'");
  index_[name] = entries.size();
  entries.push_back({name, Matrix(rows, cols), trainable});
  return entries.back().tensor;
}

Matrix& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParameterSet: no tensor '" + name + "'");
  return entries[it->second].tensor;
}

const Matrix& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParameterSet: no tensor '" + name + "'");
  return entries[it->second].tensor;
}

bool ParameterSet::has(const std::string& name) const { return index_.count(name) > 0; }

size_t ParameterSet::totalElements() const {
  size_t n = 0;
  for (const Entry& e : entries) n += e.tensor.size();
  return n;
}

bool ParameterSet::allFinite() const {
  for (const Entry& e : entries)
    if (!e.tensor.allFinite()) return false;
  return true;
}

ParameterSet ParameterSet::shapeLike() const {
  ParameterSet out;
  for (const Entry& e : entries) out.add(e.name, e.tensor.rows(), e.tensor.cols(), e.trainable);
  return out;
}

std::vector<int> dilationSchedule(double base, int n_layers) {
  if (base < 1.0 || n_layers < 1) throw std::invalid_argument("dilationSchedule: base >= 1 and layers >= 1");
  std::vector<int> d(n_layers);
  for (int l = 0; l < n_layers; ++l)
    d[l] = std::max(1, static_cast<int>(std::llround(std::pow(base, l))));
  return d;
}

int receptiveField(int kernel_size, const std::vector<int>& dilations) {
  int sum = 0;
  for (int d : dilations) sum += d;
  return 1 + (kernel_size - 1) * sum;
}

Matrix buildContextWindows(const Matrix& seq, int context_frames) {
  const int K = context_frames;
  if (K < 0) throw std::invalid_argument("buildContextWindows: negative context");
  if (K == 0) return seq;
  const int T = seq.rows(), D = seq.cols();
  Matrix out(T, (2 * K + 1) * D);
  for (int t = 0; t < T; ++t) {
    double* row = out.row(t);
    for (int k = -K; k <= K; ++k) {
      const int s = std::clamp(t + k, 0, T - 1);
      std::copy(seq.row(s), seq.row(s) + D, row + (k + K) * D);
    }
  }
  return out;
}

void softmaxRows(Matrix& logits) {
  for (int t = 0; t < logits.rows(); ++t) {
    double* row = logits.row(t);
    double mx = row[0];
    for (int c = 1; c < logits.cols(); ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < logits.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (int c = 0; c < logits.cols(); ++c) row[c] /= sum;
  }
}

Matrix SequenceModel::forward(const Matrix& x, bool training, Rng* rng) {
  if (x.cols() != cfg_.input_dim)
    throw std::invalid_argument(archName(cfg_.arch) + " forward: input has " + std::to_string(x.cols()) +
                                " dims, model expects " + std::to_string(cfg_.input_dim));
  if (x.rows() == 0) throw std::invalid_argument("forward: empty sequence");
  cached_frames_ = x.rows();
  return forwardImpl(x, training, rng);
}

void SequenceModel::backward(const Matrix& dlogits, ParameterSet& grads) {
  if (cached_frames_ < 0) throw std::logic_error("backward called before forward");
  if (dlogits.rows() != cached_frames_ || dlogits.cols() != cfg_.n_classes)
    throw std::invalid_argument("backward: dlogits shape does not match the cached forward pass");
  backwardImpl(dlogits, grads);
}

// ---------------------------------------------------------------------------

namespace {

class DnnModel : public SequenceModel {
 public:
  DnnModel(const ModelConfig& cfg, uint64_t seed) : SequenceModel(cfg) {
    Initializer init(params_, seed);
    const int window_dim = (2 * cfg.context_frames + 1) * cfg.input_dim;
    int in = window_dim;
    for (int i = 0; i < cfg.n_layers; ++i) {
      const std::string prefix = "dnn.layer" + std::to_string(i);
      init.tensor(prefix + ".W", cfg.hidden_size, in, in);
      init.tensor(prefix + ".b", 1, cfg.hidden_size, in);
      init.norm(prefix + ".norm", cfg.hidden_size, cfg.norm_kind == NormKind::Batch);
      in = cfg.hidden_size;
    }
    init.head(cfg.hidden_size, cfg.hidden_size, cfg.n_classes);
  }

 private:
  struct LayerCache {
    Matrix input, pre;
    NormCache norm;
    DropoutCache drop;
  };

  Matrix forwardImpl(const Matrix& x, bool training, Rng* rng) override {
    layers_.assign(cfg_.n_layers, {});
    input_rows_ = x.rows();

    Matrix cur = x;
    dropoutForward(cur, cfg_.dropout_rate, training, rng, input_drop_);
    cur = buildContextWindows(cur, cfg_.context_frames);

    for (int i = 0; i < cfg_.n_layers; ++i) {
      const std::string prefix = "dnn.layer" + std::to_string(i);
      LayerCache& lc = layers_[i];
      lc.input = std::move(cur);
      lc.pre = matmulTransB(lc.input, params_.at(prefix + ".W"));
      addRowVector(lc.pre, params_.at(prefix + ".b"));
      Matrix act = leakyRelu(lc.pre, cfg_.leaky_slope);
      Matrix* rm = cfg_.norm_kind == NormKind::Batch ? &params_.at(prefix + ".norm.running_mean") : nullptr;
      Matrix* rv = cfg_.norm_kind == NormKind::Batch ? &params_.at(prefix + ".norm.running_var") : nullptr;
      cur = normForward(act, cfg_.norm_kind, params_.at(prefix + ".norm.gamma"),
                        params_.at(prefix + ".norm.beta"), rm, rv, training, lc.norm);
      dropoutForward(cur, cfg_.dropout_rate, training, rng, lc.drop);
    }
    return headForward(params_, cur, cfg_.leaky_slope, head_);
  }

  void backwardImpl(const Matrix& dlogits, ParameterSet& grads) override {
    Matrix d = headBackward(params_, dlogits, cfg_.leaky_slope, head_, grads);
    for (int i = cfg_.n_layers - 1; i >= 0; --i) {
      const std::string prefix = "dnn.layer" + std::to_string(i);
      LayerCache& lc = layers_[i];
      dropoutBackward(d, lc.drop);
      d = normBackward(d, params_.at(prefix + ".norm.gamma"), lc.norm, grads.at(prefix + ".norm.gamma"),
                       grads.at(prefix + ".norm.beta"));
      d = leakyReluBackward(d, lc.pre, cfg_.leaky_slope);
      axpy(grads.at(prefix + ".W"), matmulTransA(d, lc.input));
      axpy(grads.at(prefix + ".b"), colSums(d));
      d = matmul(d, params_.at(prefix + ".W"));
    }
    // adjoint of the edge-replicated context windows
    const int K = cfg_.context_frames;
    if (K > 0) {
      const int D = cfg_.input_dim;
      Matrix dx(input_rows_, D);
      for (int t = 0; t < input_rows_; ++t) {
        const double* row = d.row(t);
        for (int k = -K; k <= K; ++k) {
          const int s = std::clamp(t + k, 0, input_rows_ - 1);
          double* target = dx.row(s);
          const double* src = row + (k + K) * D;
          for (int c = 0; c < D; ++c) target[c] += src[c];
        }
      }
      d = std::move(dx);
    }
    dropoutBackward(d, input_drop_);
  }

  DropoutCache input_drop_;
  std::vector<LayerCache> layers_;
  HeadCache head_;
  int input_rows_ = 0;
};

class DtcnnModel : public SequenceModel {
 public:
  DtcnnModel(const ModelConfig& cfg, uint64_t seed) : SequenceModel(cfg), dilations_(dilationSchedule(cfg.dilation_base, cfg.n_layers)) {
    Initializer init(params_, seed);
    const bool running = cfg.norm_kind == NormKind::Batch;
    init.norm("dtcnn.input_norm", cfg.input_dim, running);
    int in = cfg.input_dim;
    for (int i = 0; i < cfg.n_layers; ++i) {
      const std::string prefix = "dtcnn.layer" + std::to_string(i);
      init.tensor(prefix + ".W", cfg.hidden_size, cfg.kernel_size * in, cfg.kernel_size * in);
      init.tensor(prefix + ".b", 1, cfg.hidden_size, cfg.kernel_size * in);
      init.norm(prefix + ".norm", cfg.hidden_size, running);
      in = cfg.hidden_size;
    }
    init.head(cfg.hidden_size, cfg.hidden_size, cfg.n_classes);
  }

  const std::vector<int>& dilations() const { return dilations_; }

 private:
  struct LayerCache {
    Matrix input, pre;
    NormCache norm;
  };

  // same-length non-causal dilated convolution with zero padding
  Matrix convForward(const Matrix& x, const Matrix& W, const Matrix& b, int dilation) const {
    const int T = x.rows(), Cin = x.cols(), Cout = W.rows();
    const int k = cfg_.kernel_size, half = (k - 1) / 2;
    Matrix y(T, Cout);
    for (int t = 0; t < T; ++t) {
      double* yr = y.row(t);
      for (int o = 0; o < Cout; ++o) yr[o] = b(0, o);
      for (int j = 0; j < k; ++j) {
        const int s = t + (j - half) * dilation;
        if (s < 0 || s >= T) continue;
        const double* xr = x.row(s);
        for (int o = 0; o < Cout; ++o) yr[o] += dot(W.row(o) + j * Cin, xr, Cin);
      }
    }
    return y;
  }

  Matrix convBackward(const Matrix& dy, const Matrix& x, const Matrix& W, int dilation, Matrix& dW,
                      Matrix& db) const {
    const int T = x.rows(), Cin = x.cols(), Cout = W.rows();
    const int k = cfg_.kernel_size, half = (k - 1) / 2;
    Matrix dx(T, Cin);
    for (int t = 0; t < T; ++t) {
      const double* dyr = dy.row(t);
      for (int o = 0; o < Cout; ++o) db(0, o) += dyr[o];
      for (int j = 0; j < k; ++j) {
        const int s = t + (j - half) * dilation;
        if (s < 0 || s >= T) continue;
        const double* xr = x.row(s);
        double* dxr = dx.row(s);
        for (int o = 0; o < Cout; ++o) {
          const double g = dyr[o];
          if (g == 0.0) continue;
          double* dWr = dW.row(o) + j * Cin;
          const double* Wr = W.row(o) + j * Cin;
          for (int c = 0; c < Cin; ++c) {
            dWr[c] += g * xr[c];
            dxr[c] += g * Wr[c];
          }
        }
      }
    }
    return dx;
  }

  Matrix forwardImpl(const Matrix& x, bool training, Rng* rng) override {
    layers_.assign(cfg_.n_layers, {});
    const bool batch = cfg_.norm_kind == NormKind::Batch;

    Matrix* rm = batch ? &params_.at("dtcnn.input_norm.running_mean") : nullptr;
    Matrix* rv = batch ? &params_.at("dtcnn.input_norm.running_var") : nullptr;
    Matrix cur = normForward(x, cfg_.norm_kind, params_.at("dtcnn.input_norm.gamma"),
                             params_.at("dtcnn.input_norm.beta"), rm, rv, training, input_norm_);
    dropoutForward(cur, cfg_.dropout_rate, training, rng, input_drop_);

    for (int i = 0; i < cfg_.n_layers; ++i) {
      const std::string prefix = "dtcnn.layer" + std::to_string(i);
      LayerCache& lc = layers_[i];
      lc.input = std::move(cur);
      lc.pre = convForward(lc.input, params_.at(prefix + ".W"), params_.at(prefix + ".b"), dilations_[i]);
      Matrix act = leakyRelu(lc.pre, cfg_.leaky_slope);
      Matrix* lrm = batch ? &params_.at(prefix + ".norm.running_mean") : nullptr;
      Matrix* lrv = batch ? &params_.at(prefix + ".norm.running_var") : nullptr;
      cur = normForward(act, cfg_.norm_kind, params_.at(prefix + ".norm.gamma"),
                        params_.at(prefix + ".norm.beta"), lrm, lrv, training, lc.norm);
    }
    dropoutForward(cur, cfg_.dropout_rate, training, rng, head_drop_);
    return headForward(params_, cur, cfg_.leaky_slope, head_);
  }

  void backwardImpl(const Matrix& dlogits, ParameterSet& grads) override {
    Matrix d = headBackward(params_, dlogits, cfg_.leaky_slope, head_, grads);
    dropoutBackward(d, head_drop_);
    for (int i = cfg_.n_layers - 1; i >= 0; --i) {
      const std::string prefix = "dtcnn.layer" + std::to_string(i);
      LayerCache& lc = layers_[i];
      d = normBackward(d, params_.at(prefix + ".norm.gamma"), lc.norm, grads.at(prefix + ".norm.gamma"),
                       grads.at(prefix + ".norm.beta"));
      d = leakyReluBackward(d, lc.pre, cfg_.leaky_slope);
      d = convBackward(d, lc.input, params_.at(prefix + ".W"), dilations_[i], grads.at(prefix + ".W"),
                       grads.at(prefix + ".b"));
    }
    dropoutBackward(d, input_drop_);
    normBackward(d, params_.at("dtcnn.input_norm.gamma"), input_norm_, grads.at("dtcnn.input_norm.gamma"),
                 grads.at("dtcnn.input_norm.beta"));
  }

  std::vector<int> dilations_;
  NormCache input_norm_;
  DropoutCache input_drop_, head_drop_;
  std::vector<LayerCache> layers_;
  HeadCache head_;
};

class GruModel : public SequenceModel {
 public:
  GruModel(const ModelConfig& cfg, uint64_t seed) : SequenceModel(cfg) {
    Initializer init(params_, seed);
    int in = cfg.input_dim;
    for (int i = 0; i < cfg.n_layers; ++i) {
      init.gruCell("gru.layer" + std::to_string(i) + ".", in, cfg.hidden_size);
      in = cfg.hidden_size;
    }
    init.head(cfg.hidden_size, cfg.hidden_size, cfg.n_classes);
  }

 private:
  Matrix forwardImpl(const Matrix& x, bool training, Rng* rng) override {
    cells_.assign(cfg_.n_layers, {});
    drops_.assign(cfg_.n_layers, {});
    Matrix cur = x;
    dropoutForward(cur, cfg_.dropout_rate, training, rng, input_drop_);
    for (int i = 0; i < cfg_.n_layers; ++i) {
      cur = gruCellForward(params_, "gru.layer" + std::to_string(i) + ".", cur, cells_[i]);
      dropoutForward(cur, cfg_.dropout_rate, training, rng, drops_[i]);
    }
    return headForward(params_, cur, cfg_.leaky_slope, head_);
  }

  void backwardImpl(const Matrix& dlogits, ParameterSet& grads) override {
    Matrix d = headBackward(params_, dlogits, cfg_.leaky_slope, head_, grads);
    for (int i = cfg_.n_layers - 1; i >= 0; --i) {
      dropoutBackward(d, drops_[i]);
      d = gruCellBackward(params_, "gru.layer" + std::to_string(i) + ".", d, cells_[i], grads);
    }
    dropoutBackward(d, input_drop_);
  }

  DropoutCache input_drop_;
  std::vector<GruCache> cells_;
  std::vector<DropoutCache> drops_;
  HeadCache head_;
};

class BiGruModel : public SequenceModel {
 public:
  BiGruModel(const ModelConfig& cfg, uint64_t seed) : SequenceModel(cfg) {
    Initializer init(params_, seed);
    int in = cfg.input_dim;
    for (int i = 0; i < cfg.n_layers; ++i) {
      const std::string prefix = "bigru.layer" + std::to_string(i) + ".";
      init.gruCell(prefix + "fwd.", in, cfg.hidden_size);
      init.gruCell(prefix + "bwd.", in, cfg.hidden_size);
      init.tensor(prefix + "W_f", cfg.hidden_size, cfg.hidden_size, cfg.hidden_size);
      init.tensor(prefix + "W_b", cfg.hidden_size, cfg.hidden_size, cfg.hidden_size);
      init.tensor(prefix + "b", 1, cfg.hidden_size, cfg.hidden_size);
      in = cfg.hidden_size;
    }
    init.head(cfg.hidden_size, cfg.hidden_size, cfg.n_classes);
  }

 private:
  struct LayerCache {
    GruCache fwd, bwd;     // bwd cell runs over the reversed sequence
    Matrix h_fwd, h_bwd;   // h_bwd in original time order
    DropoutCache drop;
  };

  Matrix forwardImpl(const Matrix& x, bool training, Rng* rng) override {
    layers_.assign(cfg_.n_layers, {});
    Matrix cur = x;
    dropoutForward(cur, cfg_.dropout_rate, training, rng, input_drop_);
    for (int i = 0; i < cfg_.n_layers; ++i) {
      const std::string prefix = "bigru.layer" + std::to_string(i) + ".";
      LayerCache& lc = layers_[i];
      lc.h_fwd = gruCellForward(params_, prefix + "fwd.", cur, lc.fwd);
      lc.h_bwd = reverseRows(gruCellForward(params_, prefix + "bwd.", reverseRows(cur), lc.bwd));
      cur = matmulTransB(lc.h_fwd, params_.at(prefix + "W_f"));
      axpy(cur, matmulTransB(lc.h_bwd, params_.at(prefix + "W_b")));
      addRowVector(cur, params_.at(prefix + "b"));
      dropoutForward(cur, cfg_.dropout_rate, training, rng, lc.drop);
    }
    return headForward(params_, cur, cfg_.leaky_slope, head_);
  }

  void backwardImpl(const Matrix& dlogits, ParameterSet& grads) override {
    Matrix d = headBackward(params_, dlogits, cfg_.leaky_slope, head_, grads);
    for (int i = cfg_.n_layers - 1; i >= 0; --i) {
      const std::string prefix = "bigru.layer" + std::to_string(i) + ".";
      LayerCache& lc = layers_[i];
      dropoutBackward(d, lc.drop);
      axpy(grads.at(prefix + "W_f"), matmulTransA(d, lc.h_fwd));
      axpy(grads.at(prefix + "W_b"), matmulTransA(d, lc.h_bwd));
      axpy(grads.at(prefix + "b"), colSums(d));
      Matrix dh_fwd = matmul(d, params_.at(prefix + "W_f"));
      Matrix dh_bwd = matmul(d, params_.at(prefix + "W_b"));
      Matrix dx = gruCellBackward(params_, prefix + "fwd.", dh_fwd, lc.fwd, grads);
      axpy(dx, reverseRows(gruCellBackward(params_, prefix + "bwd.", reverseRows(dh_bwd), lc.bwd, grads)));
      d = std::move(dx);
    }
    dropoutBackward(d, input_drop_);
  }

  DropoutCache input_drop_;
  std::vector<LayerCache> layers_;
  HeadCache head_;
};

}  // namespace

std::unique_ptr<SequenceModel> buildModel(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  switch (cfg.arch) {
    case Arch::Dnn:
      return std::make_unique<DnnModel>(cfg, seed);
    case Arch::Dtcnn:
      return std::make_unique<DtcnnModel>(cfg, seed);
    case Arch::Gru:
      return std::make_unique<GruModel>(cfg, seed);
    case Arch::BiGru:
      return std::make_unique<BiGruModel>(cfg, seed);
  }
  throw std::logic_error("buildModel: unhandled architecture");
}

}  // namespace cad
