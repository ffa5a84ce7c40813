#include "cad/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cad {

std::vector<Chunk> chunkSession(const SessionData& session, int chunk_len) {
  if (chunk_len <= 0) throw std::invalid_argument("chunkSession: chunk_len must be positive");
  const int T = session.features.rows();
  if (T == 0) throw std::invalid_argument("chunkSession: session '" + session.id + "' is empty");
  if (static_cast<int>(session.labels.size()) != T)
    throw std::invalid_argument("chunkSession: label/feature length mismatch in '" + session.id + "'");

  std::vector<Chunk> chunks;
  for (int begin = 0; begin < T; begin += chunk_len) {
    const int end = std::min(T, begin + chunk_len);
    Chunk c;
    c.features = session.features.rowSlice(begin, end);
    c.labels.assign(session.labels.begin() + begin, session.labels.begin() + end);
    c.session_id = session.id;
    c.offset = begin;
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<Chunk> chunkSessions(const std::vector<SessionData>& sessions, int chunk_len) {
  std::vector<Chunk> all;
  for (const SessionData& s : sessions) {
    auto cs = chunkSession(s, chunk_len);
    for (auto& c : cs) all.push_back(std::move(c));
  }
  return all;
}

std::vector<std::vector<int>> sampleEpochBatches(int n_chunks, int batch_size, Rng& rng) {
  if (batch_size < 1 || batch_size > n_chunks)
    throw std::invalid_argument("sampleEpochBatches: batch_size " + std::to_string(batch_size) +
                                " outside [1, " + std::to_string(n_chunks) + "]");
  std::vector<int> order(n_chunks);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int i = 0; i < n_chunks; i += batch_size) {
    const int end = std::min(n_chunks, i + batch_size);
    batches.emplace_back(order.begin() + i, order.begin() + end);
  }
  return batches;
}

void scheduleUpdate(TrainState& state, double dev_metric) {
  state.epoch += 1;
  if (!state.has_best || dev_metric < state.best_dev) {
    state.best_dev = dev_metric;
    state.has_best = true;
    state.improved_last = true;
    state.epochs_since_improve = 0;
    state.epochs_since_halve = 0;
  } else {
    state.improved_last = false;
    state.epochs_since_improve += 1;
    state.epochs_since_halve += 1;
    if (state.epochs_since_halve >= state.lr_halve_window) {
      state.lr *= 0.5;
      state.epochs_since_halve = 0;
    }
    if (state.epochs_since_improve >= state.patience) state.stop = true;
  }
  if (state.epoch >= state.max_epochs) state.stop = true;
}

int TrainConfig::effectiveChunkLen() const {
  if (chunk_len > 0) return chunk_len;
  const Arch a = parseArch(arch);
  return (a == Arch::Gru || a == Arch::BiGru) ? kRnnChunkLen : kDefaultChunkLen;
}

void TrainConfig::validate() const {
  parseArch(arch);
  if (scheme != 4 && scheme != 5 && scheme != 9)
    throw std::invalid_argument("TrainConfig: scheme must be 4, 5, or 9");
  if (features.empty()) throw std::invalid_argument("TrainConfig: at least one feature stream");
  if (loss_beta < 0.0 || loss_beta >= 1.0) throw std::invalid_argument("TrainConfig: loss beta in [0,1)");
  if (loss_gamma < 0.0) throw std::invalid_argument("TrainConfig: loss gamma >= 0");
  optim.validate();
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
  if (max_epochs < 1 || max_epochs > kMaxEpochsCap)
    throw std::invalid_argument("TrainConfig: max_epochs in [1, " + std::to_string(kMaxEpochsCap) + "]");
  if (patience < 1) throw std::invalid_argument("TrainConfig: patience >= 1");
  if (lr_halve_window < 1) throw std::invalid_argument("TrainConfig: lr_halve_window >= 1");
  if (accumulation < 1) throw std::invalid_argument("TrainConfig: accumulation >= 1");
}

TrainConfig trainConfigFromJson(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.arch = j.value("arch", cfg.arch);
  cfg.scheme = j.value("scheme", cfg.scheme);
  if (j.contains("features")) cfg.features = j.at("features").get<std::vector<std::string>>();
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.model.hidden_size = m.value("hidden_size", cfg.model.hidden_size);
    cfg.model.n_layers = m.value("n_layers", cfg.model.n_layers);
    cfg.model.dropout_rate = m.value("dropout_rate", cfg.model.dropout_rate);
    cfg.model.context_frames = m.value("context_frames", cfg.model.context_frames);
    cfg.model.dilation_base = m.value("dilation_base", cfg.model.dilation_base);
    cfg.model.kernel_size = m.value("kernel_size", cfg.model.kernel_size);
    if (m.contains("norm_kind")) cfg.model.norm_kind = parseNormKind(m.at("norm_kind").get<std::string>());
    cfg.model.leaky_slope = m.value("leaky_slope", cfg.model.leaky_slope);
  }
  if (j.contains("loss")) {
    cfg.loss_beta = j.at("loss").value("beta", cfg.loss_beta);
    cfg.loss_gamma = j.at("loss").value("gamma", cfg.loss_gamma);
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    cfg.optim.lr = o.value("lr", cfg.optim.lr);
    cfg.optim.weight_decay = o.value("weight_decay", cfg.optim.weight_decay);
    cfg.optim.beta1 = o.value("beta1", cfg.optim.beta1);
    cfg.optim.beta2 = o.value("beta2", cfg.optim.beta2);
    cfg.optim.eps = o.value("eps", cfg.optim.eps);
  }
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.chunk_len = j.value("chunk_len", cfg.chunk_len);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.lr_halve_window = j.value("lr_halve_window", cfg.lr_halve_window);
  cfg.accumulation = j.value("accumulation", cfg.accumulation);
  return cfg;
}

nlohmann::json trainConfigToJson(const TrainConfig& cfg) {
  return nlohmann::json{
      {"arch", cfg.arch},
      {"scheme", cfg.scheme},
      {"features", cfg.features},
      {"model",
       {{"hidden_size", cfg.model.hidden_size},
        {"n_layers", cfg.model.n_layers},
        {"dropout_rate", cfg.model.dropout_rate},
        {"context_frames", cfg.model.context_frames},
        {"dilation_base", cfg.model.dilation_base},
        {"kernel_size", cfg.model.kernel_size},
        {"norm_kind", normKindName(cfg.model.norm_kind)},
        {"leaky_slope", cfg.model.leaky_slope}}},
      {"loss", {{"beta", cfg.loss_beta}, {"gamma", cfg.loss_gamma}}},
      {"optim",
       {{"lr", cfg.optim.lr},
        {"weight_decay", cfg.optim.weight_decay},
        {"beta1", cfg.optim.beta1},
        {"beta2", cfg.optim.beta2},
        {"eps", cfg.optim.eps}}},
      {"batch_size", cfg.batch_size},
      {"chunk_len", cfg.chunk_len},
      {"seed", cfg.seed},
      {"max_epochs", cfg.max_epochs},
      {"patience", cfg.patience},
      {"lr_halve_window", cfg.lr_halve_window},
      {"accumulation", cfg.accumulation},
  };
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void writeTrainingLog(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("training log " + path + ": cannot open for writing");
  out << "epoch,train_loss,dev_error,lr,wall_s\n";
  char buf[160];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.dev_error, e.lr,
                  e.wall_s);
    out << buf;
  }
}

double trainStep(SequenceModel& model, const std::vector<const Chunk*>& batch, int accumulation,
                 const LossConfig& loss_cfg, const OptimizerConfig& optim, AdamWState& state, double lr,
                 Rng& dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("trainStep: empty batch");
  long long total_frames = 0;
  for (const Chunk* c : batch) total_frames += c->frames();
  const double scale = 1.0 / static_cast<double>(total_frames);

  ParameterSet grads = model.params().shapeLike();
  double loss_sum = 0.0;

  const int n = static_cast<int>(batch.size());
  const int groups = std::min(accumulation, n);
  const int per_group = (n + groups - 1) / groups;
  for (int g = 0; g < groups; ++g) {
    const int begin = g * per_group;
    const int end = std::min(n, begin + per_group);
    for (int i = begin; i < end; ++i) {
      const Chunk& c = *batch[i];
      Matrix post = model.forward(c.features, /*training=*/true, &dropout_rng);
      const double chunk_loss = cbFocalLossSum(post, c.labels, loss_cfg);
      if (!std::isfinite(chunk_loss))
        throw std::runtime_error("trainStep: non-finite loss on session '" + c.session_id + "' at frame offset " +
                                 std::to_string(c.offset));
      loss_sum += chunk_loss;
      model.backward(cbFocalLossBackward(post, c.labels, loss_cfg, scale), grads);
    }
  }

  clipGradNorm(grads, 1.0);
  adamwStep(model.params(), grads, state, optim, lr);
  return loss_sum;
}

double evalErrorRate(SequenceModel& model, const std::vector<Chunk>& chunks) {
  long long correct = 0, total = 0;
  for (const Chunk& c : chunks) {
    Matrix post = model.forward(c.features, /*training=*/false, nullptr);
    for (int t = 0; t < post.rows(); ++t) {
      int arg = 0;
      const double* row = post.row(t);
      for (int j = 1; j < post.cols(); ++j)
        if (row[j] > row[arg]) arg = j;  // ties keep the lowest index
      correct += arg == c.labels[t] ? 1 : 0;
    }
    total += post.rows();
  }
  if (total == 0) throw std::invalid_argument("evalErrorRate: no frames");
  return 1.0 - static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<long long> countClasses(const std::vector<SessionData>& sessions, int n_classes) {
  std::vector<long long> counts(n_classes, 0);
  for (const SessionData& s : sessions)
    for (int y : s.labels) {
      if (y < 0 || y >= n_classes) throw std::invalid_argument("countClasses: label out of range");
      ++counts[y];
    }
  return counts;
}

TrainResult trainModel(const TrainConfig& cfg, const std::vector<SessionData>& train,
                       const std::vector<SessionData>& dev) {
  cfg.validate();
  if (train.empty() || dev.empty()) throw std::invalid_argument("trainModel: need train and dev sessions");

  const int chunk_len = cfg.effectiveChunkLen();
  std::vector<Chunk> train_chunks = chunkSessions(train, chunk_len);
  std::vector<Chunk> dev_chunks = chunkSessions(dev, chunk_len);

  ModelConfig mc = cfg.model;
  mc.arch = parseArch(cfg.arch);
  mc.input_dim = train.front().features.cols();
  mc.n_classes = cfg.scheme;
  mc.validate();

  LossConfig loss_cfg;
  loss_cfg.beta = cfg.loss_beta;
  loss_cfg.gamma = cfg.loss_gamma;
  loss_cfg.counts = countClasses(train, cfg.scheme);

  auto model = buildModel(mc, mixSeed(cfg.seed, 0x1417));
  AdamWState adam = AdamWState::forParams(model->params());
  Rng shuffle_rng(mixSeed(cfg.seed, 0x5487));
  Rng dropout_rng(mixSeed(cfg.seed, 0xD409));

  const int batch_size = std::min<int>(cfg.batch_size, static_cast<int>(train_chunks.size()));

  TrainState state;
  state.lr = cfg.optim.lr;
  state.patience = cfg.patience;
  state.lr_halve_window = cfg.lr_halve_window;
  state.max_epochs = cfg.max_epochs;

  TrainResult result;
  result.class_counts = loss_cfg.counts;
  result.best_params = model->params();

  long long total_train_frames = 0;
  for (const Chunk& c : train_chunks) total_train_frames += c.frames();

  while (!state.stop) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr_for_epoch = state.lr;

    double loss_sum = 0.0;
    for (const auto& batch_idx : sampleEpochBatches(static_cast<int>(train_chunks.size()), batch_size, shuffle_rng)) {
      std::vector<const Chunk*> batch;
      batch.reserve(batch_idx.size());
      for (int i : batch_idx) batch.push_back(&train_chunks[i]);
      loss_sum += trainStep(*model, batch, cfg.accumulation, loss_cfg, cfg.optim, adam, lr_for_epoch, dropout_rng);
    }

    const double dev_error = evalErrorRate(*model, dev_chunks);
    const double wall =
        std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() - t0).count();

    scheduleUpdate(state, dev_error);
    result.log.push_back({state.epoch, loss_sum / static_cast<double>(total_train_frames), dev_error,
                          lr_for_epoch, wall});
    if (state.improved_last) {
      result.best_params = model->params();
      result.best_epoch = state.epoch;
      result.best_dev_error = dev_error;
    }
  }
  return result;
}

}  // namespace cad
