#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cad/loss.hpp"
#include "cad/model.hpp"
#include "cad/optim.hpp"
#include "cad/rng.hpp"

namespace cad {

// One training sequence slice: labels[i] stays aligned with features row i.
struct Chunk {
  Matrix features;
  std::vector<int> labels;
  std::string session_id;
  long long offset = 0;

  int frames() const { return features.rows(); }
};

struct SessionData {
  std::string id;
  Matrix features;
  std::vector<int> labels;
};

inline constexpr int kRnnChunkLen = 3000;
inline constexpr int kDefaultChunkLen = 12000;
inline constexpr int kMaxEpochsCap = 35;

// Consecutive non-overlapping chunks; the final remainder is kept as a short
// chunk so short sessions still contribute.
std::vector<Chunk> chunkSession(const SessionData& session, int chunk_len);
std::vector<Chunk> chunkSessions(const std::vector<SessionData>& sessions, int chunk_len);

// One epoch of minibatch index groups: a seeded shuffle of all chunks split
// into batch_size groups (last group may be short), so every chunk is visited
// exactly once per epoch.
std::vector<std::vector<int>> sampleEpochBatches(int n_chunks, int batch_size, Rng& rng);

// Early-stopping and learning-rate schedule state. Improvement means a
// strictly lower dev metric; ties count as stale. Three stale epochs halve
// the rate, nine signal stop.
struct TrainState {
  double lr = 0.0;
  int epoch = 0;
  int epochs_since_improve = 0;
  int epochs_since_halve = 0;
  double best_dev = 0.0;
  bool has_best = false;
  bool improved_last = false;
  bool stop = false;
  int patience = 9;
  int lr_halve_window = 3;
  int max_epochs = kMaxEpochsCap;
};

void scheduleUpdate(TrainState& state, double dev_metric);

struct TrainConfig {
  std::string arch = "bigru";
  int scheme = 9;
  std::vector<std::string> features = {"mel", "prosody"};
  ModelConfig model;  // input_dim / n_classes are filled in from the data
  double loss_beta = 0.999;
  double loss_gamma = 2.0;
  OptimizerConfig optim;
  int batch_size = 8;
  int chunk_len = 0;  // 0: 3000 for recurrent models, 12000 otherwise
  uint64_t seed = 1;
  int max_epochs = kMaxEpochsCap;
  int patience = 9;
  int lr_halve_window = 3;
  int accumulation = 1;

  int effectiveChunkLen() const;
  void validate() const;
};

TrainConfig trainConfigFromJson(const nlohmann::json& j);
nlohmann::json trainConfigToJson(const TrainConfig& cfg);
uint64_t fnv1a64(const std::string& bytes);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_error = 0.0;
  double lr = 0.0;
  double wall_s = 0.0;
};

// CSV with header epoch,train_loss,dev_error,lr,wall_s.
void writeTrainingLog(const std::string& path, const std::vector<EpochLog>& log);

struct TrainResult {
  ParameterSet best_params;
  int best_epoch = 0;
  double best_dev_error = 1.0;
  std::vector<EpochLog> log;
  std::vector<long long> class_counts;
};

// One optimizer step over a batch of chunks processed as `accumulation`
// micro-batches. Per-chunk gradients carry a 1/total-batch-frames scale, so
// any micro-batch grouping accumulates to the same batch-mean gradient.
// Returns the summed (unscaled) loss over all frames in the batch.
double trainStep(SequenceModel& model, const std::vector<const Chunk*>& batch, int accumulation,
                 const LossConfig& loss_cfg, const OptimizerConfig& optim, AdamWState& state, double lr,
                 Rng& dropout_rng);

double evalErrorRate(SequenceModel& model, const std::vector<Chunk>& chunks);

// sample -> forward -> loss -> backward -> clip -> AdamW, with a per-epoch
// dev evaluation driving the schedule; keeps the best-dev parameters.
TrainResult trainModel(const TrainConfig& cfg, const std::vector<SessionData>& train,
                       const std::vector<SessionData>& dev);

std::vector<long long> countClasses(const std::vector<SessionData>& sessions, int n_classes);

}  // namespace cad
