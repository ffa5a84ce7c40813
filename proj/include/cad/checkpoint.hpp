#pragma once

#include <string>
#include <vector>

#include "cad/features.hpp"
#include "cad/model.hpp"

namespace cad {

struct StreamRecipe {
  std::string name;
  int dim = 0;
  double hop_ms = 10.0;
  double window_ms = 0.0;
};

struct CheckpointMeta {
  ModelConfig model;
  int scheme = 9;
  std::vector<StreamRecipe> recipe;
  // Standardization stats per stream, in recipe order; predict refuses to run
  // a pipeline whose stats digest disagrees with what training recorded.
  std::vector<StandardizationStats> stats;
  uint64_t train_config_digest = 0;
  int epoch = 0;
  double dev_metric = 0.0;
};

struct Checkpoint {
  CheckpointMeta meta;
  ParameterSet params;
};

uint64_t statsDigest(const StandardizationStats& stats);

// Binary container, platform independent:
//   bytes 0-7   magic "CADCKPT1"
//   bytes 8-11  manifest length, 32-bit little-endian
//   manifest    JSON (model config, scheme, feature recipe, stats, digests,
//               epoch, dev metric, tensor table with byte offsets)
//   payload     all tensors as float32 little-endian, row-major
void saveCheckpoint(const std::string& path, const CheckpointMeta& meta, const ParameterSet& params);

// Validates magic, tensor table, and payload size before exposing anything.
Checkpoint loadCheckpoint(const std::string& path);

// Copies loaded tensors into a freshly built model, checking that names and
// shapes line up exactly.
void loadParamsInto(SequenceModel& model, const ParameterSet& loaded);

}  // namespace cad
