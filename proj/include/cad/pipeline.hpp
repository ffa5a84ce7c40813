#pragma once

#include <string>
#include <vector>

#include "cad/checkpoint.hpp"
#include "cad/features.hpp"
#include "cad/labels.hpp"
#include "cad/split.hpp"
#include "cad/trainer.hpp"

namespace cad {

// Everything the pipeline knows about one session before standardization:
// the raw named feature streams plus its annotations.
struct LoadedSession {
  std::string id;
  std::vector<FeatureStream> streams;
  std::vector<AnnotationInterval> annotations;
};

inline constexpr int kPipelineSampleRate = 16000;

bool isNativeStream(const std::string& name);

// Extracts one named native stream ("mel" or "prosody") from a 16 kHz
// waveform.
FeatureStream extractNamedStream(const Waveform& w, const std::string& name);

// Loads a session's streams in recipe order. Native streams are computed
// from the (resampled) audio; anything else must exist as
// <cache_dir>/<session>.<stream>.cadfeat - the ingestion path for externally
// produced embeddings. When cache_dir is set, native extractions are cached
// there too.
LoadedSession loadSessionStreams(const SessionEntry& entry, const std::vector<std::string>& stream_names,
                                 const std::string& cache_dir = "");

// Per-stream standardization statistics over all frames of the given
// (training-split) sessions.
std::vector<StandardizationStats> fitTrainStats(const std::vector<LoadedSession>& train_sessions,
                                                const std::vector<std::string>& stream_names);

// Standardize each stream, fuse in recipe order, and derive frame labels
// under the scheme (gaps filled as "other").
SessionData assembleSession(const LoadedSession& loaded, const std::vector<StandardizationStats>& stats,
                            const LabelScheme& scheme);

std::vector<StreamRecipe> recipeFromStreams(const std::vector<FeatureStream>& streams);

// The recipe a session provides must match the checkpoint's expectation
// name-by-name (dims, hop, window); refuses mismatched pipelines.
void checkRecipeMatch(const std::vector<StreamRecipe>& expected, const std::vector<FeatureStream>& streams);

}  // namespace cad
