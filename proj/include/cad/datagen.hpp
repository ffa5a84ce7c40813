#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "cad/labels.hpp"
#include "cad/matrix.hpp"
#include "cad/rng.hpp"
#include "cad/split.hpp"
#include "cad/wav.hpp"

namespace cad {

// Abstract acoustic signature for one activity: harmonic stacks with a
// class-specific spectral emphasis, amplitude modulation, and pitch contour,
// plus an additive noise floor. Signatures are deliberately caricatured --
// the pipeline exercises sequence labeling, not speech realism.
struct ActivitySignature {
  bool voiced = true;
  bool student_pitch = false;  // stacks at non-instructor pitches
  int n_voices = 1;
  double level = 0.3;
  double rolloff = 1.0;            // harmonic amplitude ~ h^-rolloff
  double band_center_hz = 800.0;   // Gaussian spectral emphasis
  double band_width_hz = 300.0;
  double am_rate_hz = 4.0;         // syllabic amplitude modulation
  double am_depth = 0.5;
  double pitch_slope_oct_per_s = 0.0;  // rising for questions, falling for answers
  double noise_level = 0.0;
  double noise_lowpass_hz = 0.0;  // 0: white noise
};

// Deterministic synthetic classroom sessions: a Markov walk over the nine
// activities with log-normal segment durations calibrated to the corpus
// distribution table, rendered at 16 kHz.
struct SynthConfig {
  uint64_t seed = 1234;
  int n_instructors = 9;
  int sessions_per_instructor = 2;
  double session_minutes = 4.0;
  int sample_rate = 16000;
  // Segment duration means are the corpus duration/occurrence ratios scaled
  // by duration_scale; the scale keeps the class time shares intact while
  // giving desk-scale sessions enough activity transitions.
  double duration_scale = 0.25;
  double duration_sigma = 0.35;
  Matrix transition;  // 9x9, row-stochastic
  std::array<double, 9> mean_duration_s{};
  std::array<ActivitySignature, 9> signatures{};

  static SynthConfig defaults();
  void validate() const;
};

nlohmann::json synthConfigToJson(const SynthConfig& cfg);
SynthConfig synthConfigFromJson(const nlohmann::json& j);

struct SynthSession {
  std::string id;
  int instructor_id = 0;
  Waveform wav;
  std::vector<AnnotationInterval> annotations;
};

// The Markov walk alone (no audio); intervals tile [0, duration_s] exactly,
// the last one truncated.
std::vector<AnnotationInterval> sampleActivityIntervals(const SynthConfig& cfg, double duration_s, Rng& rng);

double instructorBasePitch(const SynthConfig& cfg, int instructor_id);

// Deterministic in (cfg.seed, instructor_id, session_index).
SynthSession generateSession(const SynthConfig& cfg, int instructor_id, int session_index);

// Renders every session to out_dir as WAV + annotation CSV, splits by
// instructor (withheld instructors form test2), and writes manifest.json.
SplitManifest generateCorpus(const SynthConfig& cfg, const std::string& out_dir, int n_withheld = 3);

}  // namespace cad
