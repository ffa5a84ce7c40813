#pragma once

#include <string>
#include <vector>

#include "cad/matrix.hpp"
#include "cad/wav.hpp"

namespace cad {

// All streams in this pipeline share a 10 ms hop; windows differ per stream.
// Frames are centered at t*hop with reflect padding at the edges, so the frame
// count is floor(N / hop_samples) regardless of window length.
struct FrameSpec {
  double window_ms = 0.0;
  double hop_ms = 10.0;

  void validate() const;
  int windowSamples(int sample_rate) const;
  int hopSamples(int sample_rate) const;
};

struct FeatureStream {
  std::string name;
  FrameSpec spec;
  int dim = 0;
  Matrix data;  // T x dim
  bool standardized = false;

  int frames() const { return data.rows(); }
};

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::string source;  // split the stats were fitted on; must be the training split

  int dim() const { return static_cast<int>(mean.size()); }
};

inline constexpr double kStdFloor = 1e-8;
inline constexpr double kLogFloor = 1e-10;

int frameCount(long long n_samples, int hop_samples);

// Lazily yields reflect-padded windows centered at t*hop. Materializing every
// window of a long session would be gigabytes, so extraction pulls one frame
// at a time.
class Framer {
 public:
  Framer(const Waveform& w, const FrameSpec& spec);

  int frames() const { return n_frames_; }
  int windowSamples() const { return win_; }
  int hopSamples() const { return hop_; }
  int sampleRate() const { return rate_; }

  // Fills out[0..windowSamples) with frame t.
  void frame(int t, double* out) const;
  std::vector<double> frame(int t) const;

 private:
  const Waveform* wav_;
  int win_ = 0, hop_ = 0, rate_ = 0, n_frames_ = 0;
};

// Windowed-sinc (Kaiser, beta=8) polyphase resampler. Equal rates return the
// input unchanged.
Waveform resample(const Waveform& w, int target_rate);

// 40 log mel-filterbank energies over 500 ms windows at a 10 ms hop.
// Hann window, FFT size = next power of two >= window length, triangular
// filters on the HTK mel scale spanning 0 Hz to Nyquist, natural log with a
// 1e-10 floor on the filter energies.
FeatureStream logMelFeatures(const Waveform& w, int n_mels = 40);

// f0 (Hz, 0 when unvoiced), loudness (log RMS), and voicing probability over
// 50 ms windows at a 10 ms hop. Voicing is the normalized autocorrelation peak
// over the 50-500 Hz lag range; f0 is zeroed below a 0.3 voicing threshold.
FeatureStream prosodyFeatures(const Waveform& w);
inline constexpr double kVoicingThreshold = 0.3;

// Per-dimension mean and population std over all frames, std floored at 1e-8.
StandardizationStats fitStats(const FeatureStream& stream, const std::string& source_split);
StandardizationStats fitStats(const std::vector<const FeatureStream*>& streams, const std::string& source_split);

FeatureStream standardize(const FeatureStream& stream, const StandardizationStats& stats);

// Concatenates feature dimensions of streams with aligned frame centers
// (equal hops required); the fused length is the shortest input.
FeatureStream fuseStreams(const std::vector<FeatureStream>& streams);

}  // namespace cad
