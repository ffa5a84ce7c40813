#pragma once

#include <string>
#include <vector>

namespace cad {

// Mono waveform, samples in [-1, 1]. Multichannel files are downmixed on load.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  double durationSeconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads RIFF WAV, PCM 16-bit or IEEE float 32-bit, any rate and channel count
// (channels averaged). Throws on malformed or truncated files.
Waveform readWav(const std::string& path);

// Writes mono 16-bit PCM. Sample values are clamped to [-1, 1].
void writeWav(const std::string& path, const Waveform& w);

}  // namespace cad
