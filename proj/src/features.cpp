#include "cad/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace cad {

namespace {

std::mutex& fftwPlannerMutex() {
  static std::mutex m;
  return m;
}

int nextPow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Real FFT of fixed size backed by FFTW. Plan creation is serialized; execution
// on distinct instances is safe in parallel.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(fftwPlannerMutex());
    fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(fftwPlannerMutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  double* input() { return in_; }

  // Power spectrum |X|^2 of input() into spec[0..n/2].
  void powerSpectrum(double* spec) {
    fftw_execute(fwd_);
    for (int k = 0; k <= n_ / 2; ++k) spec[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

  // Circular autocorrelation of input() into ac[0..max_lag]; input must be
  // zero-padded past the true signal so the result is the linear one.
  void autocorrelation(double* ac, int max_lag) {
    fftw_execute(fwd_);
    for (int k = 0; k <= n_ / 2; ++k) {
      out_[k][0] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
      out_[k][1] = 0.0;
    }
    fftw_execute(inv_);
    const double norm = 1.0 / n_;
    for (int t = 0; t <= max_lag; ++t) ac[t] = in_[t] * norm;
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan fwd_, inv_;
};

double kaiserI0(double x) {
  double sum = 1.0, term = 1.0;
  const double half = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < 1e-14 * sum) break;
  }
  return sum;
}

double sincPi(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

double hzToMel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double melToHz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct MelFilter {
  int start_bin = 0;
  std::vector<double> weights;
};

// Triangular filters with edges equally spaced on the mel scale, weights
// linear in Hz between edges (unnormalized peaks of 1).
std::vector<MelFilter> buildMelFilterbank(int n_mels, int nfft, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  const double mel_hi = hzToMel(nyquist);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = melToHz(mel_hi * i / (n_mels + 1));

  const int n_bins = nfft / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / nfft;
  std::vector<MelFilter> filters(n_mels);
  for (int j = 0; j < n_mels; ++j) {
    const double lo = edges[j], mid = edges[j + 1], hi = edges[j + 2];
    const int k0 = std::max(0, static_cast<int>(std::ceil(lo / bin_hz)));
    const int k1 = std::min(n_bins - 1, static_cast<int>(std::floor(hi / bin_hz)));
    filters[j].start_bin = k0;
    for (int k = k0; k <= k1; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f < mid) {
        if (mid > lo) w = (f - lo) / (mid - lo);
      } else {
        if (hi > mid) w = (hi - f) / (hi - mid);
      }
      filters[j].weights.push_back(std::max(0.0, w));
    }
  }
  return filters;
}

}  // namespace

void FrameSpec::validate() const {
  if (window_ms <= 0 || hop_ms <= 0) throw std::invalid_argument("FrameSpec: window and hop must be positive");
  if (window_ms < hop_ms) throw std::invalid_argument("FrameSpec: window must be at least one hop");
}

int FrameSpec::windowSamples(int sample_rate) const {
  return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int FrameSpec::hopSamples(int sample_rate) const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

int frameCount(long long n_samples, int hop_samples) {
  if (hop_samples <= 0) throw std::invalid_argument("frameCount: hop must be positive");
  return static_cast<int>(n_samples / hop_samples);
}

Framer::Framer(const Waveform& w, const FrameSpec& spec) : wav_(&w) {
  spec.validate();
  if (w.samples.empty()) throw std::invalid_argument("Framer: empty signal");
  rate_ = w.sample_rate;
  win_ = spec.windowSamples(rate_);
  hop_ = spec.hopSamples(rate_);
  if (win_ <= 0 || hop_ <= 0) throw std::invalid_argument("Framer: degenerate window/hop for this rate");
  if (static_cast<long long>(win_) > 10LL * static_cast<long long>(w.samples.size()))
    throw std::invalid_argument("Framer: window longer than 10x the signal");
  n_frames_ = frameCount(static_cast<long long>(w.samples.size()), hop_);
}

void Framer::frame(int t, double* out) const {
  if (t < 0 || t >= n_frames_) throw std::out_of_range("Framer::frame");
  const long long n = static_cast<long long>(wav_->samples.size());
  const long long center = static_cast<long long>(t) * hop_;
  const long long first = center - win_ / 2;
  const long long period = 2 * (n - 1);
  for (int i = 0; i < win_; ++i) {
    long long idx = first + i;
    if (n == 1) {
      idx = 0;
    } else if (idx < 0 || idx >= n) {
      // reflect without repeating the edge sample
      idx = ((idx % period) + period) % period;
      if (idx >= n) idx = period - idx;
    }
    out[i] = wav_->samples[static_cast<size_t>(idx)];
  }
}

std::vector<double> Framer::frame(int t) const {
  std::vector<double> buf(win_);
  frame(t, buf.data());
  return buf;
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target rate must be positive");
  if (w.samples.empty()) throw std::invalid_argument("resample: empty signal");
  if (w.sample_rate <= 0) throw std::invalid_argument("resample: invalid source rate");
  if (target_rate == w.sample_rate) return w;

  const double in_rate = w.sample_rate;
  const double scale = std::min(1.0, static_cast<double>(target_rate) / in_rate);
  const double cutoff = 0.5 * scale * 0.945;  // cycles per input sample
  const double half_width = 16.0 / scale;
  const double beta = 8.0;
  const double i0_beta = kaiserI0(beta);

  const long long n_in = static_cast<long long>(w.samples.size());
  const long long n_out =
      static_cast<long long>(static_cast<unsigned long long>(n_in) * static_cast<unsigned long long>(target_rate) /
                             static_cast<unsigned long long>(w.sample_rate));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(n_out));

  for (long long j = 0; j < n_out; ++j) {
    const double t = static_cast<double>(j) * in_rate / target_rate;
    const long long lo = static_cast<long long>(std::ceil(t - half_width));
    const long long hi = static_cast<long long>(std::floor(t + half_width));
    double acc = 0.0, wsum = 0.0;
    for (long long i = lo; i <= hi; ++i) {
      const double u = t - i;
      const double frac = u / half_width;
      const double win = kaiserI0(beta * std::sqrt(std::max(0.0, 1.0 - frac * frac))) / i0_beta;
      const double k = 2.0 * cutoff * sincPi(2.0 * cutoff * u) * win;
      wsum += k;
      if (i >= 0 && i < n_in) acc += k * w.samples[static_cast<size_t>(i)];
    }
    out.samples[static_cast<size_t>(j)] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

FeatureStream logMelFeatures(const Waveform& w, int n_mels) {
  if (n_mels <= 0) throw std::invalid_argument("logMelFeatures: n_mels must be positive");
  const FrameSpec spec{500.0, 10.0};
  Framer framer(w, spec);
  const int win = framer.windowSamples();
  const int nfft = nextPow2(win);

  std::vector<double> hann(win);
  for (int i = 0; i < win; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / win);

  const auto filters = buildMelFilterbank(n_mels, nfft, w.sample_rate);

  RealFft fft(nfft);
  std::vector<double> frame(win), spec_buf(nfft / 2 + 1);

  FeatureStream out;
  out.name = "mel";
  out.spec = spec;
  out.dim = n_mels;
  out.data = Matrix(framer.frames(), n_mels);
  out.standardized = false;

  for (int t = 0; t < framer.frames(); ++t) {
    framer.frame(t, frame.data());
    double* in = fft.input();
    for (int i = 0; i < win; ++i) in[i] = frame[i] * hann[i];
    for (int i = win; i < nfft; ++i) in[i] = 0.0;
    fft.powerSpectrum(spec_buf.data());
    double* row = out.data.row(t);
    for (int j = 0; j < n_mels; ++j) {
      const MelFilter& f = filters[j];
      double e = 0.0;
      for (size_t k = 0; k < f.weights.size(); ++k) e += f.weights[k] * spec_buf[f.start_bin + k];
      row[j] = std::log(e + kLogFloor);
    }
  }
  return out;
}

FeatureStream prosodyFeatures(const Waveform& w) {
  const FrameSpec spec{50.0, 10.0};
  Framer framer(w, spec);
  const int win = framer.windowSamples();
  const int rate = framer.sampleRate();

  int lag_min = std::max(2, static_cast<int>(std::floor(rate / 500.0)));
  int lag_max = std::min(win - 2, static_cast<int>(std::ceil(rate / 50.0)));
  if (lag_max <= lag_min) throw std::invalid_argument("prosodyFeatures: window too short for the 50-500 Hz lag range");

  const int nfft = nextPow2(win + lag_max + 1);
  RealFft fft(nfft);
  std::vector<double> frame(win), ac(lag_max + 1), prefix(win + 1), nccf(lag_max + 1, 0.0);

  FeatureStream out;
  out.name = "prosody";
  out.spec = spec;
  out.dim = 3;
  out.data = Matrix(framer.frames(), 3);
  out.standardized = false;

  for (int t = 0; t < framer.frames(); ++t) {
    framer.frame(t, frame.data());

    double energy = 0.0;
    prefix[0] = 0.0;
    for (int i = 0; i < win; ++i) {
      energy += frame[i] * frame[i];
      prefix[i + 1] = energy;
    }
    const double rms = std::sqrt(energy / win);
    const double loudness = std::log(rms + kLogFloor);

    double f0 = 0.0, voicing = 0.0;
    if (energy > 1e-20) {
      double* in = fft.input();
      std::copy(frame.begin(), frame.end(), in);
      std::fill(in + win, in + nfft, 0.0);
      fft.autocorrelation(ac.data(), lag_max);

      for (int tau = lag_min; tau <= lag_max; ++tau) {
        const double head = prefix[win - tau];
        const double tail = prefix[win] - prefix[tau];
        nccf[tau] = (head > 1e-20 && tail > 1e-20) ? ac[tau] / std::sqrt(head * tail) : 0.0;
      }

      double best = 0.0;
      for (int tau = lag_min; tau <= lag_max; ++tau) best = std::max(best, nccf[tau]);
      voicing = std::clamp(best, 0.0, 1.0);

      if (best > 0.0) {
        // Smallest-lag local peak close to the global maximum; avoids locking
        // onto a period multiple of the fundamental.
        int pick = -1;
        for (int tau = lag_min; tau <= lag_max; ++tau) {
          const double left = tau > lag_min ? nccf[tau - 1] : -1.0;
          const double right = tau < lag_max ? nccf[tau + 1] : -1.0;
          if (nccf[tau] >= left && nccf[tau] >= right && nccf[tau] >= 0.9 * best) {
            pick = tau;
            break;
          }
        }
        if (pick > 0) {
          double lag = pick;
          if (pick > lag_min && pick < lag_max) {
            const double a = nccf[pick - 1], b = nccf[pick], c = nccf[pick + 1];
            const double denom = a - 2.0 * b + c;
            if (std::abs(denom) > 1e-12) {
              const double delta = 0.5 * (a - c) / denom;
              if (std::abs(delta) <= 1.0) lag += delta;
            }
          }
          f0 = rate / lag;
        }
      }
      if (voicing < kVoicingThreshold) f0 = 0.0;
    }

    double* row = out.data.row(t);
    row[0] = f0;
    row[1] = loudness;
    row[2] = voicing;
  }
  return out;
}

StandardizationStats fitStats(const std::vector<const FeatureStream*>& streams, const std::string& source_split) {
  if (streams.empty()) throw std::invalid_argument("fitStats: no streams");
  const int dim = streams.front()->dim;
  long long total = 0;
  for (const FeatureStream* s : streams) {
    if (s->dim != dim) throw std::invalid_argument("fitStats: streams disagree on dimension");
    total += s->frames();
  }
  if (total < 2) throw std::invalid_argument("fitStats: need at least 2 frames");

  StandardizationStats stats;
  stats.source = source_split;
  stats.mean.assign(dim, 0.0);
  stats.std.assign(dim, 0.0);

  for (const FeatureStream* s : streams)
    for (int t = 0; t < s->frames(); ++t) {
      const double* row = s->data.row(t);
      for (int d = 0; d < dim; ++d) stats.mean[d] += row[d];
    }
  for (int d = 0; d < dim; ++d) stats.mean[d] /= static_cast<double>(total);

  for (const FeatureStream* s : streams)
    for (int t = 0; t < s->frames(); ++t) {
      const double* row = s->data.row(t);
      for (int d = 0; d < dim; ++d) {
        const double dev = row[d] - stats.mean[d];
        stats.std[d] += dev * dev;
      }
    }
  for (int d = 0; d < dim; ++d)
    stats.std[d] = std::max(kStdFloor, std::sqrt(stats.std[d] / static_cast<double>(total)));
  return stats;
}

StandardizationStats fitStats(const FeatureStream& stream, const std::string& source_split) {
  return fitStats(std::vector<const FeatureStream*>{&stream}, source_split);
}

FeatureStream standardize(const FeatureStream& stream, const StandardizationStats& stats) {
  if (stats.dim() != stream.dim)
    throw std::invalid_argument("standardize: stats dim " + std::to_string(stats.dim()) +
                                " != stream dim " + std::to_string(stream.dim));
  FeatureStream out = stream;
  for (int t = 0; t < out.frames(); ++t) {
    double* row = out.data.row(t);
    for (int d = 0; d < out.dim; ++d) row[d] = (row[d] - stats.mean[d]) / stats.std[d];
  }
  out.standardized = true;
  return out;
}

FeatureStream fuseStreams(const std::vector<FeatureStream>& streams) {
  if (streams.empty()) throw std::invalid_argument("fuseStreams: empty stream list");
  if (streams.size() == 1) return streams.front();

  const double hop = streams.front().spec.hop_ms;
  int total_dim = 0;
  int t_min = streams.front().frames();
  for (const FeatureStream& s : streams) {
    if (std::abs(s.spec.hop_ms - hop) > 1e-9)
      throw std::invalid_argument("fuseStreams: stream '" + s.name + "' hop " + std::to_string(s.spec.hop_ms) +
                                  " ms does not match " + std::to_string(hop) + " ms");
    total_dim += s.dim;
    t_min = std::min(t_min, s.frames());
  }

  FeatureStream out;
  out.spec = FrameSpec{streams.front().spec.window_ms, hop};
  out.dim = total_dim;
  out.data = Matrix(t_min, total_dim);
  out.standardized = true;
  std::string name;
  for (const FeatureStream& s : streams) {
    name += (name.empty() ? "" : "+") + s.name;
    out.standardized = out.standardized && s.standardized;
  }
  out.name = name;

  for (int t = 0; t < t_min; ++t) {
    double* row = out.data.row(t);
    int off = 0;
    for (const FeatureStream& s : streams) {
      const double* src = s.data.row(t);
      std::copy(src, src + s.dim, row + off);
      off += s.dim;
    }
  }
  return out;
}

}  // namespace cad
