#include "cad/features.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cad/feature_file.hpp"
#include "cad/rng.hpp"
#include "cad/wav.hpp"
#include "oracles.hpp"

using namespace cad;

namespace {

Waveform sine(double freq, double seconds, int rate, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  const long long n = static_cast<long long>(seconds * rate);
  w.samples.resize(n);
  for (long long i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / rate);
  return w;
}

Waveform whiteNoise(double seconds, int rate, uint64_t seed, double amp = 0.3) {
  Waveform w;
  w.sample_rate = rate;
  Rng rng(seed);
  const long long n = static_cast<long long>(seconds * rate);
  w.samples.resize(n);
  for (long long i = 0; i < n; ++i) w.samples[i] = amp * std::clamp(rng.normal(), -3.0, 3.0);
  return w;
}

std::string tempPath(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

FeatureStream syntheticStream(const char* name, int frames, int dim, double hop_ms = 10.0) {
  FeatureStream s;
  s.name = name;
  s.spec = FrameSpec{50.0, hop_ms};
  s.dim = dim;
  s.data = Matrix(frames, dim);
  Rng rng(42);
  for (int t = 0; t < frames; ++t)
    for (int d = 0; d < dim; ++d) s.data(t, d) = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("resample: same rate returns identical samples") {
  Waveform w = sine(440.0, 1.0, 16000);
  Waveform r = resample(w, 16000);
  CHECK(r.sample_rate == 16000);
  CHECK(r.samples == w.samples);
}

TEST_CASE("resample: exact 3:1 ratio sample count") {
  Waveform w = sine(440.0, 1.0, 48000);
  REQUIRE(w.samples.size() == 48000);
  Waveform r = resample(w, 16000);
  CHECK(r.samples.size() == 16000);
}

TEST_CASE("resample: 440 Hz sine at 48 kHz keeps its spectral peak") {
  Waveform w = sine(440.0, 1.0, 48000);
  Waveform r = resample(w, 16000);
  const double peak = oracle::spectralPeakHz(r.samples, 16000.0, 400.0, 480.0, 0.25);
  CHECK(std::abs(peak - 440.0) <= 2.0);
}

TEST_CASE("resample: upsampling also preserves the tone") {
  Waveform w = sine(440.0, 1.0, 16000);
  Waveform r = resample(w, 22050);
  CHECK(r.samples.size() == 22050);
  const double peak = oracle::spectralPeakHz(r.samples, 22050.0, 400.0, 480.0, 0.25);
  CHECK(std::abs(peak - 440.0) <= 2.0);
}

TEST_CASE("resample: empty input rejected") {
  Waveform w;
  w.sample_rate = 16000;
  CHECK_THROWS(resample(w, 8000));
}

TEST_CASE("framing: counts, window sizes, constant-signal windows") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(16000, 0.25);

  Framer f10(w, FrameSpec{500.0, 10.0});
  CHECK(f10.frames() == 100);
  CHECK(f10.windowSamples() == 8000);

  auto f0 = f10.frame(0);
  auto f1 = f10.frame(1);
  CHECK(f0 == f1);  // constant input: every window identical
}

TEST_CASE("framing: frame count law holds for odd lengths") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 4000 + rng.uniformInt(30000);
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(n, 0.0);
    Framer f(w, FrameSpec{50.0, 10.0});
    CHECK(f.frames() == n / 160);
  }
}

TEST_CASE("framing: degenerate window rejected") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(400, 0.1);  // 25 ms; 500 ms window is > 10x
  CHECK_THROWS(Framer(w, FrameSpec{500.0, 10.0}));
}

TEST_CASE("log-mel: digital silence hits the energy floor") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(16000, 0.0);
  FeatureStream mel = logMelFeatures(w);
  CHECK(mel.data.rows() == 100);
  CHECK(mel.dim == 40);
  const double floor = std::log(1e-10);
  for (int t = 0; t < mel.frames(); ++t)
    for (int d = 0; d < 40; ++d) CHECK(mel.data(t, d) == doctest::Approx(floor).epsilon(1e-12));
}

TEST_CASE("log-mel: pure tone peaks in the filter nearest its frequency") {
  Waveform w = sine(1000.0, 1.0, 16000);
  FeatureStream mel = logMelFeatures(w);

  const auto centers = oracle::melFilterCentersHz(40, 16000.0);
  int expected = 0;
  for (int j = 1; j < 40; ++j)
    if (std::abs(centers[j] - 1000.0) < std::abs(centers[expected] - 1000.0)) expected = j;

  for (int t = 0; t < mel.frames(); ++t) {
    int argmax = 0;
    for (int d = 1; d < 40; ++d)
      if (mel.data(t, d) > mel.data(t, argmax)) argmax = d;
    CHECK(argmax == expected);
  }
}

TEST_CASE("log-mel: output shape follows the framer") {
  Waveform w = whiteNoise(0.737, 16000, 11);
  Framer f(w, FrameSpec{500.0, 10.0});
  FeatureStream mel = logMelFeatures(w);
  CHECK(mel.data.rows() == f.frames());
  CHECK(mel.data.cols() == 40);
}

TEST_CASE("log-mel: louder input raises every entry") {
  Waveform w = whiteNoise(0.5, 16000, 99, 0.2);
  Waveform w2 = w;
  for (double& s : w2.samples) s *= 2.0;
  FeatureStream a = logMelFeatures(w);
  FeatureStream b = logMelFeatures(w2);
  for (int t = 0; t < a.frames(); ++t)
    for (int d = 0; d < 40; ++d) CHECK(b.data(t, d) > a.data(t, d));
}

TEST_CASE("prosody: 220 Hz sine is voiced at the right pitch") {
  Waveform w = sine(220.0, 1.0, 16000, 0.5);
  FeatureStream p = prosodyFeatures(w);
  REQUIRE(p.dim == 3);
  // first/last few windows straddle the reflected edges; judge steady state
  for (int t = 3; t < p.frames() - 3; ++t) {
    CHECK(std::abs(p.data(t, 0) - 220.0) <= 5.0);
    CHECK(p.data(t, 2) >= 0.9);
  }
  // cross-check against a direct autocorrelation estimate on the same frames
  Framer framer(w, FrameSpec{50.0, 10.0});
  for (int t = 3; t < p.frames() - 3; t += 17) {
    const double ref = oracle::autocorrPitchHz(framer.frame(t), 16000.0);
    CHECK(std::abs(p.data(t, 0) - ref) <= 4.0);
  }
}

TEST_CASE("prosody: silence convention") {
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(8000, 0.0);
  FeatureStream p = prosodyFeatures(w);
  for (int t = 0; t < p.frames(); ++t) {
    CHECK(p.data(t, 0) == 0.0);
    CHECK(p.data(t, 1) == doctest::Approx(std::log(1e-10)));
    CHECK(p.data(t, 2) == 0.0);
  }
}

TEST_CASE("prosody: white noise is mostly unvoiced") {
  Waveform w = whiteNoise(1.0, 16000, 1234);
  FeatureStream p = prosodyFeatures(w);
  double mean_voicing = 0.0;
  for (int t = 0; t < p.frames(); ++t) mean_voicing += p.data(t, 2);
  mean_voicing /= p.frames();
  CHECK(mean_voicing <= 0.3);
}

TEST_CASE("prosody: median pitch error under 2% across 80-400 Hz") {
  std::vector<double> errors;
  for (double f = 80.0; f <= 400.0; f += 16.0) {
    Waveform w = sine(f, 0.5, 16000, 0.5);
    FeatureStream p = prosodyFeatures(w);
    const int mid = p.frames() / 2;
    errors.push_back(std::abs(p.data(mid, 0) - f) / f);
  }
  std::sort(errors.begin(), errors.end());
  CHECK(errors[errors.size() / 2] <= 0.02);
}

TEST_CASE("stats: two-frame hand case uses the population convention") {
  FeatureStream s = syntheticStream("x", 2, 1);
  s.data(0, 0) = 0.0;
  s.data(1, 0) = 2.0;
  StandardizationStats st = fitStats(s, "train");
  CHECK(st.mean[0] == doctest::Approx(1.0));
  CHECK(st.std[0] == doctest::Approx(1.0));
}

TEST_CASE("stats: constant dimension clamps to the floor") {
  FeatureStream s = syntheticStream("x", 50, 2);
  for (int t = 0; t < 50; ++t) s.data(t, 1) = 3.5;
  StandardizationStats st = fitStats(s, "train");
  CHECK(st.std[1] == 1e-8);
  FeatureStream z = standardize(s, st);
  CHECK(z.data.allFinite());
  for (int t = 0; t < 50; ++t) CHECK(z.data(t, 1) == 0.0);
}

TEST_CASE("stats: fit-then-apply gives zero mean unit std") {
  FeatureStream s = syntheticStream("x", 400, 7);
  StandardizationStats st = fitStats(s, "train");
  FeatureStream z = standardize(s, st);
  CHECK(z.standardized);
  StandardizationStats check = fitStats({&z}, "train");
  for (int d = 0; d < 7; ++d) {
    CHECK(std::abs(check.mean[d]) <= 1e-9);
    CHECK(std::abs(check.std[d] - 1.0) <= 1e-6);
  }
}

TEST_CASE("stats: fewer than two frames rejected") {
  FeatureStream s = syntheticStream("x", 1, 3);
  CHECK_THROWS(fitStats(s, "train"));
}

TEST_CASE("standardize: (0,1) stats are the identity") {
  FeatureStream s = syntheticStream("x", 20, 3);
  StandardizationStats st;
  st.mean.assign(3, 0.0);
  st.std.assign(3, 1.0);
  st.source = "train";
  FeatureStream z = standardize(s, st);
  CHECK(z.data == s.data);
  CHECK(z.standardized);
}

TEST_CASE("standardize: train stats leave a shifted test stream off-center") {
  FeatureStream train = syntheticStream("x", 300, 2);
  FeatureStream test = syntheticStream("x", 300, 2);
  for (int t = 0; t < 300; ++t) test.data(t, 0) += 5.0;
  StandardizationStats st = fitStats(train, "train");
  FeatureStream z = standardize(test, st);
  StandardizationStats zs = fitStats({&z}, "check");
  CHECK(std::abs(zs.mean[0]) > 0.5);  // no leakage: test mean stays shifted
}

TEST_CASE("standardize: dimension mismatch rejected") {
  FeatureStream s = syntheticStream("x", 20, 3);
  StandardizationStats st;
  st.mean.assign(4, 0.0);
  st.std.assign(4, 1.0);
  CHECK_THROWS(standardize(s, st));
}

TEST_CASE("fuse: mel plus prosody is 43-dimensional") {
  FeatureStream a = syntheticStream("mel", 120, 40);
  FeatureStream b = syntheticStream("prosody", 120, 3);
  FeatureStream f = fuseStreams({a, b});
  CHECK(f.dim == 43);
  CHECK(f.frames() == 120);
  CHECK(f.data(7, 40) == b.data(7, 0));
  CHECK(f.data(7, 0) == a.data(7, 0));
}

TEST_CASE("fuse: tail truncation to the shortest stream") {
  FeatureStream a = syntheticStream("a", 5000, 4);
  FeatureStream b = syntheticStream("b", 4998, 2);
  FeatureStream f = fuseStreams({a, b});
  CHECK(f.frames() == 4998);
  CHECK(f.dim == 6);
}

TEST_CASE("fuse: single stream is the identity") {
  FeatureStream a = syntheticStream("a", 10, 4);
  FeatureStream f = fuseStreams({a});
  CHECK(f.data == a.data);
  CHECK(f.name == "a");
}

TEST_CASE("fuse: mismatched hop and empty list rejected") {
  FeatureStream a = syntheticStream("a", 10, 4, 10.0);
  FeatureStream b = syntheticStream("b", 10, 2, 20.0);
  CHECK_THROWS(fuseStreams({a, b}));
  CHECK_THROWS(fuseStreams({}));
}

TEST_CASE("feature file: write-read round trip is bit exact") {
  FeatureStream s = syntheticStream("mel", 37, 5);
  const std::string p1 = tempPath("cad_feat_rt1.bin");
  const std::string p2 = tempPath("cad_feat_rt2.bin");
  writeFeatureFile(p1, s);
  FeatureStream r1 = readFeatureFile(p1);
  CHECK(r1.name == "mel");
  CHECK(r1.dim == 5);
  CHECK(r1.frames() == 37);
  writeFeatureFile(p2, r1);
  FeatureStream r2 = readFeatureFile(p2);
  CHECK(r1.data == r2.data);  // float32 payload reproduces exactly

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("feature file: external stream with a different hop is rejected by fusion") {
  FeatureStream ext = syntheticStream("embeddings", 50, 8, 20.0);
  ext.spec.window_ms = 150.0;
  const std::string p = tempPath("cad_feat_hop20.bin");
  writeFeatureFile(p, ext);
  FeatureStream loaded = readFeatureFile(p);
  CHECK(loaded.spec.hop_ms == 20.0);
  FeatureStream mel = syntheticStream("mel", 50, 40, 10.0);
  CHECK_THROWS(fuseStreams({mel, loaded}));
  std::remove(p.c_str());
}

TEST_CASE("feature file: 150 ms external embeddings fuse like native streams") {
  FeatureStream ext = syntheticStream("embeddings", 60, 8, 10.0);
  ext.spec.window_ms = 150.0;
  const std::string p = tempPath("cad_feat_ext.bin");
  writeFeatureFile(p, ext);
  FeatureStream loaded = readFeatureFile(p);
  FeatureStream mel = syntheticStream("mel", 64, 40, 10.0);
  FeatureStream fused = fuseStreams({mel, loaded});
  CHECK(fused.dim == 48);
  CHECK(fused.frames() == 60);
  std::remove(p.c_str());
}

TEST_CASE("feature file: corruption is detected") {
  FeatureStream s = syntheticStream("mel", 10, 3);
  const std::string p = tempPath("cad_feat_bad.bin");
  writeFeatureFile(p, s);

  // truncated payload
  {
    std::ifstream in(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS(readFeatureFile(p));

  // bad magic
  writeFeatureFile(p, s);
  {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS(readFeatureFile(p));
  std::remove(p.c_str());
}
