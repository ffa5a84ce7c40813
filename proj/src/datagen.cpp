#include "cad/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

namespace cad {

namespace {

// Occurrence counts and durations (minutes) per activity from the corpus
// distribution table, in label order a,l,iq,ia,sq,sa,g,s,o.
constexpr std::array<double, 9> kOccurrences = {325, 673, 1202, 1581, 766, 960, 184, 118, 126};
constexpr std::array<double, 9> kDurationMin = {230.09, 1427.59, 187.22, 656.72,  92.47,
                                                89.32,  584.09,  115.58, 188.16};

constexpr double kMinSegmentSeconds = 0.15;
constexpr double kFadeSeconds = 0.005;

struct Voice {
  double base_hz = 0.0;
  std::vector<double> harmonic_amp;
  std::vector<double> phase;
};

}  // namespace

SynthConfig SynthConfig::defaults() {
  SynthConfig cfg;
  double occ_total = 0.0;
  for (double o : kOccurrences) occ_total += o;

  cfg.transition = Matrix(9, 9);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) cfg.transition(i, j) = kOccurrences[j] / occ_total;

  for (int i = 0; i < 9; ++i) cfg.mean_duration_s[i] = kDurationMin[i] / kOccurrences[i] * 60.0;

  auto& sig = cfg.signatures;
  sig[static_cast<int>(Activity::a)] = {true, false, 1, 0.30, 1.5, 500.0, 250.0, 2.0, 0.8, 0.0, 0.002, 0.0};
  sig[static_cast<int>(Activity::l)] = {true, false, 1, 0.30, 1.0, 800.0, 300.0, 4.0, 0.5, 0.0, 0.002, 0.0};
  sig[static_cast<int>(Activity::iq)] = {true, false, 1, 0.30, 0.8, 1500.0, 400.0, 5.0, 0.4, 0.5, 0.002, 0.0};
  sig[static_cast<int>(Activity::ia)] = {true, false, 1, 0.30, 1.2, 1100.0, 350.0, 3.0, 0.5, -0.4, 0.002, 0.0};
  sig[static_cast<int>(Activity::sq)] = {true, true, 1, 0.25, 0.9, 2200.0, 500.0, 5.0, 0.4, 0.6, 0.002, 0.0};
  sig[static_cast<int>(Activity::sa)] = {true, true, 1, 0.25, 1.1, 1800.0, 450.0, 3.5, 0.5, -0.5, 0.002, 0.0};
  sig[static_cast<int>(Activity::g)] = {true, false, 3, 0.35, 1.0, 1200.0, 800.0, 6.0, 0.3, 0.0, 0.05, 1000.0};
  sig[static_cast<int>(Activity::s)] = {false, false, 0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0008, 0.0};
  sig[static_cast<int>(Activity::o)] = {false, false, 0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.06, 300.0};
  return cfg;
}

void SynthConfig::validate() const {
  if (n_instructors < 1 || sessions_per_instructor < 1)
    throw std::invalid_argument("SynthConfig: need instructors and sessions");
  if (session_minutes <= 0) throw std::invalid_argument("SynthConfig: session_minutes must be positive");
  if (sample_rate <= 0) throw std::invalid_argument("SynthConfig: sample_rate must be positive");
  if (duration_scale <= 0) throw std::invalid_argument("SynthConfig: duration_scale must be positive");
  if (transition.rows() != 9 || transition.cols() != 9)
    throw std::invalid_argument("SynthConfig: transition matrix must be 9x9");
  for (int i = 0; i < 9; ++i) {
    double row = 0.0;
    for (int j = 0; j < 9; ++j) {
      if (transition(i, j) < 0) throw std::invalid_argument("SynthConfig: negative transition probability");
      row += transition(i, j);
    }
    if (std::abs(row - 1.0) > 1e-9)
      throw std::invalid_argument("SynthConfig: transition row " + std::to_string(i) + " sums to " +
                                  std::to_string(row));
  }
  for (double m : mean_duration_s)
    if (m <= 0) throw std::invalid_argument("SynthConfig: durations must be positive");
}

nlohmann::json synthConfigToJson(const SynthConfig& cfg) {
  nlohmann::json transition = nlohmann::json::array();
  for (int i = 0; i < 9; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < 9; ++j) row.push_back(cfg.transition(i, j));
    transition.push_back(row);
  }
  nlohmann::json sigs = nlohmann::json::array();
  for (const ActivitySignature& s : cfg.signatures)
    sigs.push_back({{"voiced", s.voiced},
                    {"student_pitch", s.student_pitch},
                    {"n_voices", s.n_voices},
                    {"level", s.level},
                    {"rolloff", s.rolloff},
                    {"band_center_hz", s.band_center_hz},
                    {"band_width_hz", s.band_width_hz},
                    {"am_rate_hz", s.am_rate_hz},
                    {"am_depth", s.am_depth},
                    {"pitch_slope_oct_per_s", s.pitch_slope_oct_per_s},
                    {"noise_level", s.noise_level},
                    {"noise_lowpass_hz", s.noise_lowpass_hz}});
  return nlohmann::json{{"seed", cfg.seed},
                        {"n_instructors", cfg.n_instructors},
                        {"sessions_per_instructor", cfg.sessions_per_instructor},
                        {"session_minutes", cfg.session_minutes},
                        {"sample_rate", cfg.sample_rate},
                        {"duration_scale", cfg.duration_scale},
                        {"duration_sigma", cfg.duration_sigma},
                        {"mean_duration_s", cfg.mean_duration_s},
                        {"transition", transition},
                        {"signatures", sigs}};
}

SynthConfig synthConfigFromJson(const nlohmann::json& j) {
  SynthConfig cfg = SynthConfig::defaults();
  cfg.seed = j.value("seed", cfg.seed);
  cfg.n_instructors = j.value("n_instructors", cfg.n_instructors);
  cfg.sessions_per_instructor = j.value("sessions_per_instructor", cfg.sessions_per_instructor);
  cfg.session_minutes = j.value("session_minutes", cfg.session_minutes);
  cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
  cfg.duration_scale = j.value("duration_scale", cfg.duration_scale);
  cfg.duration_sigma = j.value("duration_sigma", cfg.duration_sigma);
  if (j.contains("mean_duration_s")) {
    auto v = j.at("mean_duration_s").get<std::vector<double>>();
    if (v.size() != 9) throw std::invalid_argument("SynthConfig: mean_duration_s needs 9 entries");
    std::copy(v.begin(), v.end(), cfg.mean_duration_s.begin());
  }
  if (j.contains("transition")) {
    const auto& t = j.at("transition");
    if (t.size() != 9) throw std::invalid_argument("SynthConfig: transition needs 9 rows");
    for (int i = 0; i < 9; ++i)
      for (int jj = 0; jj < 9; ++jj) cfg.transition(i, jj) = t.at(i).at(jj).get<double>();
  }
  if (j.contains("signatures")) {
    const auto& sigs = j.at("signatures");
    if (sigs.size() != 9) throw std::invalid_argument("SynthConfig: signatures needs 9 entries");
    for (int i = 0; i < 9; ++i) {
      const auto& s = sigs.at(i);
      ActivitySignature& sig = cfg.signatures[i];
      sig.voiced = s.value("voiced", sig.voiced);
      sig.student_pitch = s.value("student_pitch", sig.student_pitch);
      sig.n_voices = s.value("n_voices", sig.n_voices);
      sig.level = s.value("level", sig.level);
      sig.rolloff = s.value("rolloff", sig.rolloff);
      sig.band_center_hz = s.value("band_center_hz", sig.band_center_hz);
      sig.band_width_hz = s.value("band_width_hz", sig.band_width_hz);
      sig.am_rate_hz = s.value("am_rate_hz", sig.am_rate_hz);
      sig.am_depth = s.value("am_depth", sig.am_depth);
      sig.pitch_slope_oct_per_s = s.value("pitch_slope_oct_per_s", sig.pitch_slope_oct_per_s);
      sig.noise_level = s.value("noise_level", sig.noise_level);
      sig.noise_lowpass_hz = s.value("noise_lowpass_hz", sig.noise_lowpass_hz);
    }
  }
  return cfg;
}

std::vector<AnnotationInterval> sampleActivityIntervals(const SynthConfig& cfg, double duration_s, Rng& rng) {
  std::vector<AnnotationInterval> out;
  double t = 0.0;
  int state = -1;
  while (t < duration_s) {
    // first state and transitions both draw from the matrix rows
    const double u = rng.uniform();
    const int row = state < 0 ? 0 : state;
    double acc = 0.0;
    int next = 8;
    for (int j = 0; j < 9; ++j) {
      acc += cfg.transition(row, j);
      if (u < acc) {
        next = j;
        break;
      }
    }
    state = next;

    const double mean = cfg.mean_duration_s[state] * cfg.duration_scale;
    const double mu = std::log(mean) - cfg.duration_sigma * cfg.duration_sigma / 2.0;
    double len = rng.logNormal(mu, cfg.duration_sigma);
    len = std::max(kMinSegmentSeconds, std::min(len, 5.0 * mean));
    const double end = std::min(duration_s, t + len);  // last interval truncated
    out.push_back({t, end, static_cast<Activity>(state)});
    t = end;
  }
  return out;
}

double instructorBasePitch(const SynthConfig& cfg, int instructor_id) {
  Rng rng(mixSeed(cfg.seed, 0xB112 + static_cast<uint64_t>(instructor_id)));
  return 100.0 + 60.0 * rng.uniform();
}

namespace {

Voice makeVoice(const ActivitySignature& sig, double base_hz, int sample_rate, Rng& rng) {
  Voice v;
  v.base_hz = base_hz * (0.97 + 0.06 * rng.uniform());
  const double f_max = std::min(7600.0, sample_rate / 2.0 * 0.95);
  double amp_sum = 0.0;
  for (int h = 1; h * v.base_hz < f_max && h <= 40; ++h) {
    const double f = h * v.base_hz;
    const double band = std::exp(-0.5 * std::pow((f - sig.band_center_hz) / sig.band_width_hz, 2.0));
    const double a = std::pow(static_cast<double>(h), -sig.rolloff) * (0.05 + band);
    v.harmonic_amp.push_back(a);
    v.phase.push_back(2.0 * M_PI * rng.uniform());
    amp_sum += a;
  }
  for (double& a : v.harmonic_amp) a /= std::max(amp_sum, 1e-9);
  return v;
}

void renderSegment(const SynthConfig& cfg, const ActivitySignature& sig, double base_pitch,
                   double start_s, double end_s, Rng& rng, std::vector<double>& samples) {
  const int rate = cfg.sample_rate;
  const long long i0 = static_cast<long long>(std::llround(start_s * rate));
  const long long i1 = std::min(static_cast<long long>(samples.size()),
                                static_cast<long long>(std::llround(end_s * rate)));
  const long long n = i1 - i0;
  if (n <= 0) return;

  const double seg_gain = 0.9 + 0.2 * rng.uniform();
  const double am_phase = 2.0 * M_PI * rng.uniform();

  std::vector<Voice> voices;
  if (sig.voiced) {
    for (int v = 0; v < sig.n_voices; ++v) {
      double pitch;
      if (sig.n_voices > 1)
        pitch = 110.0 + 150.0 * rng.uniform();  // mixed talkers in group work
      else if (sig.student_pitch)
        pitch = 190.0 + 70.0 * rng.uniform();
      else
        pitch = base_pitch;
      voices.push_back(makeVoice(sig, pitch, rate, rng));
    }
  }

  const double dt = 1.0 / rate;
  const double fade_n = kFadeSeconds * rate;
  double lp_state = 0.0;
  const double lp_alpha = sig.noise_lowpass_hz > 0.0
                              ? 1.0 - std::exp(-2.0 * M_PI * sig.noise_lowpass_hz / rate)
                              : 1.0;

  for (long long i = 0; i < n; ++i) {
    const double t_local = i * dt;
    double s = 0.0;
    if (!voices.empty()) {
      const double glide = std::pow(2.0, sig.pitch_slope_oct_per_s * t_local);
      const double env =
          1.0 - sig.am_depth * (0.5 + 0.5 * std::sin(2.0 * M_PI * sig.am_rate_hz * t_local + am_phase));
      double voiced = 0.0;
      for (Voice& v : voices) {
        const double f0 = v.base_hz * glide;
        double vs = 0.0;
        for (size_t h = 0; h < v.harmonic_amp.size(); ++h) {
          vs += v.harmonic_amp[h] * std::sin(v.phase[h]);
          v.phase[h] += 2.0 * M_PI * f0 * (h + 1) * dt;
        }
        voiced += vs;
      }
      s += sig.level * env * voiced / voices.size();
    }
    if (sig.noise_level > 0.0) {
      double noise = rng.normal();
      if (sig.noise_lowpass_hz > 0.0) {
        lp_state += lp_alpha * (noise - lp_state);
        noise = lp_state * 3.0;  // make up the low-pass level loss
      }
      s += sig.noise_level * noise;
    }
    double fade = 1.0;
    if (i < fade_n) fade = 0.5 - 0.5 * std::cos(M_PI * i / fade_n);
    if (n - 1 - i < fade_n) fade = std::min(fade, 0.5 - 0.5 * std::cos(M_PI * (n - 1 - i) / fade_n));
    samples[static_cast<size_t>(i0 + i)] = s * fade * seg_gain;
  }
}

}  // namespace

SynthSession generateSession(const SynthConfig& cfg, int instructor_id, int session_index) {
  cfg.validate();
  Rng rng(mixSeed(mixSeed(cfg.seed, 0x5E5510 + static_cast<uint64_t>(instructor_id)),
                  static_cast<uint64_t>(session_index)));

  SynthSession session;
  char id[64];
  std::snprintf(id, sizeof(id), "instr%02d_sess%02d", instructor_id, session_index);
  session.id = id;
  session.instructor_id = instructor_id;

  const double duration_s = cfg.session_minutes * 60.0;
  session.annotations = sampleActivityIntervals(cfg, duration_s, rng);

  session.wav.sample_rate = cfg.sample_rate;
  session.wav.samples.assign(static_cast<size_t>(std::llround(duration_s * cfg.sample_rate)), 0.0);

  const double base_pitch = instructorBasePitch(cfg, instructor_id);
  for (const AnnotationInterval& iv : session.annotations)
    renderSegment(cfg, cfg.signatures[static_cast<int>(iv.label)], base_pitch, iv.start_s, iv.end_s, rng,
                  session.wav.samples);
  return session;
}

SplitManifest generateCorpus(const SynthConfig& cfg, const std::string& out_dir, int n_withheld) {
  cfg.validate();
  if (cfg.n_instructors < 4)
    throw std::invalid_argument("generateCorpus: need at least 4 instructors to withhold a test2 set");

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "sessions");

  std::vector<SessionEntry> entries;
  for (int instructor = 0; instructor < cfg.n_instructors; ++instructor)
    for (int si = 0; si < cfg.sessions_per_instructor; ++si) {
      SynthSession session = generateSession(cfg, instructor, si);
      SessionEntry e;
      e.session_id = session.id;
      e.instructor_id = instructor;
      e.wav_path = (fs::path(out_dir) / "sessions" / (session.id + ".wav")).string();
      e.annotation_path = (fs::path(out_dir) / "sessions" / (session.id + ".csv")).string();
      writeWav(e.wav_path, session.wav);
      writeAnnotationCsv(e.annotation_path, session.annotations);
      entries.push_back(std::move(e));
    }

  SplitManifest manifest = makeInstructorSplit(entries, n_withheld, mixSeed(cfg.seed, 0x57717));
  writeManifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return manifest;
}

}  // namespace cad
