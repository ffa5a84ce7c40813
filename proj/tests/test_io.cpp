#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cad/checkpoint.hpp"
#include "cad/rng.hpp"
#include "cad/split.hpp"
#include "cad/wav.hpp"

using namespace cad;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string tmp(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

CheckpointMeta sampleMeta(const ModelConfig& mc) {
  CheckpointMeta meta;
  meta.model = mc;
  meta.scheme = mc.n_classes;
  meta.recipe = {{"mel", 40, 10.0, 500.0}, {"prosody", 3, 10.0, 50.0}};
  StandardizationStats mel_stats, pros_stats;
  mel_stats.mean.assign(40, 0.25);
  mel_stats.std.assign(40, 2.0);
  mel_stats.source = "train";
  pros_stats.mean = {100.0, -3.0, 0.5};
  pros_stats.std = {50.0, 1.5, 0.3};
  pros_stats.source = "train";
  meta.stats = {mel_stats, pros_stats};
  meta.train_config_digest = 0xDEADBEEFull;
  meta.epoch = 7;
  meta.dev_metric = 0.123;
  return meta;
}

std::vector<SessionEntry> fakeSessions(int n_instructors, int per_instructor) {
  std::vector<SessionEntry> out;
  for (int i = 0; i < n_instructors; ++i)
    for (int s = 0; s < per_instructor; ++s) {
      SessionEntry e;
      e.session_id = "i" + std::to_string(i) + "_s" + std::to_string(s);
      e.instructor_id = i;
      e.wav_path = e.session_id + ".wav";
      e.annotation_path = e.session_id + ".csv";
      out.push_back(e);
    }
  return out;
}

}  // namespace

TEST_CASE("checkpoint: round trip reproduces tensors and forward output bit-exactly") {
  ModelConfig mc;
  mc.arch = Arch::Dtcnn;
  mc.input_dim = 5;
  mc.hidden_size = 6;
  mc.n_layers = 2;
  mc.n_classes = 4;
  mc.norm_kind = NormKind::Batch;  // includes non-trainable running buffers
  auto model = buildModel(mc, 42);

  const std::string p1 = tmp("cad_ckpt1.bin");
  const std::string p2 = tmp("cad_ckpt2.bin");
  saveCheckpoint(p1, sampleMeta(mc), model->params());

  Checkpoint c1 = loadCheckpoint(p1);
  CHECK(c1.meta.model.hidden_size == 6);
  CHECK(c1.meta.model.norm_kind == NormKind::Batch);
  CHECK(c1.meta.scheme == 4);
  CHECK(c1.meta.epoch == 7);
  CHECK(c1.meta.recipe.size() == 2);
  CHECK(c1.meta.stats[1].mean[0] == 100.0);
  CHECK(c1.params.entries.size() == model->params().entries.size());

  // float32 payload: a second round trip is exact, bytes and tensors
  saveCheckpoint(p2, c1.meta, c1.params);
  Checkpoint c2 = loadCheckpoint(p2);
  CHECK(slurp(p1).substr(0, 12) == slurp(p2).substr(0, 12));
  for (size_t e = 0; e < c1.params.entries.size(); ++e) {
    CHECK(c1.params.entries[e].name == c2.params.entries[e].name);
    CHECK(c1.params.entries[e].trainable == c2.params.entries[e].trainable);
    CHECK(c1.params.entries[e].tensor == c2.params.entries[e].tensor);
  }

  // identical posteriors from two independent loads
  auto m1 = buildModel(c1.meta.model, 0);
  auto m2 = buildModel(c2.meta.model, 1);
  loadParamsInto(*m1, c1.params);
  loadParamsInto(*m2, c2.params);
  Matrix x(9, 5);
  Rng rng(3);
  for (int t = 0; t < 9; ++t)
    for (int d = 0; d < 5; ++d) x(t, d) = rng.normal();
  CHECK(m1->forward(x) == m2->forward(x));

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint: corrupted magic is reported with the file name") {
  ModelConfig mc;
  mc.arch = Arch::Gru;
  mc.input_dim = 2;
  mc.hidden_size = 2;
  mc.n_classes = 4;
  auto model = buildModel(mc, 1);
  const std::string p = tmp("cad_ckpt_badmagic.bin");
  saveCheckpoint(p, sampleMeta(mc), model->params());
  {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.write("NOTCKPT0", 8);
  }
  try {
    loadCheckpoint(p);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cad_ckpt_badmagic.bin") != std::string::npos);
    CHECK(msg.find("magic") != std::string::npos);
  }
  std::remove(p.c_str());
}

TEST_CASE("checkpoint: manifest/payload size disagreement is caught before tensors load") {
  ModelConfig mc;
  mc.arch = Arch::Gru;
  mc.input_dim = 2;
  mc.hidden_size = 3;
  mc.n_classes = 4;
  auto model = buildModel(mc, 1);
  const std::string p = tmp("cad_ckpt_trunc.bin");
  saveCheckpoint(p, sampleMeta(mc), model->params());
  const std::string bytes = slurp(p);
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
  }
  CHECK_THROWS(loadCheckpoint(p));
  std::remove(p.c_str());
}

TEST_CASE("loadParamsInto rejects mismatched models") {
  ModelConfig mc;
  mc.arch = Arch::Gru;
  mc.input_dim = 2;
  mc.hidden_size = 3;
  mc.n_classes = 4;
  auto a = buildModel(mc, 1);
  mc.hidden_size = 4;
  auto b = buildModel(mc, 1);
  CHECK_THROWS(loadParamsInto(*b, a->params()));
}

TEST_CASE("instructor split: withheld instructors only in test2, any seed") {
  auto sessions = fakeSessions(9, 2);
  for (uint64_t seed : {1ULL, 7ULL, 99ULL, 12345ULL}) {
    SplitManifest m = makeInstructorSplit(sessions, 3, seed);
    m.validate();
    std::set<int> test2_instr;
    for (const auto& e : m.split("test2")) test2_instr.insert(e.instructor_id);
    CHECK(test2_instr.size() == 3);
    CHECK(m.split("test2").size() == 6);  // both sessions of each withheld instructor

    std::set<int> seen_elsewhere;
    for (const char* name : {"train", "dev", "test1"})
      for (const auto& e : m.split(name)) seen_elsewhere.insert(e.instructor_id);
    for (int i : test2_instr) CHECK(!seen_elsewhere.count(i));

    size_t total = 0;
    for (const auto& [name, list] : m.splits) total += list.size();
    CHECK(total == sessions.size());
  }
}

TEST_CASE("instructor split: deterministic in the seed") {
  auto sessions = fakeSessions(6, 3);
  SplitManifest a = makeInstructorSplit(sessions, 2, 42);
  SplitManifest b = makeInstructorSplit(sessions, 2, 42);
  CHECK(a.splits == b.splits);
  SplitManifest c = makeInstructorSplit(sessions, 2, 43);
  CHECK(a.splits != c.splits);  // different seed shuffles differently
}

TEST_CASE("instructor split: ratio and withheld validation") {
  auto sessions = fakeSessions(4, 2);
  CHECK_THROWS(makeInstructorSplit(sessions, 4, 1));
  CHECK_THROWS(makeInstructorSplit(sessions, 0, 1));
  CHECK_THROWS(makeInstructorSplit(sessions, 1, 1, 0.5, 0.2, 0.2));  // ratios must sum to 1
}

TEST_CASE("manifest JSON round trip") {
  auto m = makeInstructorSplit(fakeSessions(5, 2), 1, 11);
  const std::string p = tmp("cad_manifest.json");
  writeManifest(p, m);
  SplitManifest back = readManifest(p);
  back.validate();
  CHECK(back.splits == m.splits);
  CHECK(back.seed == m.seed);
  CHECK(back.sessions.size() == m.sessions.size());
  CHECK(back.session("i3_s1").instructor_id == 3);
  std::remove(p.c_str());
}

TEST_CASE("wav: multichannel files are downmixed by averaging") {
  // hand-build a 2-channel PCM16 file: L=0.5, R=-0.5 -> mono 0
  const std::string p = tmp("cad_stereo.wav");
  {
    std::ofstream out(p, std::ios::binary);
    auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + 16);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2);
    u32(8000);
    u32(8000 * 4);
    u16(4);
    u16(16);
    out.write("data", 4);
    u32(16);
    for (int i = 0; i < 4; ++i) {
      u16(static_cast<uint16_t>(16384));   // left
      u16(static_cast<uint16_t>(-16384));  // right
    }
  }
  Waveform w = readWav(p);
  CHECK(w.sample_rate == 8000);
  REQUIRE(w.samples.size() == 4);
  for (double s : w.samples) CHECK(s == 0.0);
  std::remove(p.c_str());
}

TEST_CASE("wav: pcm16 round trip and malformed files") {
  Waveform w;
  w.sample_rate = 16000;
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) w.samples.push_back(0.8 * rng.uniform(-1.0, 1.0));
  const std::string p = tmp("cad_rt.wav");
  writeWav(p, w);
  Waveform back = readWav(p);
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - w.samples[i]) <= 0.51 / 32768.0);

  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write("RIFFxxxxWAVE", 12);
  }
  CHECK_THROWS(readWav(p));
  std::remove(p.c_str());
}
