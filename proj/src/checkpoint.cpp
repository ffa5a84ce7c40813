#include "cad/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "cad/trainer.hpp"

namespace cad {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'C', 'K', 'P', 'T', '1'};

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("checkpoint " + path + ": " + why);
}

nlohmann::json modelConfigToJson(const ModelConfig& m) {
  return nlohmann::json{{"arch", archName(m.arch)},
                        {"input_dim", m.input_dim},
                        {"hidden_size", m.hidden_size},
                        {"n_layers", m.n_layers},
                        {"dropout_rate", m.dropout_rate},
                        {"context_frames", m.context_frames},
                        {"dilation_base", m.dilation_base},
                        {"kernel_size", m.kernel_size},
                        {"norm_kind", normKindName(m.norm_kind)},
                        {"n_classes", m.n_classes},
                        {"leaky_slope", m.leaky_slope}};
}

ModelConfig modelConfigFromJson(const nlohmann::json& j) {
  ModelConfig m;
  m.arch = parseArch(j.at("arch").get<std::string>());
  m.input_dim = j.at("input_dim").get<int>();
  m.hidden_size = j.at("hidden_size").get<int>();
  m.n_layers = j.at("n_layers").get<int>();
  m.dropout_rate = j.at("dropout_rate").get<double>();
  m.context_frames = j.at("context_frames").get<int>();
  m.dilation_base = j.at("dilation_base").get<double>();
  m.kernel_size = j.at("kernel_size").get<int>();
  m.norm_kind = parseNormKind(j.at("norm_kind").get<std::string>());
  m.n_classes = j.at("n_classes").get<int>();
  m.leaky_slope = j.at("leaky_slope").get<double>();
  return m;
}

}  // namespace

uint64_t statsDigest(const StandardizationStats& stats) {
  std::string canon = stats.source + "|" + std::to_string(stats.dim());
  char buf[40];
  for (double v : stats.mean) {
    std::snprintf(buf, sizeof(buf), "|%.17g", v);
    canon += buf;
  }
  for (double v : stats.std) {
    std::snprintf(buf, sizeof(buf), "|%.17g", v);
    canon += buf;
  }
  return fnv1a64(canon);
}

void saveCheckpoint(const std::string& path, const CheckpointMeta& meta, const ParameterSet& params) {
  if (meta.recipe.size() != meta.stats.size())
    throw std::invalid_argument("saveCheckpoint: recipe and stats lists must align");
  if (!params.allFinite()) throw std::invalid_argument("saveCheckpoint: non-finite parameter tensor");

  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& e : params.entries) {
    tensors.push_back({{"name", e.name},
                       {"rows", e.tensor.rows()},
                       {"cols", e.tensor.cols()},
                       {"trainable", e.trainable},
                       {"offset", offset}});
    offset += e.tensor.size() * 4;
  }

  nlohmann::json recipe = nlohmann::json::array();
  nlohmann::json stats = nlohmann::json::array();
  for (size_t i = 0; i < meta.recipe.size(); ++i) {
    const StreamRecipe& r = meta.recipe[i];
    recipe.push_back({{"name", r.name}, {"dim", r.dim}, {"hop_ms", r.hop_ms}, {"window_ms", r.window_ms}});
    const StandardizationStats& s = meta.stats[i];
    stats.push_back({{"name", r.name},
                     {"mean", s.mean},
                     {"std", s.std},
                     {"source", s.source},
                     {"digest", statsDigest(s)}});
  }

  nlohmann::json manifest = {{"model", modelConfigToJson(meta.model)},
                             {"scheme", meta.scheme},
                             {"recipe", recipe},
                             {"stats", stats},
                             {"train_config_digest", meta.train_config_digest},
                             {"epoch", meta.epoch},
                             {"dev_metric", meta.dev_metric},
                             {"dtype", "f32le"},
                             {"tensors", tensors}};
  const std::string ms = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(kMagic, 8);
  const uint32_t len = static_cast<uint32_t>(ms.size());
  const char lenb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                        static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
  out.write(lenb, 4);
  out.write(ms.data(), static_cast<std::streamsize>(ms.size()));

  for (const auto& e : params.entries)
    for (size_t i = 0; i < e.tensor.size(); ++i) {
      const float f = static_cast<float>(e.tensor.data()[i]);
      uint32_t u;
      std::memcpy(&u, &f, 4);
      const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                         static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
      out.write(b, 4);
    }
  if (!out) fail(path, "write failed");
}

Checkpoint loadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 12) fail(path, "truncated header");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) fail(path, "bad magic");
  const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data()) + 8;
  const uint32_t len = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                       (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  if (12 + static_cast<size_t>(len) > bytes.size()) fail(path, "truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("invalid manifest JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.meta.model = modelConfigFromJson(manifest.at("model"));
    ckpt.meta.scheme = manifest.at("scheme").get<int>();
    ckpt.meta.train_config_digest = manifest.at("train_config_digest").get<uint64_t>();
    ckpt.meta.epoch = manifest.at("epoch").get<int>();
    ckpt.meta.dev_metric = manifest.at("dev_metric").get<double>();
    for (const auto& r : manifest.at("recipe")) {
      StreamRecipe sr;
      sr.name = r.at("name").get<std::string>();
      sr.dim = r.at("dim").get<int>();
      sr.hop_ms = r.at("hop_ms").get<double>();
      sr.window_ms = r.at("window_ms").get<double>();
      ckpt.meta.recipe.push_back(std::move(sr));
    }
    for (const auto& s : manifest.at("stats")) {
      StandardizationStats st;
      st.mean = s.at("mean").get<std::vector<double>>();
      st.std = s.at("std").get<std::vector<double>>();
      st.source = s.at("source").get<std::string>();
      if (s.at("digest").get<uint64_t>() != statsDigest(st))
        fail(path, "standardization stats digest mismatch for stream '" + s.at("name").get<std::string>() + "'");
      ckpt.meta.stats.push_back(std::move(st));
    }

    const size_t payload_off = 12 + len;
    const size_t payload_size = bytes.size() - payload_off;
    uint64_t expected = 0;
    for (const auto& t : manifest.at("tensors")) {
      const int rows = t.at("rows").get<int>();
      const int cols = t.at("cols").get<int>();
      if (t.at("offset").get<uint64_t>() != expected)
        fail(path, "tensor '" + t.at("name").get<std::string>() + "' has an inconsistent offset");
      expected += static_cast<uint64_t>(rows) * cols * 4;
    }
    if (expected != payload_size)
      fail(path, "payload holds " + std::to_string(payload_size) + " bytes but the manifest declares " +
                     std::to_string(expected));

    const uint8_t* q = reinterpret_cast<const uint8_t*>(bytes.data()) + payload_off;
    for (const auto& t : manifest.at("tensors")) {
      Matrix& m = ckpt.params.add(t.at("name").get<std::string>(), t.at("rows").get<int>(),
                                  t.at("cols").get<int>(), t.at("trainable").get<bool>());
      for (size_t i = 0; i < m.size(); ++i) {
        const uint32_t u = static_cast<uint32_t>(q[0]) | (static_cast<uint32_t>(q[1]) << 8) |
                           (static_cast<uint32_t>(q[2]) << 16) | (static_cast<uint32_t>(q[3]) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        m.data()[i] = f;
        q += 4;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("manifest missing fields: ") + e.what());
  }
  return ckpt;
}

void loadParamsInto(SequenceModel& model, const ParameterSet& loaded) {
  ParameterSet& target = model.params();
  if (target.entries.size() != loaded.entries.size())
    throw std::runtime_error("loadParamsInto: checkpoint holds " + std::to_string(loaded.entries.size()) +
                             " tensors, model expects " + std::to_string(target.entries.size()));
  for (auto& e : target.entries) {
    if (!loaded.has(e.name)) throw std::runtime_error("loadParamsInto: checkpoint is missing tensor '" + e.name + "'");
    const Matrix& src = loaded.at(e.name);
    if (src.rows() != e.tensor.rows() || src.cols() != e.tensor.cols())
      throw std::runtime_error("loadParamsInto: tensor '" + e.name + "' shape mismatch");
    e.tensor = src;
  }
}

}  // namespace cad
