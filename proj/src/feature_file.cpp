#include "cad/feature_file.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cad {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'F', 'E', 'A', 'T', '1'};

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("feature file " + path + ": " + why);
}

void putLe32(std::ofstream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void putLeFloat(std::ofstream& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  putLe32(out, u);
}

}  // namespace

void writeFeatureFile(const std::string& path, const FeatureStream& stream) {
  nlohmann::json header = {
      {"name", stream.name},         {"dim", stream.dim},
      {"frames", stream.frames()},   {"hop_ms", stream.spec.hop_ms},
      {"window_ms", stream.spec.window_ms}, {"standardized", stream.standardized},
  };
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(kMagic, 8);
  putLe32(out, static_cast<uint32_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (int t = 0; t < stream.frames(); ++t) {
    const double* row = stream.data.row(t);
    for (int d = 0; d < stream.dim; ++d) putLeFloat(out, static_cast<float>(row[d]));
  }
  if (!out) fail(path, "write failed");
}

FeatureStream readFeatureFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 12) fail(path, "truncated (no header)");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) fail(path, "bad magic");
  const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data()) + 8;
  const uint32_t header_len = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                              (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  if (12 + static_cast<size_t>(header_len) > bytes.size()) fail(path, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("invalid header JSON: ") + e.what());
  }

  FeatureStream stream;
  try {
    stream.name = header.at("name").get<std::string>();
    stream.dim = header.at("dim").get<int>();
    stream.spec.hop_ms = header.at("hop_ms").get<double>();
    stream.spec.window_ms = header.at("window_ms").get<double>();
    stream.standardized = header.at("standardized").get<bool>();
    const int frames = header.at("frames").get<int>();
    if (stream.dim <= 0 || frames < 0) fail(path, "non-positive dim or negative frame count in header");

    const size_t expect = static_cast<size_t>(frames) * stream.dim * 4;
    const size_t have = bytes.size() - 12 - header_len;
    if (have != expect)
      fail(path, "payload size mismatch: header declares " + std::to_string(expect) + " bytes, file has " +
                     std::to_string(have));

    stream.data = Matrix(frames, stream.dim);
    const uint8_t* q = reinterpret_cast<const uint8_t*>(bytes.data()) + 12 + header_len;
    for (int t = 0; t < frames; ++t) {
      double* row = stream.data.row(t);
      for (int d = 0; d < stream.dim; ++d) {
        const uint32_t u = static_cast<uint32_t>(q[0]) | (static_cast<uint32_t>(q[1]) << 8) |
                           (static_cast<uint32_t>(q[2]) << 16) | (static_cast<uint32_t>(q[3]) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        row[d] = f;
        q += 4;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("header missing fields: ") + e.what());
  }
  return stream;
}

}  // namespace cad
