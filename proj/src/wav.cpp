#include "cad/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cad {

namespace {

uint32_t readU32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t readU16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void putU32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}

void putU16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("WAV " + path + ": " + why);
}

}  // namespace

Waveform readWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 44) fail(path, "file too short for a RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(path, "not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits_per_sample = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  size_t data_offset = 0, data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t chunk_size = readU32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (body + 16 > bytes.size()) fail(path, "truncated fmt chunk");
      format = readU16(bytes.data() + body);
      channels = readU16(bytes.data() + body + 2);
      sample_rate = readU32(bytes.data() + body + 4);
      bits_per_sample = readU16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_offset = body;
      data_size = chunk_size;
      break;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word aligned
  }

  if (!have_fmt) fail(path, "missing fmt chunk");
  if (data_offset == 0) fail(path, "missing data chunk");
  if (channels == 0) fail(path, "zero channels");
  if (sample_rate == 0) fail(path, "zero sample rate");
  if (data_offset + data_size > bytes.size()) fail(path, "data chunk extends past end of file");

  const uint8_t* d = bytes.data() + data_offset;
  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);

  if (format == 1 && bits_per_sample == 16) {
    const size_t n_values = data_size / 2;
    const size_t n_frames = n_values / channels;
    w.samples.resize(n_frames);
    for (size_t f = 0; f < n_frames; ++f) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) {
        const size_t i = (f * channels + c) * 2;
        const int16_t s = static_cast<int16_t>(d[i] | (d[i + 1] << 8));
        acc += s / 32768.0;
      }
      w.samples[f] = acc / channels;
    }
  } else if (format == 3 && bits_per_sample == 32) {
    const size_t n_values = data_size / 4;
    const size_t n_frames = n_values / channels;
    w.samples.resize(n_frames);
    for (size_t f = 0; f < n_frames; ++f) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) {
        uint32_t u = readU32(d + (f * channels + c) * 4);
        float v;
        std::memcpy(&v, &u, 4);
        acc += v;
      }
      w.samples[f] = acc / channels;
    }
  } else {
    fail(path, "unsupported format (want PCM 16-bit or IEEE float 32-bit), got format tag " +
                   std::to_string(format) + " with " + std::to_string(bits_per_sample) + " bits");
  }
  return w;
}

void writeWav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw std::invalid_argument("writeWav: sample_rate must be positive");
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_size = n * 2;

  std::vector<uint8_t> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  putU32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  putU32(out, 16);
  putU16(out, 1);  // PCM
  putU16(out, 1);  // mono
  putU32(out, static_cast<uint32_t>(w.sample_rate));
  putU32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  putU16(out, 2);
  putU16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  putU32(out, data_size);
  for (double v : w.samples) {
    const double scaled = v * 32768.0;
    int32_t q = static_cast<int32_t>(scaled >= 0 ? scaled + 0.5 : scaled - 0.5);
    if (q > 32767) q = 32767;
    if (q < -32768) q = -32768;
    putU16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("writeWav: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("writeWav: write failed for " + path);
}

}  // namespace cad
