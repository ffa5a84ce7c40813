#pragma once

#include <string>

#include "cad/features.hpp"

namespace cad {

// Binary feature container, platform independent:
//   bytes 0-7   magic "CADFEAT1"
//   bytes 8-11  header length, 32-bit little-endian
//   header      JSON {name, dim, frames, hop_ms, window_ms, standardized}
//   payload     frames x dim float32 little-endian, row-major
void writeFeatureFile(const std::string& path, const FeatureStream& stream);

// Validates magic, header consistency, and payload size before returning;
// never yields a partially filled stream.
FeatureStream readFeatureFile(const std::string& path);

}  // namespace cad
