#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pbrgen/image.hpp"

namespace pbrgen {

// 8-bit PNG from a linear-light image: values clamped to [0,1] and scaled by
// 255, no gamma. Previews only; the dataset binary format is the real data
// path. channels must be 1 (grayscale) or 3 (RGB).
std::vector<uint8_t> encode_png(const Image& img);
void write_png(const std::string& path, const Image& img);

// Decoder for 8-bit grayscale/RGB PNGs (what encode_png emits, plus all five
// standard row filters). Returns values in [0,1].
Image read_png(const std::string& path);
Image decode_png(const std::vector<uint8_t>& bytes);

} // namespace pbrgen
