#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etlab/image.hpp"

namespace etlab {

/// Encodes an 8-bit RGB PNG (color type 2, no interlace, filter 0 rows,
/// zlib stream made of *stored* deflate blocks). Stored blocks keep the
/// byte stream fully determined by the pixels — no dependence on a zlib
/// version — which is what makes dataset manifests hash-stable.
std::vector<uint8_t> encode_png_rgb8(const std::vector<uint8_t>& rgb, int width, int height);

/// Decodes PNGs produced by encode_png_rgb8 (and any other 8-bit RGB,
/// non-interlaced PNG whose zlib stream uses stored blocks and whose rows
/// use filter 0). Anything else raises CorruptData.
std::vector<uint8_t> decode_png_rgb8(const std::vector<uint8_t>& bytes, int& width, int& height);

/// Image <-> PNG using the round(255*x) quantization contract.
std::vector<uint8_t> image_to_png(const Image& img);
Image image_from_png(const std::vector<uint8_t>& bytes);

void write_png_file(const std::string& path, const Image& img);
Image read_png_file(const std::string& path);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace etlab
