#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnmark::detail {

/// Interleaved 8-bit RGB image in scanline order (row = height index).
struct RgbImage {
  std::size_t columns = 0;
  std::size_t rows = 0;
  std::vector<std::uint8_t> pixels;
};

/// Baseline JPEG. `full_chroma` selects 4:4:4 sampling, otherwise 4:2:0.
/// Both throw std::runtime_error with the codec's message.
std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality, bool full_chroma);
RgbImage decode_jpeg(const std::uint8_t* data, std::size_t size);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
RgbImage decode_png(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace attnmark::detail
