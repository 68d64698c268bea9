#include <cmath>

#include "attnmark/noise.hpp"
#include "jpeg_codec.hpp"

namespace attnmark::noise {

std::uint8_t quantize(float v) {
  const double scaled = std::round((std::clamp(double(v), -1.0, 1.0) + 1.0) / 2.0 * 255.0);
  return static_cast<std::uint8_t>(scaled);
}

float dequantize(std::uint8_t k) { return static_cast<float>(double(k) / 127.5 - 1.0); }

template <class T>
Tensor<T> quantize_roundtrip(const Tensor<T>& video) {
  Tensor<T> out(video.shape());
  for (std::size_t i = 0; i < video.size(); ++i) out[i] = static_cast<T>(dequantize(quantize(float(video[i]))));
  return out;
}

template <class T>
Tensor<T> mjpeg_roundtrip(const Tensor<T>& video, int quality, ChromaSubsampling subsampling) {
  require(quality >= 1 && quality <= 100, "jpeg quality must lie in 1..100");
  const Shape& s = video.shape();
  require((s.size() == 4 || s.size() == 5) && s.back() == 3, "mjpeg_roundtrip expects an RGB video");
  const std::size_t width = s[s.size() - 3], height = s[s.size() - 2];
  const std::size_t frames = video.size() / (width * height * 3);
  Tensor<T> out(s);
  detail::RgbImage image;
  image.columns = width;
  image.rows = height;
  image.pixels.resize(width * height * 3);
  for (std::size_t f = 0; f < frames; ++f) {
    const T* src = video.data() + f * width * height * 3;
    // Scanline r holds the pixels (w, h = r).
    for (std::size_t w = 0; w < width; ++w)
      for (std::size_t h = 0; h < height; ++h)
        for (std::size_t c = 0; c < 3; ++c)
          image.pixels[(h * width + w) * 3 + c] = quantize(float(src[(w * height + h) * 3 + c]));
    detail::RgbImage decoded;
    try {
      const auto bytes = detail::encode_jpeg(image, quality, subsampling == ChromaSubsampling::yuv444);
      decoded = detail::decode_jpeg(bytes.data(), bytes.size());
    } catch (const std::exception& e) {
      throw DataError("mjpeg frame " + std::to_string(f) + ": " + e.what());
    }
    T* dst = out.data() + f * width * height * 3;
    for (std::size_t w = 0; w < width; ++w)
      for (std::size_t h = 0; h < height; ++h)
        for (std::size_t c = 0; c < 3; ++c)
          dst[(w * height + h) * 3 + c] = static_cast<T>(dequantize(decoded.pixels[(h * width + w) * 3 + c]));
  }
  return out;
}

template Tensor<float> quantize_roundtrip(const Tensor<float>&);
template Tensor<double> quantize_roundtrip(const Tensor<double>&);
template Tensor<float> mjpeg_roundtrip(const Tensor<float>&, int, ChromaSubsampling);
template Tensor<double> mjpeg_roundtrip(const Tensor<double>&, int, ChromaSubsampling);

}  // namespace attnmark::noise
