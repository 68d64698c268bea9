#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "attnmark/autograd.hpp"
#include "attnmark/rng.hpp"

// Differentiable transforms applied between encoder and decoder, plus the
// non-differentiable MJPEG channel. Video tensors are (B, T, W, H, 3) with
// values in [-1, 1]; rank-4 inputs are treated as a batch of one.
namespace attnmark::noise {

enum class Layer : unsigned { crop = 1, scale = 2, compress = 4 };

struct NoiseConfig {
  double scale_min = 0.8;
  double scale_max = 1.0;
  double crop_min = 0.8;  // retained area fraction
  double crop_max = 1.0;
  double drop_min = 0.0;  // fraction of DCT coefficients zeroed
  double drop_max = 0.1;
  bool crop = true;
  bool scale = true;
  bool compress = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on inverted or out-of-range bounds.
  void validate() const;
  bool enabled(Layer layer) const;
  static NoiseConfig none();
};

struct CropWindow {
  std::size_t offset_w = 0;
  std::size_t offset_h = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

/// Equal per-axis shrink: side = ceil(dim * sqrt(area)), capped at dim.
CropWindow crop_window_for_area(std::size_t width, std::size_t height, double area, Rng& rng);
CropWindow centered_crop_window(std::size_t width, std::size_t height, double area);

/// Concrete parameters for one application of the pipeline.
struct NoiseDraw {
  std::optional<CropWindow> crop;
  std::optional<std::pair<std::size_t, std::size_t>> scaled_size;
  std::optional<double> drop_fraction;
};

/// Draws crop, then scale (relative to the cropped size), then drop fraction
/// for the enabled layers.
NoiseDraw draw_noise(const NoiseConfig& cfg, std::size_t width, std::size_t height, Rng& rng);

template <class T> Var<T> crop(const Var<T>& video, const CropWindow& window);
/// Corner-aligned bilinear resampling of every frame.
template <class T> Var<T> resize_bilinear(const Var<T>& video, std::size_t out_width, std::size_t out_height);

/// [-1, 1] RGB to full-range BT.601 (Y, Cr, Cb) on the [0, 1] scale.
template <class T> Var<T> rgb_to_ycrcb(const Var<T>& video);
/// Exact inverse of rgb_to_ycrcb, back to [-1, 1] RGB.
template <class T> Var<T> ycrcb_to_rgb(const Var<T>& video);

/// Orthonormal 3-D DCT-II over (T, W, H) of each (batch, channel) volume.
template <class T> Tensor<T> dct3(const Tensor<T>& video);
template <class T> Tensor<T> idct3(const Tensor<T>& coefficients);

/// Keep-mask over (T, W, H) coefficient positions with the highest-frequency
/// `drop_fraction` zeroed. Frequency score is u/T + v/W + w/H; among equal
/// scores the lexicographically larger (u, v, w) is dropped first.
std::vector<std::uint8_t> frequency_keep_mask(std::size_t t, std::size_t w, std::size_t h, double drop_fraction);

/// Projects every channel volume onto the kept DCT coefficients.
template <class T> Var<T> dct_lowpass(const Var<T>& video, const std::vector<std::uint8_t>& keep);
/// YCrCb -> 3-D DCT -> drop high frequencies -> inverse -> RGB -> clamp.
template <class T> Var<T> dct_compress(const Var<T>& video, double drop_fraction);

template <class T> Var<T> apply_noise(const Var<T>& video, const NoiseDraw& draw);

/// Seeded pipeline: the n-th call draws from Rng(mix(seed, n)), so outputs
/// depend only on (seed, call index, input).
class NoisePipeline {
 public:
  explicit NoisePipeline(NoiseConfig cfg);
  const NoiseConfig& config() const { return cfg_; }
  std::uint64_t calls() const { return calls_; }

  NoiseDraw next_draw(std::size_t width, std::size_t height);
  template <class T>
  Var<T> operator()(const Var<T>& video) {
    const std::size_t width_axis = video.value().rank() - 3;
    return apply_noise(video, next_draw(video.dim(width_axis), video.dim(width_axis + 1)));
  }

 private:
  NoiseConfig cfg_;
  std::uint64_t calls_ = 0;
};

enum class ChromaSubsampling { yuv444, yuv420 };

/// Maps [-1, 1] to {0..255} by round((v + 1) / 2 * 255) and back.
std::uint8_t quantize(float v);
float dequantize(std::uint8_t k);
/// 8-bit quantization only, no codec.
template <class T> Tensor<T> quantize_roundtrip(const Tensor<T>& video);

/// Quantize, JPEG-encode every frame at `quality`, decode, dequantize.
/// Not differentiable. Throws DataError naming the frame on codec failure.
template <class T>
Tensor<T> mjpeg_roundtrip(const Tensor<T>& video, int quality,
                          ChromaSubsampling subsampling = ChromaSubsampling::yuv444);

}  // namespace attnmark::noise
