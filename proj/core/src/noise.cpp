#include "attnmark/noise.hpp"

#include "attnmark/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "blas.hpp"

namespace attnmark::noise {
namespace {

// (B, T, W, H, C) view of a rank-4 or rank-5 video tensor.
struct Dims {
  std::size_t b, t, w, h, c;
  std::size_t rank;

  Shape with_spatial(std::size_t nw, std::size_t nh) const {
    return rank == 5 ? Shape{b, t, nw, nh, c} : Shape{t, nw, nh, c};
  }
};

Dims dims_of(const Shape& s) {
  require(s.size() == 4 || s.size() == 5, "expected a (T,W,H,C) or (B,T,W,H,C) video, got " + shape_string(s));
  if (s.size() == 4) return {1, s[0], s[1], s[2], s[3], 4};
  return {s[0], s[1], s[2], s[3], s[4], 5};
}

template <class T>
Tensor<T>& grad_of(Node<T>& node, std::size_t i) {
  return node.parents[i]->ensure_grad();
}

// Full-range BT.601 on [0, 1] channels; rows produce (Y, Cr, Cb).
constexpr std::array<std::array<double, 3>, 3> kToYCrCb{{
    {0.299, 0.587, 0.114},
    {0.5, -0.4187, -0.0813},
    {-0.1687, -0.3313, 0.5},
}};
constexpr std::array<double, 3> kOffset{0.0, 0.5, 0.5};

std::array<std::array<double, 3>, 3> inverse3(const std::array<std::array<double, 3>, 3>& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  std::array<std::array<double, 3>, 3> inv{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
      inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
    }
  return inv;
}

const std::array<std::array<double, 3>, 3>& from_ycrcb() {
  static const auto inv = inverse3(kToYCrCb);
  return inv;
}

// Orthonormal DCT-II matrix, row k = frequency.
template <class T>
const std::vector<T>& dct_matrix(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::vector<T>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<T> m(n * n);
  const double pi = std::acos(-1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double alpha = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      m[k * n + i] = static_cast<T>(alpha * std::cos(pi * (2.0 * double(i) + 1.0) * double(k) / (2.0 * double(n))));
  }
  return cache.emplace(n, std::move(m)).first->second;
}

// y[o][k][i] = sum_n M[k][n] x[o][n][i] (or M^T when transpose).
template <class T>
void along_axis(const T* in, T* out, std::size_t outer, std::size_t n, std::size_t inner, const std::vector<T>& m,
                bool transpose) {
  for (std::size_t o = 0; o < outer; ++o)
    detail::gemm(transpose, false, int(n), int(inner), int(n), T{1}, m.data(), int(n), in + o * n * inner, int(inner),
                 T{0}, out + o * n * inner, int(inner));
}

template <class T>
Tensor<T> transform3(const Tensor<T>& x, bool inverse) {
  const Dims d = dims_of(x.shape());
  Tensor<T> a(x.shape()), b(x.shape());
  along_axis(x.data(), a.data(), d.b, d.t, d.w * d.h * d.c, dct_matrix<T>(d.t), inverse);
  along_axis(a.data(), b.data(), d.b * d.t, d.w, d.h * d.c, dct_matrix<T>(d.w), inverse);
  along_axis(b.data(), a.data(), d.b * d.t * d.w, d.h, d.c, dct_matrix<T>(d.h), inverse);
  return a;
}

template <class T>
Tensor<T> lowpass_values(const Tensor<T>& x, const std::vector<std::uint8_t>& keep) {
  const Dims d = dims_of(x.shape());
  const std::size_t volume = d.t * d.w * d.h;
  require(keep.size() == volume, "dct keep-mask does not match the video volume");
  Tensor<T> coeff = transform3(x, false);
  for (std::size_t b = 0; b < d.b; ++b)
    for (std::size_t p = 0; p < volume; ++p)
      if (!keep[p])
        for (std::size_t c = 0; c < d.c; ++c) coeff[(b * volume + p) * d.c + c] = T{0};
  return transform3(coeff, true);
}

template <class T>
Var<T> color_affine(const Var<T>& video, const std::array<std::array<double, 3>, 3>& m, double in_scale,
                    const std::array<double, 3>& in_shift, double out_scale, const std::array<double, 3>& out_shift) {
  // out = out_scale * (m * (in_scale * x + in_shift)) + out_shift, per pixel.
  const auto& x = video.value();
  require(x.last() == 3, "color conversion expects 3 channels");
  Tensor<T> out(x.shape());
  const std::size_t pixels = x.rows();
  for (std::size_t p = 0; p < pixels; ++p) {
    std::array<double, 3> s{};
    for (int c = 0; c < 3; ++c) s[c] = in_scale * double(x[p * 3 + c]) + in_shift[c];
    for (int r = 0; r < 3; ++r)
      out[p * 3 + r] = static_cast<T>(out_scale * (m[r][0] * s[0] + m[r][1] * s[1] + m[r][2] * s[2]) + out_shift[r]);
  }
  const double gain = in_scale * out_scale;
  return make_op<T>(std::move(out), {video}, [m, gain, pixels](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t p = 0; p < pixels; ++p)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int r = 0; r < 3; ++r) acc += m[r][c] * double(n.grad[p * 3 + r]);
        g[p * 3 + c] += static_cast<T>(gain * acc);
      }
  });
}

}  // namespace

void NoiseConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("noise config: " + what);
  };
  check(scale_min > 0 && scale_min <= scale_max && scale_max <= 1, "scale range must satisfy 0 < min <= max <= 1");
  check(crop_min > 0 && crop_min <= crop_max && crop_max <= 1, "crop range must satisfy 0 < min <= max <= 1");
  check(drop_min >= 0 && drop_min <= drop_max && drop_max <= 1, "drop range must satisfy 0 <= min <= max <= 1");
}

bool NoiseConfig::enabled(Layer layer) const {
  switch (layer) {
    case Layer::crop: return crop;
    case Layer::scale: return scale;
    case Layer::compress: return compress;
  }
  return false;
}

NoiseConfig NoiseConfig::none() {
  NoiseConfig cfg;
  cfg.crop = cfg.scale = cfg.compress = false;
  return cfg;
}

CropWindow centered_crop_window(std::size_t width, std::size_t height, double area) {
  const double side = std::sqrt(area);
  CropWindow win;
  win.width = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(double(width) * side - 1e-9)), 1, width);
  win.height = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(double(height) * side - 1e-9)), 1, height);
  win.offset_w = (width - win.width) / 2;
  win.offset_h = (height - win.height) / 2;
  return win;
}

CropWindow crop_window_for_area(std::size_t width, std::size_t height, double area, Rng& rng) {
  CropWindow win = centered_crop_window(width, height, area);
  win.offset_w = rng.below(width - win.width + 1);
  win.offset_h = rng.below(height - win.height + 1);
  return win;
}

NoiseDraw draw_noise(const NoiseConfig& cfg, std::size_t width, std::size_t height, Rng& rng) {
  cfg.validate();
  NoiseDraw draw;
  if (cfg.crop) {
    draw.crop = crop_window_for_area(width, height, rng.uniform(cfg.crop_min, cfg.crop_max), rng);
    width = draw.crop->width;
    height = draw.crop->height;
  }
  if (cfg.scale) {
    const double fw = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double fh = rng.uniform(cfg.scale_min, cfg.scale_max);
    draw.scaled_size = std::pair{std::max<std::size_t>(1, std::size_t(std::lround(fw * double(width)))),
                                 std::max<std::size_t>(1, std::size_t(std::lround(fh * double(height))))};
  }
  if (cfg.compress) draw.drop_fraction = rng.uniform(cfg.drop_min, cfg.drop_max);
  return draw;
}

template <class T>
Var<T> crop(const Var<T>& video, const CropWindow& win) {
  const Dims d = dims_of(video.shape());
  require(win.width >= 1 && win.height >= 1 && win.offset_w + win.width <= d.w && win.offset_h + win.height <= d.h,
          "crop window exceeds the frame");
  const auto& x = video.value();
  Tensor<T> out(d.with_spatial(win.width, win.height));
  const std::size_t frames = d.b * d.t;
  const std::size_t channels = d.c;
  auto index = [channels](std::size_t f, std::size_t i, std::size_t j, std::size_t ww, std::size_t hh) {
    return ((f * ww + i) * hh + j) * channels;
  };
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t i = 0; i < win.width; ++i)
      for (std::size_t j = 0; j < win.height; ++j)
        std::copy_n(x.data() + index(f, i + win.offset_w, j + win.offset_h, d.w, d.h), d.c,
                    out.data() + index(f, i, j, win.width, win.height));
  return make_op<T>(std::move(out), {video}, [=](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t i = 0; i < win.width; ++i)
        for (std::size_t j = 0; j < win.height; ++j) {
          const T* src = n.grad.data() + index(f, i, j, win.width, win.height);
          T* dst = g.data() + index(f, i + win.offset_w, j + win.offset_h, d.w, d.h);
          for (std::size_t c = 0; c < d.c; ++c) dst[c] += src[c];
        }
  });
}

namespace {

struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps corner_aligned_taps(std::size_t in, std::size_t out) {
  Taps taps;
  for (std::size_t i = 0; i < out; ++i) {
    const double src = out == 1 ? 0.0 : double(i) * double(in - 1) / double(out - 1);
    const std::size_t lo = std::min<std::size_t>(static_cast<std::size_t>(std::floor(src)), in - 1);
    taps.lo.push_back(lo);
    taps.hi.push_back(std::min(lo + 1, in - 1));
    taps.frac.push_back(src - double(lo));
  }
  return taps;
}

}  // namespace

template <class T>
Var<T> resize_bilinear(const Var<T>& video, std::size_t out_width, std::size_t out_height) {
  const Dims d = dims_of(video.shape());
  require(out_width >= 1 && out_height >= 1, "resize target must be positive");
  if (out_width == d.w && out_height == d.h) return video;
  const Taps tw = corner_aligned_taps(d.w, out_width);
  const Taps th = corner_aligned_taps(d.h, out_height);
  const auto& x = video.value();
  Tensor<T> out(d.with_spatial(out_width, out_height));
  const std::size_t frames = d.b * d.t;
  for (std::size_t f = 0; f < frames; ++f) {
    const T* src = x.data() + f * d.w * d.h * d.c;
    T* dst = out.data() + f * out_width * out_height * d.c;
    for (std::size_t i = 0; i < out_width; ++i)
      for (std::size_t j = 0; j < out_height; ++j) {
        const double a = tw.frac[i], b = th.frac[j];
        const T* p00 = src + (tw.lo[i] * d.h + th.lo[j]) * d.c;
        const T* p01 = src + (tw.lo[i] * d.h + th.hi[j]) * d.c;
        const T* p10 = src + (tw.hi[i] * d.h + th.lo[j]) * d.c;
        const T* p11 = src + (tw.hi[i] * d.h + th.hi[j]) * d.c;
        for (std::size_t c = 0; c < d.c; ++c)
          dst[(i * out_height + j) * d.c + c] = static_cast<T>((1 - a) * (1 - b) * p00[c] + (1 - a) * b * p01[c] +
                                                               a * (1 - b) * p10[c] + a * b * p11[c]);
      }
  }
  return make_op<T>(std::move(out), {video}, [=](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t f = 0; f < frames; ++f) {
      const T* dy = n.grad.data() + f * out_width * out_height * d.c;
      T* dx = g.data() + f * d.w * d.h * d.c;
      for (std::size_t i = 0; i < out_width; ++i)
        for (std::size_t j = 0; j < out_height; ++j) {
          const double a = tw.frac[i], b = th.frac[j];
          for (std::size_t c = 0; c < d.c; ++c) {
            const double v = dy[(i * out_height + j) * d.c + c];
            dx[(tw.lo[i] * d.h + th.lo[j]) * d.c + c] += static_cast<T>((1 - a) * (1 - b) * v);
            dx[(tw.lo[i] * d.h + th.hi[j]) * d.c + c] += static_cast<T>((1 - a) * b * v);
            dx[(tw.hi[i] * d.h + th.lo[j]) * d.c + c] += static_cast<T>(a * (1 - b) * v);
            dx[(tw.hi[i] * d.h + th.hi[j]) * d.c + c] += static_cast<T>(a * b * v);
          }
        }
    }
  });
}

template <class T>
Var<T> rgb_to_ycrcb(const Var<T>& video) {
  return color_affine(video, kToYCrCb, 0.5, {0.5, 0.5, 0.5}, 1.0, kOffset);
}

template <class T>
Var<T> ycrcb_to_rgb(const Var<T>& video) {
  // rgb = 2 * Minv * (ycc - offset) - 1 = 2 * Minv * ycc + (-2 * Minv * offset - 1)
  const auto& inv = from_ycrcb();
  std::array<double, 3> shift{};
  for (int r = 0; r < 3; ++r) shift[r] = -2.0 * (inv[r][1] * kOffset[1] + inv[r][2] * kOffset[2]) - 1.0;
  return color_affine(video, inv, 1.0, {0.0, 0.0, 0.0}, 2.0, shift);
}

template <class T>
Tensor<T> dct3(const Tensor<T>& video) {
  return transform3(video, false);
}

template <class T>
Tensor<T> idct3(const Tensor<T>& coefficients) {
  return transform3(coefficients, true);
}

std::vector<std::uint8_t> frequency_keep_mask(std::size_t t, std::size_t w, std::size_t h, double drop_fraction) {
  require(drop_fraction >= 0 && drop_fraction <= 1, "drop fraction must lie in [0, 1]");
  const std::size_t volume = t * w * h;
  std::vector<std::uint8_t> keep(volume, 1);
  const auto drop = static_cast<std::size_t>(std::floor(drop_fraction * double(volume)));
  if (drop == 0) return keep;
  // Integer numerator of u/T + v/W + w/H over the common denominator T*W*H.
  std::vector<std::uint64_t> score(volume);
  for (std::size_t u = 0; u < t; ++u)
    for (std::size_t v = 0; v < w; ++v)
      for (std::size_t z = 0; z < h; ++z) score[(u * w + v) * h + z] = u * w * h + v * t * h + z * t * w;
  std::vector<std::size_t> order(volume);
  std::iota(order.begin(), order.end(), 0);
  // Position index order equals lexicographic (u, v, w) order.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score[a] != score[b] ? score[a] > score[b] : a > b;
  });
  for (std::size_t i = 0; i < drop; ++i) keep[order[i]] = 0;
  return keep;
}

template <class T>
Var<T> dct_lowpass(const Var<T>& video, const std::vector<std::uint8_t>& keep) {
  // The projection is symmetric, so it is its own adjoint.
  return make_op<T>(lowpass_values(video.value(), keep), {video}, [keep](Node<T>& n) {
    const Tensor<T> back = lowpass_values(n.grad, keep);
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
  });
}

template <class T>
Var<T> dct_compress(const Var<T>& video, double drop_fraction) {
  const Dims d = dims_of(video.shape());
  const auto keep = frequency_keep_mask(d.t, d.w, d.h, drop_fraction);
  const Var<T> filtered = dct_lowpass(rgb_to_ycrcb(video), keep);
  return ops::clamp(ycrcb_to_rgb(filtered), T{-1}, T{1});
}

template <class T>
Var<T> apply_noise(const Var<T>& video, const NoiseDraw& draw) {
  Var<T> x = video;
  if (draw.crop) x = crop(x, *draw.crop);
  if (draw.scaled_size) x = resize_bilinear(x, draw.scaled_size->first, draw.scaled_size->second);
  if (draw.drop_fraction) x = dct_compress(x, *draw.drop_fraction);
  return x;
}

NoisePipeline::NoisePipeline(NoiseConfig cfg) : cfg_(cfg) { cfg_.validate(); }

NoiseDraw NoisePipeline::next_draw(std::size_t width, std::size_t height) {
  Rng rng(mix_seed(cfg_.seed, calls_++));
  return draw_noise(cfg_, width, height, rng);
}

#define ATTNMARK_INSTANTIATE(T)                                                \
  template Var<T> crop(const Var<T>&, const CropWindow&);                      \
  template Var<T> resize_bilinear(const Var<T>&, std::size_t, std::size_t);    \
  template Var<T> rgb_to_ycrcb(const Var<T>&);                                 \
  template Var<T> ycrcb_to_rgb(const Var<T>&);                                 \
  template Tensor<T> dct3(const Tensor<T>&);                                   \
  template Tensor<T> idct3(const Tensor<T>&);                                  \
  template Var<T> dct_lowpass(const Var<T>&, const std::vector<std::uint8_t>&); \
  template Var<T> dct_compress(const Var<T>&, double);                         \
  template Var<T> apply_noise(const Var<T>&, const NoiseDraw&);

ATTNMARK_INSTANTIATE(float)
ATTNMARK_INSTANTIATE(double)
#undef ATTNMARK_INSTANTIATE

}  // namespace attnmark::noise
