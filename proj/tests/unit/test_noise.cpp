#include <doctest.h>

#include <cmath>

#include "attnmark/evaluation.hpp"
#include "attnmark/media.hpp"
#include "attnmark/noise.hpp"
#include "support.hpp"

using namespace attnmark;
using namespace attnmark::noise;
using testing::gradient_error;
using testing::leaf;
using testing::probe;
using testing::random_tensor;

TEST_CASE("scale factor one is the identity and constants stay constant") {
  Rng rng(1);
  const Var<double> v(random_tensor(Shape{2, 3, 16, 20, 3}, rng));
  CHECK(max_abs_diff(resize_bilinear(v, 16, 20).value(), v.value()) < 1e-15);

  const Var<double> flat(Tensor<double>(Shape{1, 2, 16, 16, 3}, 0.37));
  for (auto [w, h] : {std::pair{13, 16}, std::pair{16, 12}, std::pair{9, 23}}) {
    const Tensor<double> out = resize_bilinear(flat, w, h).value();
    CHECK(out.shape() == Shape{1, 2, std::size_t(w), std::size_t(h), 3});
    for (double x : out.values()) CHECK(x == doctest::Approx(0.37).epsilon(1e-12));
  }
}

TEST_CASE("scale draws keep 64x64 inside [51, 64] with independent axes") {
  NoiseConfig cfg = NoiseConfig::none();
  cfg.scale = true;
  Rng rng(2);
  bool differs = false;
  for (int i = 0; i < 200; ++i) {
    const NoiseDraw d = draw_noise(cfg, 64, 64, rng);
    REQUIRE(d.scaled_size);
    auto [w, h] = *d.scaled_size;
    CHECK(w >= 51);
    CHECK(w <= 64);
    CHECK(h >= 51);
    CHECK(h <= 64);
    differs = differs || w != h;
  }
  CHECK(differs);
}

TEST_CASE("crop copies source pixels and is a projection") {
  Rng rng(3);
  const Var<double> v(random_tensor(Shape{1, 2, 20, 18, 3}, rng));
  const CropWindow full{0, 0, 20, 18};
  CHECK(crop(v, full).value() == v.value());

  const CropWindow win{3, 5, 12, 9};
  const Tensor<double> out = crop(v, win).value();
  REQUIRE(out.shape() == Shape{1, 2, 12, 9, 3});
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t w = 0; w < 12; ++w)
      for (std::size_t h = 0; h < 9; ++h)
        for (std::size_t c = 0; c < 3; ++c)
          CHECK(out[((t * 12 + w) * 9 + h) * 3 + c] == v.value()[((t * 20 + w + 3) * 18 + h + 5) * 3 + c]);

  const CropWindow inner{0, 0, 12, 9};
  CHECK(crop(Var<double>(out), inner).value() == out);
}

TEST_CASE("crop window sides follow the area rule") {
  Rng rng(4);
  const CropWindow w = crop_window_for_area(64, 64, 0.8, rng);
  CHECK(w.width == 58);
  CHECK(w.height == 58);
  CHECK(w.offset_w + w.width <= 64);
  CHECK(w.offset_h + w.height <= 64);
  const CropWindow full = crop_window_for_area(64, 48, 1.0, rng);
  CHECK(full.width == 64);
  CHECK(full.height == 48);
  CHECK(full.offset_w == 0);
  const CropWindow c = centered_crop_window(64, 64, 0.8);
  CHECK(c.offset_w == 3);
  CHECK(c.offset_h == 3);
}

TEST_CASE("YCrCb conversion examples") {
  const Var<double> black(Tensor<double>(Shape{1, 1, 1, 3}, -1.0));
  const Tensor<double> y = rgb_to_ycrcb(black).value();
  CHECK(std::abs(y[0]) < 1e-12);
  CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const double g = rng.uniform(-1, 1);
    const Tensor<double> gray = rgb_to_ycrcb(Var<double>(Tensor<double>(Shape{1, 1, 1, 3}, g))).value();
    CHECK(std::abs(gray[1] - 0.5) < 1e-12);
    CHECK(std::abs(gray[2] - 0.5) < 1e-12);
  }

  const Var<float> v(random_tensor<float>(Shape{2, 4, 8, 8, 3}, rng));
  CHECK(max_abs_diff(ycrcb_to_rgb(rgb_to_ycrcb(v)).value(), v.value()) <= 1e-5f);
}

TEST_CASE("3-D DCT is orthonormal") {
  Rng rng(6);
  const Tensor<double> v = random_tensor(Shape{1, 8, 16, 16, 3}, rng);
  const Tensor<double> c = dct3(v);
  CHECK(max_abs_diff(idct3(c), v) <= 1e-5);
  double energy_v = 0, energy_c = 0;
  for (double x : v.values()) energy_v += x * x;
  for (double x : c.values()) energy_c += x * x;
  CHECK(std::abs(energy_c - energy_v) <= 1e-4 * energy_v);

  const Tensor<float> vf = random_tensor<float>(Shape{3, 5, 7, 3}, rng);
  CHECK(max_abs_diff(idct3(dct3(vf)), vf) <= 1e-5f);
}

TEST_CASE("3-D DCT matches the direct formula") {
  Rng rng(7);
  const std::size_t T = 3, W = 4, H = 5;
  const Tensor<double> v = random_tensor(Shape{T, W, H, 1}, rng);
  const Tensor<double> c = dct3(v);
  const double pi = std::acos(-1.0);
  auto alpha = [](std::size_t k, std::size_t n) { return k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n); };
  for (std::size_t u = 0; u < T; ++u)
    for (std::size_t p = 0; p < W; ++p)
      for (std::size_t q = 0; q < H; ++q) {
        double acc = 0;
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t w = 0; w < W; ++w)
            for (std::size_t h = 0; h < H; ++h)
              acc += v[(t * W + w) * H + h] * std::cos(pi * (t + 0.5) * u / T) * std::cos(pi * (w + 0.5) * p / W) *
                     std::cos(pi * (h + 0.5) * q / H);
        acc *= alpha(u, T) * alpha(p, W) * alpha(q, H);
        CHECK(std::abs(acc - c[(u * W + p) * H + q]) < 1e-12);
      }
}

TEST_CASE("frequency mask drops the highest scores with lexicographic ties") {
  // 2x2x2 volume: scores are (u + v + w) / 2; dropping 1/8 removes (1,1,1).
  auto keep = frequency_keep_mask(2, 2, 2, 1.0 / 8);
  CHECK(std::count(keep.begin(), keep.end(), 0) == 1);
  CHECK(keep[7] == 0);
  // Next three share score 1; the lexicographically largest, (1,1,0), goes first.
  keep = frequency_keep_mask(2, 2, 2, 2.0 / 8);
  CHECK(std::count(keep.begin(), keep.end(), 0) == 2);
  CHECK(keep[6] == 0);
  CHECK(keep[5] == 1);
  keep = frequency_keep_mask(2, 2, 2, 0.0);
  CHECK(std::count(keep.begin(), keep.end(), 0) == 0);
  CHECK(frequency_keep_mask(4, 4, 4, 0.999)[0] == 1);
}

TEST_CASE("DCT compression examples") {
  Rng rng(8);
  const Var<float> v(random_tensor<float>(Shape{1, 4, 8, 8, 3}, rng, -0.9, 0.9));
  CHECK(max_abs_diff(dct_compress(v, 0.0).value(), v.value()) <= 1e-5f);
  const Var<float> flat(Tensor<float>(Shape{1, 4, 8, 8, 3}, 0.25f));
  for (double p : {0.05, 0.1, 0.5, 0.9})
    CHECK(max_abs_diff(dct_compress(flat, p).value(), flat.value()) <= 1e-5f);
  const Tensor<float> lossy = dct_compress(v, 0.1).value();
  CHECK(max_abs_diff(lossy, v.value()) > 1e-3f);
  for (float x : lossy.values()) CHECK(std::abs(x) <= 1.0f);
}

TEST_CASE("noise layer gradients match finite differences") {
  Rng rng(9);
  auto v = leaf(random_tensor(Shape{2, 8, 8, 3}, rng, -0.8, 0.8));
  SUBCASE("dct compress at p = 0.1") {
    const auto r = gradient_error({{"v", v}}, [&] { return probe(dct_compress(v, 0.1)); });
    CHECK_MESSAGE(r.max_rel <= 1e-3, r.worst);
  }
  SUBCASE("color conversions") {
    const auto r = gradient_error({{"v", v}}, [&] { return probe(ycrcb_to_rgb(ops::scale(rgb_to_ycrcb(v), 1.1))); });
    CHECK_MESSAGE(r.max_rel <= 1e-3, r.worst);
  }
  SUBCASE("crop and scale") {
    const auto r = gradient_error({{"v", v}}, [&] {
      return probe(resize_bilinear(crop(v, CropWindow{1, 0, 6, 7}), 5, 9));
    });
    CHECK_MESSAGE(r.max_rel <= 1e-3, r.worst);
  }
}

TEST_CASE("quantization grid") {
  for (int k = 0; k < 256; ++k) CHECK(quantize(dequantize(std::uint8_t(k))) == k);
  CHECK(quantize(-1.0f) == 0);
  CHECK(quantize(1.0f) == 255);
  Rng rng(10);
  const Tensor<float> v = random_tensor<float>(Shape{2, 8, 8, 3}, rng);
  CHECK(max_abs_diff(quantize_roundtrip(v), v) <= 1.0f / 255 + 1e-6f);
}

TEST_CASE("MJPEG round trip") {
  Rng rng(11);
  const Tensor<float> v = random_tensor<float>(Shape{2, 24, 16, 3}, rng);
  for (int q : {1, 50, 80, 100}) CHECK(mjpeg_roundtrip(v, q).shape() == v.shape());
  CHECK(mjpeg_roundtrip(v, 80, ChromaSubsampling::yuv420).shape() == v.shape());

  Tensor<float> ramp(Shape{1, 64, 64, 3});
  for (std::size_t w = 0; w < 64; ++w)
    for (std::size_t h = 0; h < 64; ++h)
      for (std::size_t c = 0; c < 3; ++c) ramp[(w * 64 + h) * 3 + c] = -0.8f + 1.6f * float(w + h) / 126 - 0.1f * c;
  const auto p = eval::psnr(ramp, mjpeg_roundtrip(ramp, 95));
  REQUIRE(p);
  MESSAGE("quality 95 smooth gradient PSNR: " << *p);
  CHECK(*p >= 35);
  CHECK_THROWS_AS(mjpeg_roundtrip(v, 0), ContractError);
}

TEST_CASE("noise pipeline composition") {
  Rng rng(12);
  const Var<float> v(random_tensor<float>(Shape{2, 2, 64, 64, 3}, rng, -0.9, 0.9));
  NoisePipeline off(NoiseConfig::none());
  CHECK(off(v).value() == v.value());

  NoiseConfig all;
  all.seed = 5;
  NoisePipeline a(all), b(all);
  for (int i = 0; i < 20; ++i) {
    const Tensor<float> x = a(v).value();
    CHECK(x.dim(2) >= 46);
    CHECK(x.dim(3) >= 46);
    CHECK(x == b(v).value());
  }
  NoiseConfig other = all;
  other.seed = 6;
  NoisePipeline c(other);
  NoisePipeline d(all);
  bool any_diff = false;
  for (int i = 0; i < 5; ++i) any_diff = any_diff || !(c(v).value() == d(v).value());
  CHECK(any_diff);
}

TEST_CASE("noise config validation") {
  NoiseConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.scale_min = 0.9;
  cfg.scale_max = 0.8;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NoiseConfig{};
  cfg.crop_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = NoiseConfig{};
  cfg.drop_max = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
