#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "attnmark/ops.hpp"
#include "attnmark/rng.hpp"
#include "attnmark/types.hpp"

namespace testing {

using attnmark::Rng;
using attnmark::Shape;
using attnmark::Tensor;
using attnmark::Var;

template <class T = double>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline attnmark::VideoClip random_clip(std::size_t t, std::size_t w, std::size_t h, Rng& rng) {
  return attnmark::VideoClip(random_tensor<float>(Shape{t, w, h, 3}, rng, -0.9, 0.9));
}

template <class T>
Var<T> leaf(Tensor<T> value) {
  return Var<T>(std::move(value), true);
}

/// Scalar probe sum(y * r) / n with a fixed random r, so every output entry
/// carries a distinct weight into the gradient.
template <class T>
Var<T> probe(const Var<T>& y, std::uint64_t seed = 77) {
  Rng rng(seed);
  return attnmark::ops::mean_all(attnmark::ops::mul(y, Var<T>(random_tensor<T>(y.value().shape(), rng))));
}

struct GradReport {
  double max_rel = 0;
  std::string worst;
};

/// Backward pass against central differences. `loss` rebuilds the graph from
/// the current leaf values. At most `samples` entries per leaf are checked
/// (0 = all).
inline GradReport gradient_error(std::vector<std::pair<std::string, Var<double>>> leaves,
                                 const std::function<Var<double>()>& loss, std::size_t samples = 0,
                                 double step = 1e-4) {
  for (auto& [name, v] : leaves) v.zero_grad();
  attnmark::backward(loss());
  GradReport report;
  Rng pick(5);
  for (auto& [name, v] : leaves) {
    const Tensor<double> analytic = v.has_grad() ? v.grad() : Tensor<double>(v.value().shape());
    Tensor<double>& x = v.mutable_value();
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (samples && idx.size() > samples) {
      for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[pick.below(i)]);
      idx.resize(samples);
    }
    for (std::size_t i : idx) {
      const double orig = x[i];
      x[i] = orig + step;
      const double up = loss().value()[0];
      x[i] = orig - step;
      const double down = loss().value()[0];
      x[i] = orig;
      const double numeric = (up - down) / (2 * step);
      const double rel = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      if (rel > report.max_rel) {
        report.max_rel = rel;
        report.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) + " numeric " +
                       std::to_string(numeric);
      }
    }
  }
  return report;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)));
    path_ = std::filesystem::temp_directory_path() / ("attnmark_" + tag + "_" + std::to_string(rng.next() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
