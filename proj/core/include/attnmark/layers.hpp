#pragma once

#include <string>
#include <vector>

#include "attnmark/ops.hpp"
#include "attnmark/rng.hpp"

namespace attnmark {

template <class T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <class T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Conv -> tanh -> batch norm over (B, T, W, H, C) tensors, with a 1 x 11 x 11
/// kernel. A "plain" block is the bare convolution.
template <class T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(std::size_t in_depth, std::size_t out_depth, Rng& rng, bool plain = false);

  Var<T> forward(const Var<T>& x, bool training);

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& params,
               std::vector<NamedBuffer<T>>& buffers);

  std::size_t in_depth() const { return in_; }
  std::size_t out_depth() const { return out_; }
  bool plain() const { return plain_; }

  Var<T> weight;  // (K, K, in, out)
  Var<T> bias;
  Var<T> gamma;
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  bool plain_ = false;
};

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_depth, std::size_t out_depth, Rng& rng);

  Var<T> forward(const Var<T>& x) { return ops::linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& params);

  Var<T> weight;  // (in, out)
  Var<T> bias;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <class T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace attnmark
