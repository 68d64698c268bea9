#include "attnmark/layers.hpp"

#include <cmath>

namespace attnmark {

template <class T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> out(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : out.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return out;
}

template <class T>
ConvBlock<T>::ConvBlock(std::size_t in_depth, std::size_t out_depth, Rng& rng, bool plain)
    : in_(in_depth), out_(out_depth), plain_(plain) {
  const std::size_t k = ops::kKernel;
  weight = Var<T>(uniform_init<T>(Shape{k, k, in_depth, out_depth}, k * k * in_depth, rng), true);
  bias = Var<T>(Tensor<T>(Shape{out_depth}), true);
  if (!plain_) {
    gamma = Var<T>(Tensor<T>(Shape{out_depth}, T{1}), true);
    beta = Var<T>(Tensor<T>(Shape{out_depth}), true);
    running_mean = Tensor<T>(Shape{out_depth});
    running_var = Tensor<T>(Shape{out_depth}, T{1});
  }
}

template <class T>
Var<T> ConvBlock<T>::forward(const Var<T>& x, bool training) {
  require(x.value().rank() == 5 && x.dim(4) == in_,
          "conv block expects depth " + std::to_string(in_) + ", got " + shape_string(x.shape()));
  Var<T> y = ops::conv2d_same(x, weight, bias);
  if (plain_) return y;
  y = ops::tanh(y);
  return ops::batch_norm(y, gamma, beta, running_mean, running_var, training, static_cast<T>(kBatchNormMomentum),
                         static_cast<T>(kBatchNormEps));
}

template <class T>
void ConvBlock<T>::collect(const std::string& prefix, std::vector<NamedParam<T>>& params,
                           std::vector<NamedBuffer<T>>& buffers) {
  params.push_back({prefix + ".weight", weight});
  params.push_back({prefix + ".bias", bias});
  if (plain_) return;
  params.push_back({prefix + ".gamma", gamma});
  params.push_back({prefix + ".beta", beta});
  buffers.push_back({prefix + ".running_mean", &running_mean});
  buffers.push_back({prefix + ".running_var", &running_var});
}

template <class T>
Linear<T>::Linear(std::size_t in_depth, std::size_t out_depth, Rng& rng) {
  weight = Var<T>(uniform_init<T>(Shape{in_depth, out_depth}, in_depth, rng), true);
  bias = Var<T>(Tensor<T>(Shape{out_depth}), true);
}

template <class T>
void Linear<T>::collect(const std::string& prefix, std::vector<NamedParam<T>>& params) {
  params.push_back({prefix + ".weight", weight});
  params.push_back({prefix + ".bias", bias});
}

template class ConvBlock<float>;
template class ConvBlock<double>;
template class Linear<float>;
template class Linear<double>;
template Tensor<float> uniform_init<float>(Shape, std::size_t, Rng&);
template Tensor<double> uniform_init<double>(Shape, std::size_t, Rng&);

}  // namespace attnmark
