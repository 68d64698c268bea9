#pragma once

#include "attnmark/autograd.hpp"

// Differentiable tensor primitives. Video-shaped tensors are rank 5,
// (B, T, W, H, C); rank-4 (T, W, H, C) inputs are accepted where noted and
// treated as a batch of one.
namespace attnmark::ops {

inline constexpr std::size_t kKernel = 11;
inline constexpr std::size_t kPad = (kKernel - 1) / 2;

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T factor);
template <class T> Var<T> tanh(const Var<T>& a);
/// Gradient passes where the input lies inside [lo, hi].
template <class T> Var<T> clamp(const Var<T>& a, T lo, T hi);
template <class T> Var<T> neg(const Var<T>& a) { return scale(a, T{-1}); }

/// Numerically stable softmax over the last axis.
template <class T> Var<T> softmax_last(const Var<T>& x);

/// Concatenates along the last axis; leading shapes must agree.
template <class T> Var<T> concat_last(const Var<T>& a, const Var<T>& b);

/// Cat(X, Y): appends the per-sample vector y (B, Dv) to every location of
/// x (B, ..., Dp). A rank-1 y is broadcast to every sample.
template <class T> Var<T> concat_broadcast(const Var<T>& x, const Var<T>& y);

/// Per-location dot product of the last axis of x (B, ..., D) with the
/// per-sample vector v (B, D), giving (B, ..., 1).
template <class T> Var<T> channel_dot(const Var<T>& x, const Var<T>& v);

/// Mean over every axis except batch and channel: (B, ..., C) -> (B, C).
/// A rank-4 input pools to (C).
template <class T> Var<T> mean_pool(const Var<T>& x);

/// Affine map of the last axis. weight is (in, out), bias is (out).
template <class T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Per-frame K x K convolution with zero padding (K-1)/2 and stride 1.
/// x is (B, T, W, H, Cin), weight (K, K, Cin, Cout), bias (Cout).
template <class T> Var<T> conv2d_same(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Per-channel batch normalization over all leading axes. Training mode uses
/// batch statistics and updates the running estimates in place.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps);

/// Mean of all entries, shape (1).
template <class T> Var<T> mean_all(const Var<T>& x);

/// Mean over all entries of softplus(z) - m z, the stable form of binary
/// cross-entropy with logits z and targets m.
template <class T> Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets);

/// Forward value is `replacement`; the gradient is copied to x unchanged.
template <class T> Var<T> straight_through(const Var<T>& x, Tensor<T> replacement);

/// Adds a batch axis to rank-4 video tensors.
template <class T> Var<T> as_batch(const Var<T>& x);

/// Joins two tensors along the leading axis; trailing shapes must match.
template <class T> Var<T> concat_batch(const Var<T>& a, const Var<T>& b);
/// Entries [begin, end) along the leading axis.
template <class T> Var<T> slice_batch(const Var<T>& x, std::size_t begin, std::size_t end);

}  // namespace attnmark::ops
