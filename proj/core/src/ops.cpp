#include "attnmark/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "blas.hpp"

namespace attnmark::ops {
namespace {

template <class T>
bool wants(const Node<T>& node, std::size_t i) {
  return node.parents[i]->requires_grad;
}

template <class T>
Tensor<T>& grad_of(Node<T>& node, std::size_t i) {
  return node.parents[i]->ensure_grad();
}

template <class T>
const Tensor<T>& value_of(const Node<T>& node, std::size_t i) {
  return node.parents[i]->value;
}

template <class T>
void same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

// Leading batch count for a per-sample vector attached to x.
template <class T>
std::size_t batch_of(const Var<T>& x) {
  return x.value().rank() >= 5 ? x.dim(0) : 1;
}

// Copies the K x K x Cin receptive field of every pixel of one frame into a
// (W*H) x (K*K*Cin) matrix.
template <class T>
void im2col(const T* frame, std::size_t width, std::size_t height, std::size_t channels, T* cols) {
  const std::size_t k = kKernel;
  const std::size_t row_len = k * k * channels;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kPad);
  for (std::size_t i = 0; i < width; ++i) {
    for (std::size_t j = 0; j < height; ++j) {
      T* row = cols + (i * height + j) * row_len;
      for (std::size_t ki = 0; ki < k; ++ki) {
        T* dst = row + ki * k * channels;
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + ki) - pad;
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(width)) {
          std::fill(dst, dst + k * channels, T{0});
          continue;
        }
        const std::ptrdiff_t j0 = static_cast<std::ptrdiff_t>(j) - pad;
        const std::size_t kj_lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -j0));
        const std::size_t kj_hi =
            static_cast<std::size_t>(std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(height) - j0));
        std::fill(dst, dst + kj_lo * channels, T{0});
        if (kj_hi > kj_lo) {
          const T* src = frame + (static_cast<std::size_t>(si) * height + static_cast<std::size_t>(j0 + kj_lo)) * channels;
          std::memcpy(dst + kj_lo * channels, src, (kj_hi - kj_lo) * channels * sizeof(T));
        }
        std::fill(dst + std::max(kj_hi, kj_lo) * channels, dst + k * channels, T{0});
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the frame.
template <class T>
void col2im_add(const T* cols, std::size_t width, std::size_t height, std::size_t channels, T* frame) {
  const std::size_t k = kKernel;
  const std::size_t row_len = k * k * channels;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kPad);
  for (std::size_t i = 0; i < width; ++i) {
    for (std::size_t j = 0; j < height; ++j) {
      const T* row = cols + (i * height + j) * row_len;
      for (std::size_t ki = 0; ki < k; ++ki) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + ki) - pad;
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(width)) continue;
        const std::ptrdiff_t j0 = static_cast<std::ptrdiff_t>(j) - pad;
        const std::size_t kj_lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -j0));
        const std::size_t kj_hi =
            static_cast<std::size_t>(std::min<std::ptrdiff_t>(k, static_cast<std::ptrdiff_t>(height) - j0));
        if (kj_hi <= kj_lo) continue;
        const T* src = row + (ki * k + kj_lo) * channels;
        T* dst = frame + (static_cast<std::size_t>(si) * height + static_cast<std::size_t>(j0 + kj_lo)) * channels;
        const std::size_t n = (kj_hi - kj_lo) * channels;
        for (std::size_t q = 0; q < n; ++q) dst[q] += src[q];
      }
    }
  }
}

}  // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(n, p)) continue;
      auto& g = grad_of(n, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(n, p)) continue;
      auto& g = grad_of(n, p);
      const auto& other = value_of(n, 1 - p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * other[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_op<T>(std::move(out), {a}, [factor](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * factor;
  });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return make_op<T>(std::move(out), {a}, [](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (T{1} - n.value[i] * n.value[i]);
  });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return make_op<T>(std::move(out), {a}, [lo, hi](Node<T>& n) {
    auto& g = grad_of(n, 0);
    const auto& x = value_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] >= lo && x[i] <= hi) g[i] += n.grad[i];
  });
}

template <class T>
Var<T> softmax_last(const Var<T>& x) {
  const std::size_t d = x.value().last();
  const std::size_t rows = x.value().rows();
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data() + r * d;
    const T peak = *std::max_element(row, row + d);
    T total{0};
    for (std::size_t i = 0; i < d; ++i) total += (row[i] = std::exp(row[i] - peak));
    for (std::size_t i = 0; i < d; ++i) row[i] /= total;
  }
  return make_op<T>(std::move(out), {x}, [d, rows](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * d;
      const T* dy = n.grad.data() + r * d;
      T dot{0};
      for (std::size_t i = 0; i < d; ++i) dot += dy[i] * y[i];
      T* dx = g.data() + r * d;
      for (std::size_t i = 0; i < d; ++i) dx[i] += y[i] * (dy[i] - dot);
    }
  });
}

template <class T>
Var<T> concat_last(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.rank() == bv.rank() && av.rows() == bv.rows() &&
              std::equal(av.shape().begin(), av.shape().end() - 1, bv.shape().begin()),
          "concat_last: leading shapes differ " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  const std::size_t da = av.last(), db = bv.last(), rows = av.rows();
  Shape shape = av.shape();
  shape.back() = da + db;
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(bv.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  return make_op<T>(std::move(out), {a, b}, [da, db, rows](Node<T>& n) {
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < da; ++i) g[r * da + i] += n.grad[r * (da + db) + i];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < db; ++i) g[r * db + i] += n.grad[r * (da + db) + da + i];
    }
  });
}

template <class T>
Var<T> concat_broadcast(const Var<T>& x, const Var<T>& y) {
  const auto& xv = x.value();
  const auto& yv = y.value();
  const std::size_t batch = batch_of(x);
  const std::size_t dv = yv.last();
  const bool shared = yv.rank() == 1;
  require(shared || (yv.rank() == 2 && yv.dim(0) == batch), "concat_broadcast: vector batch does not match tensor");
  const std::size_t dp = xv.last();
  const std::size_t rows = xv.rows();
  const std::size_t per_sample = rows / batch;
  Shape shape = xv.shape();
  shape.back() = dp + dv;
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t b = shared ? 0 : r / per_sample;
    std::copy_n(xv.data() + r * dp, dp, out.data() + r * (dp + dv));
    std::copy_n(yv.data() + b * dv, dv, out.data() + r * (dp + dv) + dp);
  }
  return make_op<T>(std::move(out), {x, y}, [dp, dv, rows, per_sample, shared](Node<T>& n) {
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < dp; ++i) g[r * dp + i] += n.grad[r * (dp + dv) + i];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t b = shared ? 0 : r / per_sample;
        for (std::size_t i = 0; i < dv; ++i) g[b * dv + i] += n.grad[r * (dp + dv) + dp + i];
      }
    }
  });
}

template <class T>
Var<T> channel_dot(const Var<T>& x, const Var<T>& v) {
  const auto& xv = x.value();
  const auto& vv = v.value();
  const std::size_t batch = batch_of(x);
  const std::size_t d = xv.last();
  const bool shared = vv.rank() == 1;
  require(vv.last() == d, "channel_dot: width mismatch " + std::to_string(vv.last()) + " vs " + std::to_string(d));
  require(shared || (vv.rank() == 2 && vv.dim(0) == batch), "channel_dot: vector batch does not match tensor");
  const std::size_t rows = xv.rows();
  const std::size_t per_sample = rows / batch;
  Shape shape = xv.shape();
  shape.back() = 1;
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* vb = vv.data() + (shared ? 0 : r / per_sample) * d;
    const T* row = xv.data() + r * d;
    T acc{0};
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * vb[i];
    out[r] = acc;
  }
  return make_op<T>(std::move(out), {x, v}, [d, rows, per_sample, shared](Node<T>& n) {
    const auto& xv = value_of(n, 0);
    const auto& vv = value_of(n, 1);
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* vb = vv.data() + (shared ? 0 : r / per_sample) * d;
        for (std::size_t i = 0; i < d; ++i) g[r * d + i] += n.grad[r] * vb[i];
      }
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        T* gb = g.data() + (shared ? 0 : r / per_sample) * d;
        for (std::size_t i = 0; i < d; ++i) gb[i] += n.grad[r] * xv[r * d + i];
      }
    }
  });
}

template <class T>
Var<T> mean_pool(const Var<T>& x) {
  const auto& xv = x.value();
  require(xv.rank() >= 2, "mean_pool: rank must be at least 2");
  const bool batched = xv.rank() >= 5;
  const std::size_t batch = batched ? xv.dim(0) : 1;
  const std::size_t c = xv.last();
  const std::size_t per_sample = xv.rows() / batch;
  Tensor<T> out(batched ? Shape{batch, c} : Shape{c});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<T> acc(c, T{0});
    for (std::size_t r = 0; r < per_sample; ++r) {
      const T* row = xv.data() + (b * per_sample + r) * c;
      for (std::size_t i = 0; i < c; ++i) acc[i] += row[i];
    }
    for (std::size_t i = 0; i < c; ++i) out[b * c + i] = acc[i] / static_cast<T>(per_sample);
  }
  return make_op<T>(std::move(out), {x}, [batch, c, per_sample](Node<T>& n) {
    auto& g = grad_of(n, 0);
    const T inv = T{1} / static_cast<T>(per_sample);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t r = 0; r < per_sample; ++r)
        for (std::size_t i = 0; i < c; ++i) g[(b * per_sample + r) * c + i] += n.grad[b * c + i] * inv;
  });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  require(wv.rank() == 2 && xv.last() == wv.dim(0),
          "linear: input depth " + std::to_string(xv.last()) + " does not match weight " + shape_string(wv.shape()));
  const std::size_t in = wv.dim(0), outd = wv.dim(1), rows = xv.rows();
  require(bias.value().size() == outd, "linear: bias width mismatch");
  Shape shape = xv.shape();
  shape.back() = outd;
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(bias.value().data(), outd, out.data() + r * outd);
  detail::gemm(false, false, int(rows), int(outd), int(in), T{1}, xv.data(), int(in), wv.data(), int(outd), T{1},
               out.data(), int(outd));
  return make_op<T>(std::move(out), {x, weight, bias}, [in, outd, rows](Node<T>& n) {
    if (wants(n, 0))
      detail::gemm(false, true, int(rows), int(in), int(outd), T{1}, n.grad.data(), int(outd),
                   value_of(n, 1).data(), int(outd), T{1}, grad_of(n, 0).data(), int(in));
    if (wants(n, 1))
      detail::gemm(true, false, int(in), int(outd), int(rows), T{1}, value_of(n, 0).data(), int(in), n.grad.data(),
                   int(outd), T{1}, grad_of(n, 1).data(), int(outd));
    if (wants(n, 2)) {
      auto& g = grad_of(n, 2);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < outd; ++o) g[o] += n.grad[r * outd + o];
    }
  });
}

template <class T>
Var<T> conv2d_same(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  require(xv.rank() == 5, "conv2d_same: expected (B,T,W,H,C) input, got " + shape_string(xv.shape()));
  require(wv.rank() == 4 && wv.dim(0) == kKernel && wv.dim(1) == kKernel,
          "conv2d_same: weight must be (K,K,Cin,Cout) with K=11");
  const std::size_t cin = xv.dim(4);
  require(wv.dim(2) == cin, "conv2d_same: input depth " + std::to_string(cin) + " does not match weight depth " +
                                std::to_string(wv.dim(2)));
  const std::size_t cout = wv.dim(3);
  require(bias.value().size() == cout, "conv2d_same: bias width mismatch");
  const std::size_t frames = xv.dim(0) * xv.dim(1), width = xv.dim(2), height = xv.dim(3);
  const std::size_t pixels = width * height, row_len = kKernel * kKernel * cin;

  Shape shape = xv.shape();
  shape[4] = cout;
  Tensor<T> out(shape);
  std::vector<T> cols(pixels * row_len);
  for (std::size_t f = 0; f < frames; ++f) {
    im2col(xv.data() + f * pixels * cin, width, height, cin, cols.data());
    T* yf = out.data() + f * pixels * cout;
    for (std::size_t p = 0; p < pixels; ++p) std::copy_n(bias.value().data(), cout, yf + p * cout);
    detail::gemm(false, false, int(pixels), int(cout), int(row_len), T{1}, cols.data(), int(row_len), wv.data(),
                 int(cout), T{1}, yf, int(cout));
  }
  return make_op<T>(std::move(out), {x, weight, bias}, [=](Node<T>& n) {
    const auto& xv = value_of(n, 0);
    const auto& wv = value_of(n, 1);
    std::vector<T> cols(pixels * row_len);
    for (std::size_t f = 0; f < frames; ++f) {
      const T* dy = n.grad.data() + f * pixels * cout;
      if (wants(n, 1)) {
        im2col(xv.data() + f * pixels * cin, width, height, cin, cols.data());
        detail::gemm(true, false, int(row_len), int(cout), int(pixels), T{1}, cols.data(), int(row_len), dy, int(cout),
                     T{1}, grad_of(n, 1).data(), int(cout));
      }
      if (wants(n, 2)) {
        auto& g = grad_of(n, 2);
        for (std::size_t p = 0; p < pixels; ++p)
          for (std::size_t o = 0; o < cout; ++o) g[o] += dy[p * cout + o];
      }
      if (wants(n, 0)) {
        detail::gemm(false, true, int(pixels), int(row_len), int(cout), T{1}, dy, int(cout), wv.data(), int(cout),
                     T{0}, cols.data(), int(row_len));
        col2im_add(cols.data(), width, height, cin, grad_of(n, 0).data() + f * pixels * cin);
      }
    }
  });
}

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps) {
  const auto& xv = x.value();
  const std::size_t c = xv.last(), rows = xv.rows();
  require(gamma.value().size() == c && beta.value().size() == c && running_mean.size() == c &&
              running_var.size() == c,
          "batch_norm: channel count mismatch");
  std::vector<T> mean(c, T{0}), inv_std(c, T{0});
  if (training) {
    std::vector<T> var(c, T{0});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < c; ++i) mean[i] += xv[r * c + i];
    for (auto& m : mean) m /= static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < c; ++i) {
        const T d = xv[r * c + i] - mean[i];
        var[i] += d * d;
      }
    for (std::size_t i = 0; i < c; ++i) {
      var[i] /= static_cast<T>(rows);
      inv_std[i] = T{1} / std::sqrt(var[i] + eps);
      const T unbiased = rows > 1 ? var[i] * static_cast<T>(rows) / static_cast<T>(rows - 1) : var[i];
      running_mean[i] = (T{1} - momentum) * running_mean[i] + momentum * mean[i];
      running_var[i] = (T{1} - momentum) * running_var[i] + momentum * unbiased;
    }
  } else {
    for (std::size_t i = 0; i < c; ++i) {
      mean[i] = running_mean[i];
      inv_std[i] = T{1} / std::sqrt(running_var[i] + eps);
    }
  }
  Tensor<T> normalized(xv.shape());
  Tensor<T> out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < c; ++i) {
      const std::size_t k = r * c + i;
      normalized[k] = (xv[k] - mean[i]) * inv_std[i];
      out[k] = gv[i] * normalized[k] + bv[i];
    }
  return make_op<T>(std::move(out), {x, gamma, beta},
                    [c, rows, training, inv_std, xhat = std::move(normalized)](Node<T>& n) {
                      std::vector<T> sum_dy(c, T{0}), sum_dy_xhat(c, T{0});
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t i = 0; i < c; ++i) {
                          sum_dy[i] += n.grad[r * c + i];
                          sum_dy_xhat[i] += n.grad[r * c + i] * xhat[r * c + i];
                        }
                      if (wants(n, 1)) {
                        auto& g = grad_of(n, 1);
                        for (std::size_t i = 0; i < c; ++i) g[i] += sum_dy_xhat[i];
                      }
                      if (wants(n, 2)) {
                        auto& g = grad_of(n, 2);
                        for (std::size_t i = 0; i < c; ++i) g[i] += sum_dy[i];
                      }
                      if (!wants(n, 0)) return;
                      auto& g = grad_of(n, 0);
                      const auto& gv = value_of(n, 1);
                      const T inv_rows = T{1} / static_cast<T>(rows);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t i = 0; i < c; ++i) {
                          const std::size_t k = r * c + i;
                          const T scale = gv[i] * inv_std[i];
                          if (training)
                            g[k] += scale * (n.grad[k] - sum_dy[i] * inv_rows - xhat[k] * sum_dy_xhat[i] * inv_rows);
                          else
                            g[k] += scale * n.grad[k];
                        }
                    });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
  T total{0};
  for (T v : x.value().values()) total += v;
  const std::size_t count = x.value().size();
  Tensor<T> out(Shape{1}, total / static_cast<T>(count));
  return make_op<T>(std::move(out), {x}, [count](Node<T>& n) {
    auto& g = grad_of(n, 0);
    const T share = n.grad[0] / static_cast<T>(count);
    for (auto& v : g.values()) v += share;
  });
}

template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets) {
  require(logits.shape() == targets.shape(), "message_loss: width mismatch " + shape_string(logits.shape()) + " vs " +
                                                 shape_string(targets.shape()));
  const auto& z = logits.value();
  T total{0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T softplus = std::max(z[i], T{0}) + std::log1p(std::exp(-std::abs(z[i])));
    total += softplus - targets[i] * z[i];
  }
  const std::size_t count = z.size();
  Tensor<T> out(Shape{1}, total / static_cast<T>(count));
  return make_op<T>(std::move(out), {logits}, [count, targets](Node<T>& n) {
    auto& g = grad_of(n, 0);
    const auto& z = value_of(n, 0);
    const T share = n.grad[0] / static_cast<T>(count);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const T sigmoid = T{1} / (T{1} + std::exp(-z[i]));
      g[i] += share * (sigmoid - targets[i]);
    }
  });
}

template <class T>
Var<T> straight_through(const Var<T>& x, Tensor<T> replacement) {
  require(replacement.shape() == x.shape(), "straight_through: replacement must keep the shape");
  return make_op<T>(std::move(replacement), {x}, [](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

template <class T>
Var<T> as_batch(const Var<T>& x) {
  if (x.value().rank() == 5) return x;
  require(x.value().rank() == 4, "as_batch: expected (T,W,H,C) or (B,T,W,H,C)");
  Shape shape = x.shape();
  shape.insert(shape.begin(), 1);
  return make_op<T>(x.value().reshaped(shape), {x}, [](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

template <class T>
Var<T> concat_batch(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.rank() >= 1 && av.rank() == bv.rank() && std::equal(av.shape().begin() + 1, av.shape().end(),
                                                                   bv.shape().begin() + 1),
          "concat_batch: shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Shape shape = av.shape();
  shape[0] += bv.dim(0);
  std::vector<T> data(av.values().begin(), av.values().end());
  data.insert(data.end(), bv.values().begin(), bv.values().end());
  const std::size_t split = av.size();
  return make_op<T>(Tensor<T>(shape, std::move(data)), {a, b}, [split](Node<T>& n) {
    if (wants(n, 0)) {
      auto& g = grad_of(n, 0);
      for (std::size_t i = 0; i < split; ++i) g[i] += n.grad[i];
    }
    if (wants(n, 1)) {
      auto& g = grad_of(n, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[split + i];
    }
  });
}

template <class T>
Var<T> slice_batch(const Var<T>& x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  require(xv.rank() >= 1 && begin < end && end <= xv.dim(0), "slice_batch: bad range");
  const std::size_t per = xv.size() / xv.dim(0);
  Shape shape = xv.shape();
  shape[0] = end - begin;
  std::vector<T> data(xv.data() + begin * per, xv.data() + end * per);
  const std::size_t offset = begin * per;
  return make_op<T>(Tensor<T>(shape, std::move(data)), {x}, [offset](Node<T>& n) {
    auto& g = grad_of(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[offset + i] += n.grad[i];
  });
}

#define ATTNMARK_INSTANTIATE(T)                                                                                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> scale(const Var<T>&, T);                                                                     \
  template Var<T> tanh(const Var<T>&);                                                                         \
  template Var<T> clamp(const Var<T>&, T, T);                                                                  \
  template Var<T> softmax_last(const Var<T>&);                                                                 \
  template Var<T> concat_last(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> concat_broadcast(const Var<T>&, const Var<T>&);                                              \
  template Var<T> channel_dot(const Var<T>&, const Var<T>&);                                                   \
  template Var<T> mean_pool(const Var<T>&);                                                                    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                         \
  template Var<T> conv2d_same(const Var<T>&, const Var<T>&, const Var<T>&);                                    \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, T, T); \
  template Var<T> mean_all(const Var<T>&);                                                                     \
  template Var<T> bce_with_logits(const Var<T>&, const Tensor<T>&);                                            \
  template Var<T> straight_through(const Var<T>&, Tensor<T>);                                                  \
  template Var<T> as_batch(const Var<T>&);                                                                     \
  template Var<T> concat_batch(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> slice_batch(const Var<T>&, std::size_t, std::size_t);

ATTNMARK_INSTANTIATE(float)
ATTNMARK_INSTANTIATE(double)
#undef ATTNMARK_INSTANTIATE

}  // namespace attnmark::ops
