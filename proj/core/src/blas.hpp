#pragma once

#include <Eigen/Core>

namespace attnmark::detail {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb, T beta,
          T* c, int ldc) {
  using Stride = Eigen::OuterStride<>;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat, 0, Stride>;
  Eigen::Map<Mat, 0, Stride> out(c, m, n, Stride(ldc));
  const ConstMap a_map(a, trans_a ? k : m, trans_a ? m : k, Stride(lda));
  const ConstMap b_map(b, trans_b ? n : k, trans_b ? k : n, Stride(ldb));
  if (beta == T{0}) {
    out.setZero();
  } else if (beta != T{1}) {
    out *= beta;
  }
  if (!trans_a && !trans_b) out.noalias() += alpha * a_map * b_map;
  if (!trans_a && trans_b) out.noalias() += alpha * a_map * b_map.transpose();
  if (trans_a && !trans_b) out.noalias() += alpha * a_map.transpose() * b_map;
  if (trans_a && trans_b) out.noalias() += alpha * a_map.transpose() * b_map.transpose();
}

}  // namespace attnmark::detail
