#pragma once

#include <vector>

#include "attnmark/layers.hpp"

namespace attnmark {

/// Adam over a fixed parameter group. Parameters whose gradient was never
/// touched since the last zero_grad are skipped.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedParam<T>> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  /// Clamps every parameter into [-bound, bound].
  void clip(double bound);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const { return steps_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<Tensor<T>> first_, second_;
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t steps_ = 0;
};

}  // namespace attnmark
