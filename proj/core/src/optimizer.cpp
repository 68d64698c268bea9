#include "attnmark/optimizer.hpp"

#include <cmath>

namespace attnmark {

template <class T>
Adam<T>::Adam(std::vector<NamedParam<T>> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    first_.emplace_back(p.var.shape());
    second_.emplace_back(p.var.shape());
  }
}

template <class T>
void Adam<T>::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, double(steps_));
  const double c2 = 1.0 - std::pow(beta2_, double(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var<T>& var = params_[k].var;
    if (!var.has_grad()) continue;
    const Tensor<T>& g = var.grad();
    Tensor<T>& w = var.mutable_value();
    Tensor<T>& m = first_[k];
    Tensor<T>& v = second_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<T>(beta1_ * m[i] + (1 - beta1_) * gi);
      v[i] = static_cast<T>(beta2_ * v[i] + (1 - beta2_) * gi * gi);
      const double update = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] = static_cast<T>(w[i] - update);
    }
  }
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <class T>
void Adam<T>::clip(double bound) {
  for (auto& p : params_)
    for (auto& w : p.var.mutable_value().values()) w = std::clamp(w, static_cast<T>(-bound), static_cast<T>(bound));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace attnmark
