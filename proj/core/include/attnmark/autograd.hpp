#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "attnmark/tensor.hpp"

namespace attnmark {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a value on the reverse-mode tape. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }

  Tensor<T>& grad() { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.shape() == node_->value.shape(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool valid() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  static Var from_node(std::shared_ptr<Node<T>> node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds the result of an op. The backward closure is attached only when a
/// parent needs gradients, so frozen subgraphs cost nothing and never write
/// into parameter accumulators.
template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_fn) {
  Var<T> out(std::move(value));
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (!needs) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (auto& p : parents) node.parents.push_back(p.node());
  node.backward_fn = std::move(backward_fn);
  return out;
}

template <class T>
Var<T> detach(const Var<T>& x) {
  return Var<T>(x.value());
}

/// Reverse sweep from a scalar (or seeded) output. Leaf grads accumulate;
/// interior grads are released after use.
template <class T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr) {
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node<T>& top = *root.node();
  if (seed) {
    require(seed->shape() == top.value.shape(), "backward: seed shape mismatch");
    top.grad = *seed;
  } else {
    require(top.value.size() == 1, "backward: root must be scalar without a seed");
    top.ensure_grad()[0] += T{1};
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& node = **it;
    if (!node.backward_fn) continue;
    if (node.grad.shape() == node.value.shape()) node.backward_fn(node);
    node.grad = Tensor<T>();
  }
}

}  // namespace attnmark
