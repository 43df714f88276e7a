#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "laax/tensor.hpp"

namespace laax::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the computation graph. `backward` reads `grad` (the gradient
/// of the root w.r.t. this node) and accumulates into the inputs' gradients.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
  Node& input(std::size_t i) { return *inputs[i]; }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a graph node. Copies share the node, so a `Var` held by a module
/// and the same `Var` captured in a graph refer to one parameter.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  /// Result of an op over `inputs`. Records the inputs only when one of them
  /// requires a gradient and grad mode is on; callers then attach a backward
  /// function with `set_backward` if `needs_backward()`.
  static Var result(Tensor value, std::initializer_list<const Var*> inputs) {
    Var out(std::move(value));
    if (!grad_mode()) return out;
    for (const Var* in : inputs) {
      if (in && in->defined() && in->requires_grad()) {
        out.node_->requires_grad = true;
        break;
      }
    }
    if (out.node_->requires_grad) {
      for (const Var* in : inputs) out.node_->inputs.push_back(in && in->defined() ? in->node_ : nullptr);
    }
    return out;
  }
  static Var result(Tensor value, const std::vector<Var>& inputs) {
    Var out(std::move(value));
    if (!grad_mode()) return out;
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        out.node_->requires_grad = true;
        break;
      }
    }
    if (out.node_->requires_grad) {
      for (const auto& in : inputs) out.node_->inputs.push_back(in.node_);
    }
    return out;
  }

  bool defined() const noexcept { return node_ != nullptr; }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool needs_backward() const noexcept { return requires_grad() && !node_->inputs.empty(); }

  void set_backward(std::function<void(Node&)> fn) const { node_->backward = std::move(fn); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  void zero_grad() {
    if (node_) node_->grad = Tensor();
  }

  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size(std::size_t axis) const { return node_->value.size(axis); }
  std::size_t dim() const { return node_->value.dim(); }

  /// Reverse-mode sweep from this (scalar) node.
  void backward() const;

  Node* node() const noexcept { return node_.get(); }

 private:
  NodePtr node_;
};

/// True when the i-th input exists and wants a gradient.
inline bool wants(Node& self, std::size_t i) {
  return i < self.inputs.size() && self.inputs[i] && self.inputs[i]->requires_grad;
}

inline void Var::backward() const {
  require(node_ && node_->value.numel() == 1, Errc::shape_mismatch, "backward() needs a scalar root");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad = Tensor(node_->value.shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace laax::ag
