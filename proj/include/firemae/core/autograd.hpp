#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "firemae/core/tensor.hpp"

namespace firemae {

namespace detail {
inline std::atomic<std::uint64_t> g_node_seq{0};
inline thread_local bool t_grad_enabled = true;
}  // namespace detail

inline bool grad_enabled() noexcept { return detail::t_grad_enabled; }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::t_grad_enabled) { detail::t_grad_enabled = false; }
  ~NoGradGuard() { detail::t_grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::uint64_t seq = detail::g_node_seq.fetch_add(1, std::memory_order_relaxed);
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const noexcept { return !backward_fn; }

  /// Gradient buffer, zero-initialized on first use. Fan-out accumulates here.
  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a node in the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() : node_(std::make_shared<Node<T>>()) {}
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const noexcept { return node_->value; }
  Tensor<T>& mutable_value() noexcept { return node_->value; }
  const Shape& shape() const noexcept { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }

  bool requires_grad() const noexcept { return node_->requires_grad; }
  bool has_grad() const noexcept { return node_->grad.shape() == node_->value.shape() && node_->value.size() > 0; }
  const Tensor<T>& grad() const noexcept { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  void backward();
  void backward(const Tensor<T>& seed);

  Node<T>& node() noexcept { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds the output of an operator. When recording is off or no input needs a
/// gradient the result is a constant and the closure is dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool any = false;
  for (const Var<T>* v : inputs)
    if (v && v->requires_grad()) any = true;
  if (any && grad_enabled()) {
    node->requires_grad = true;
    for (const Var<T>* v : inputs)
      if (v) node->inputs.push_back(v->node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

/// Operations reachable from a root, in recording order. Replaying backward in
/// reverse recording order is a valid topological order because every input
/// was created before its consumers.
template <typename T>
class GradTape {
 public:
  static GradTape record(const Var<T>& root) {
    GradTape tape;
    std::unordered_set<Node<T>*> seen;
    std::vector<Node<T>*> stack{root.node_ptr().get()};
    while (!stack.empty()) {
      Node<T>* n = stack.back();
      stack.pop_back();
      if (!n->requires_grad || !seen.insert(n).second) continue;
      tape.nodes_.push_back(n);
      for (auto& in : n->inputs) stack.push_back(in.get());
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const Node<T>* a, const Node<T>* b) { return a->seq < b->seq; });
    return tape;
  }

  const std::vector<Node<T>*>& nodes() const noexcept { return nodes_; }

  /// Runs every backward closure in reverse order. Intermediate gradients are
  /// released once consumed; leaf gradients remain.
  void replay() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>* n = *it;
      if (n->is_leaf()) continue;
      if (n->grad.shape() != n->value.shape()) continue;  // nothing flowed here
      n->backward_fn(*n);
      n->grad = Tensor<T>();
    }
  }

 private:
  std::vector<Node<T>*> nodes_;
};

template <typename T>
void Var<T>::backward() {
  if (node_->value.size() != 1) throw ShapeError("backward", "implicit seed requires a scalar output, got " + shape_str(shape()));
  backward(Tensor<T>(node_->value.shape(), T(1)));
}

template <typename T>
void Var<T>::backward(const Tensor<T>& seed) {
  if (seed.shape() != node_->value.shape()) throw ShapeError("backward", "seed shape " + shape_str(seed.shape()) + " != " + shape_str(shape()));
  if (!node_->requires_grad) return;
  auto& g = node_->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  GradTape<T>::record(*this).replay();
}

}  // namespace firemae
