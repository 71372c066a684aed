#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "assl/core/tensor.hpp"

namespace assl::ag {

/// Node in the dynamic computation graph. Ops allocate one per output and
/// capture whatever they need for the backward pass in the closure. Buffers
/// of non-retained nodes are released as the backward sweep passes them, so
/// peak memory shrinks while gradients propagate.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // lazily allocated on first contribution
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool retain = false;  // parameters and explicit taps keep value/grad

  Node() = default;
  explicit Node(Tensor<T> v) : value(std::move(v)) {}

  /// Accumulates `delta` into the gradient, allocating on first use.
  void add_grad(const Tensor<T>& delta) {
    ensure_grad();
    T* g = grad.data();
    const T* d = delta.data();
    for (int64_t i = 0; i < grad.size(); ++i) g[i] += d[i];
  }

  Tensor<T>& ensure_grad() {
    if (!grad.defined()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }

  void zero_grad() {
    if (grad.defined()) grad.fill(T(0));
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

/// Wraps a tensor as a graph leaf. Parameters pass requires_grad=true and
/// are retained across backward passes.
template <typename T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>(std::move(value));
  n->requires_grad = requires_grad;
  n->retain = requires_grad;
  return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  return make_leaf(std::move(value), false);
}

/// Thread-local switch: when grad mode is off, ops skip recording the graph
/// (no inputs held, no backward closures), which is the cheap path for
/// inference and frozen-backbone passes.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
};

namespace detail {

template <typename T>
void topo_sort(const Var<T>& root, std::vector<Node<T>*>& order) {
  // Iterative post-order DFS; order ends with root.
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->inputs.size()) {
      Node<T>* child = node->inputs[next_child++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

/// Reverse-mode sweep from a scalar (or pre-seeded) root. Non-retained
/// intermediates are freed as soon as their contribution has been pushed
/// to their inputs.
template <typename T>
void backward(const Var<T>& root) {
  if (!root->requires_grad)
    throw std::logic_error("backward: root does not require grad");
  if (!root->grad.defined()) {
    if (root->value.size() != 1)
      throw std::logic_error("backward: non-scalar root needs an explicit seed grad");
    root->ensure_grad();
    root->grad.fill(T(1));
  }
  std::vector<Node<T>*> order;
  detail::topo_sort(root, order);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    if (!n->retain && n != root.get()) {
      n->value = Tensor<T>();
      n->grad = Tensor<T>();
      n->backward_fn = nullptr;
    }
  }
}

}  // namespace assl::ag
