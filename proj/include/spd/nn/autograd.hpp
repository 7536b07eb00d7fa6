#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "spd/nn/tensor.hpp"

namespace spd::nn {

/// A value in the computation graph. Leaves with `requires_grad` are
/// parameters; interior nodes carry a closure that pushes their gradient
/// into their inputs.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  /// Lazily allocated gradient buffer with the value's shape.
  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
  [[nodiscard]] bool has_grad() const { return !grad.empty() && grad.size() == value.size(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> leaf(Tensor<T> value) {
  auto node = constant(std::move(value));
  node->requires_grad = true;
  return node;
}

/// Per-thread switch; when off, ops record no graph (evaluation passes).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates the output node of an op. The node records inputs and the
/// backward closure only if grad mode is on and some input needs a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (!grad_enabled()) return node;
  bool any = false;
  for (const auto& in : inputs) any = any || (in && in->requires_grad);
  if (!any) return node;
  node->requires_grad = true;
  node->inputs = std::move(inputs);
  node->backward_fn = std::move(backward_fn);
  return node;
}

/// Reverse-mode sweep from a scalar root (gradient seeded with 1).
template <typename T>
void backward(const Var<T>& root);

}  // namespace spd::nn
