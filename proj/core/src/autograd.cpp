#include "ocunet/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace ocunet {

template <typename T>
Tape<T>::Tape(const Tensor<T>& output) : output_(output) {
  if (!output.defined()) throw std::invalid_argument("tape: undefined output tensor");
  // Iterative post-order DFS: producers land before their consumers.
  std::unordered_set<const detail::TensorImpl<T>*> seen;
  struct Frame {
    std::shared_ptr<detail::TensorImpl<T>> impl;
    std::size_t next_input = 0;
  };
  std::vector<Frame> stack;
  if (output.impl()->node) {
    stack.push_back({output.impl()});
    seen.insert(output.impl().get());
  }
  while (!stack.empty()) {
    Frame& top = stack.back();
    auto& node = top.impl->node;
    if (node && top.next_input < node->inputs.size()) {
      auto child = node->inputs[top.next_input++];
      if (child->node && !seen.count(child.get())) {
        seen.insert(child.get());
        stack.push_back({std::move(child)});
      }
      continue;
    }
    order_.push_back(top.impl);
    stack.pop_back();
  }
}

template <typename T>
void Tape<T>::backward() {
  if (frozen_) throw std::runtime_error("tape: backward already ran on this tape");
  if (output_.size() != 1) {
    throw std::invalid_argument("tape: backward requires a scalar output, got shape " +
                                shape_str(output_.shape()));
  }
  frozen_ = true;
  output_.impl()->grad_buffer()[0] = T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& impl = **it;
    impl.grad_buffer();  // consumers may never have touched it
    impl.node->backward(impl);
  }
  // Release closures and saved activations; leaves keep their gradients.
  for (auto& impl : order_) impl->node.reset();
}

template <typename T>
void backward(const Tensor<T>& output) {
  Tape<T>(output).backward();
}

template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace ocunet
