#pragma once

#include "ocunet/tensor.hpp"

namespace ocunet {

/// Reverse-mode pass over the computation recorded while producing `output`.
/// Construction collects the reachable nodes in topological order; `backward`
/// replays them once in reverse and then releases the graph so activations can
/// be reclaimed. A tape is single-use: a second `backward` call throws.
template <typename T>
class Tape {
 public:
  explicit Tape(const Tensor<T>& output);

  std::size_t node_count() const { return order_.size(); }
  bool frozen() const { return frozen_; }
  const std::vector<std::shared_ptr<detail::TensorImpl<T>>>& order() const { return order_; }

  void backward();

 private:
  Tensor<T> output_;
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> order_;  // producers, inputs first
  bool frozen_ = false;
};

/// Convenience: Tape(output).backward(). `output` must be a scalar.
template <typename T>
void backward(const Tensor<T>& output);

extern template class Tape<float>;
extern template class Tape<double>;
extern template void backward<float>(const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&);

}  // namespace ocunet
