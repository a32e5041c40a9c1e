#pragma once

#include <string>
#include <vector>

#include "ocunet/tensor.hpp"

namespace ocunet {

/// Named handle to a module tensor. Trainable entries receive gradients and
/// optimizer updates; the rest (batch-norm running statistics) are state that
/// still belongs in checkpoints.
template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

template <typename T>
using ParamList = std::vector<ParamEntry<T>>;

template <typename T>
std::size_t trainable_count(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.trainable) n += p.tensor.size();
  }
  return n;
}

}  // namespace ocunet
