#pragma once

#include <cstdint>
#include <vector>

#include "ocunet/params.hpp"

namespace ocunet {

template <typename T>
struct AdamConfig {
  T lr = T(3e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

/// Bias-corrected Adam over a parameter list. Gradients are read from the
/// tensors' grad buffers; a non-finite gradient aborts the step naming the
/// offending parameter.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig<T> config, const ParamList<T>& params);

  void step();
  void zero_grad();

  T lr() const { return config_.lr; }
  void set_lr(T lr) { config_.lr = lr; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

  std::size_t slot_count() const { return slots_.size(); }
  const std::string& slot_name(std::size_t i) const { return slots_[i].name; }
  std::vector<T>& slot_m(std::size_t i) { return slots_[i].m; }
  std::vector<T>& slot_v(std::size_t i) { return slots_[i].v; }

 private:
  struct Slot {
    std::string name;
    Tensor<T> param;
    std::vector<T> m, v;
  };

  AdamConfig<T> config_;
  std::vector<Slot> slots_;
  std::int64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ocunet
