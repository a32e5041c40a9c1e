#include "ocunet/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace ocunet {

template <typename T>
Adam<T>::Adam(AdamConfig<T> config, const ParamList<T>& params) : config_(config) {
  for (const auto& entry : params) {
    if (!entry.trainable) continue;
    Slot slot;
    slot.name = entry.name;
    slot.param = entry.tensor;
    slot.m.assign(entry.tensor.size(), T(0));
    slot.v.assign(entry.tensor.size(), T(0));
    slots_.push_back(std::move(slot));
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const T bc1 = T(1) - std::pow(config_.beta1, static_cast<T>(t_));
  const T bc2 = T(1) - std::pow(config_.beta2, static_cast<T>(t_));
  for (auto& slot : slots_) {
    if (!slot.param.has_grad()) continue;  // parameter unused this step
    auto grads = slot.param.grad_values();
    T* w = slot.param.mutable_data();
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const T g = grads[i];
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam: non-finite gradient for parameter '" + slot.name + "'");
      }
      slot.m[i] = config_.beta1 * slot.m[i] + (T(1) - config_.beta1) * g;
      slot.v[i] = config_.beta2 * slot.v[i] + (T(1) - config_.beta2) * g * g;
      const T m_hat = slot.m[i] / bc1;
      const T v_hat = slot.v[i] / bc2;
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& slot : slots_) slot.param.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ocunet
