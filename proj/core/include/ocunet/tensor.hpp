#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ocunet {

/// Dimension list. Canonical image layout is batch x height x width x channels.
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shapes_equal(const Shape& a, const Shape& b);

namespace detail {

template <typename T>
struct Node;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;  // producing operation; null for leaves

  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// One recorded primitive: the tensors it consumed and a closure that takes
/// the output impl (whose grad is already populated) and accumulates into the
/// inputs' grad buffers.
template <typename T>
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(TensorImpl<T>&)> backward;
};

}  // namespace detail

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Shared-ownership handle to an n-d array. Values are immutable once an
/// operation has produced them; `mutable_data` exists for leaf parameters
/// updated by the optimizer between forward passes.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int dim(int axis) const;
  int rank() const;
  std::size_t size() const;
  bool requires_grad() const;
  void set_requires_grad(bool flag);

  const T* data() const;
  T* mutable_data();
  std::span<const T> values() const;
  T item() const;
  T at(std::initializer_list<int> index) const;

  bool has_grad() const;
  std::span<const T> grad_values() const;
  void zero_grad();

  const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Builds a result tensor and, when recording is active and an input needs
/// gradients, attaches the backward closure. Every differentiable primitive
/// funnels through here.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> values, const char* op,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(detail::TensorImpl<T>&)> backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ocunet
