#include "ocunet/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace ocunet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool shapes_equal(const Shape& a, const Shape& b) { return a == b; }

namespace {
thread_local bool g_grad_enabled = true;

void validate_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in " + shape_str(shape));
  }
}
}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  validate_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> values, bool requires_grad) {
  validate_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->data.assign(1, value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return impl_->shape;
}

template <typename T>
int Tensor<T>::dim(int axis) const {
  if (axis < 0) axis += rank();
  return impl_->shape.at(static_cast<std::size_t>(axis));
}

template <typename T>
int Tensor<T>::rank() const {
  return static_cast<int>(impl_->shape.size());
}

template <typename T>
std::size_t Tensor<T>::size() const {
  return impl_->data.size();
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
}

template <typename T>
const T* Tensor<T>::data() const {
  return impl_->data.data();
}

template <typename T>
T* Tensor<T>::mutable_data() {
  return impl_->data.data();
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  return {impl_->data.data(), impl_->data.size()};
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw std::invalid_argument("tensor: item() on non-scalar shape " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<int> index) const {
  if (index.size() != impl_->shape.size()) {
    throw std::invalid_argument("tensor: index rank mismatch for shape " + shape_str(impl_->shape));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (int i : index) {
    if (i < 0 || i >= impl_->shape[axis]) throw std::out_of_range("tensor: index out of range");
    flat = flat * static_cast<std::size_t>(impl_->shape[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return impl_->data[flat];
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return impl_->grad.size() == impl_->data.size();
}

template <typename T>
std::span<const T> Tensor<T>::grad_values() const {
  if (!has_grad()) throw std::runtime_error("tensor: gradient not populated");
  return {impl_->grad.data(), impl_->grad.size()};
}

template <typename T>
void Tensor<T>::zero_grad() {
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> values, const char* op,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(detail::TensorImpl<T>&)> backward) {
  Tensor<T> out = Tensor<T>::from_data(std::move(shape), std::move(values));
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        needs_grad = true;
        break;
      }
    }
  }
  if (needs_grad) {
    auto node = std::make_shared<detail::Node<T>>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(backward);
    out.impl()->node = std::move(node);
    out.impl()->requires_grad = true;
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op_result<float>(Shape, std::vector<float>, const char*,
                                             std::vector<Tensor<float>>,
                                             std::function<void(detail::TensorImpl<float>&)>);
template Tensor<double> make_op_result<double>(Shape, std::vector<double>, const char*,
                                               std::vector<Tensor<double>>,
                                               std::function<void(detail::TensorImpl<double>&)>);

}  // namespace ocunet
