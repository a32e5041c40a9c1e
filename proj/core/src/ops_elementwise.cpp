#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ocunet/ops.hpp"

namespace ocunet {
namespace {

// Per-axis flat strides with 0 on broadcast (singleton) axes.
struct BroadcastPlan {
  Shape out_shape;
  std::vector<std::size_t> a_stride, b_stride;
  std::size_t n = 1;
  bool trivial = false;  // equal shapes, flat iteration suffices
};

template <typename T>
BroadcastPlan broadcast_plan(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) {
    BroadcastPlan plan;
    plan.out_shape = sa;
    plan.n = a.size();
    plan.trivial = true;
    return plan;
  }
  if (sa.size() != sb.size()) {
    throw std::invalid_argument(std::string(op) + ": rank mismatch between " + shape_str(sa) +
                                " and " + shape_str(sb));
  }
  const std::size_t rank = sa.size();
  BroadcastPlan plan;
  plan.out_shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (sa[i] == sb[i] || sa[i] == 1 || sb[i] == 1) {
      plan.out_shape[i] = std::max(sa[i], sb[i]);
    } else {
      throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(sa) +
                                  " and " + shape_str(sb));
    }
  }
  plan.a_stride.assign(rank, 0);
  plan.b_stride.assign(rank, 0);
  std::size_t astep = 1, bstep = 1;
  for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
    plan.a_stride[i] = (sa[i] == 1) ? 0 : astep;
    plan.b_stride[i] = (sb[i] == 1) ? 0 : bstep;
    astep *= static_cast<std::size_t>(sa[i]);
    bstep *= static_cast<std::size_t>(sb[i]);
  }
  plan.n = shape_numel(plan.out_shape);
  return plan;
}

// Visits every output position with the matching input flat offsets.
template <typename F>
void broadcast_walk(const BroadcastPlan& plan, F&& visit) {
  const std::size_t rank = plan.out_shape.size();
  if (plan.trivial || rank == 0) {
    for (std::size_t o = 0; o < plan.n; ++o) visit(o, o, o);
    return;
  }
  std::vector<int> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < plan.n; ++o) {
    visit(o, ia, ib);
    for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
      ++idx[ax];
      ia += plan.a_stride[ax];
      ib += plan.b_stride[ax];
      if (idx[ax] < plan.out_shape[ax]) break;
      ia -= plan.a_stride[ax] * static_cast<std::size_t>(plan.out_shape[ax]);
      ib -= plan.b_stride[ax] * static_cast<std::size_t>(plan.out_shape[ax]);
      idx[ax] = 0;
    }
  }
}

// fwd(av, bv) -> value; da(av, bv), db(av, bv) -> local partials.
template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary_pointwise(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Da da,
                           Db db) {
  BroadcastPlan plan = broadcast_plan(a, b, op);
  std::vector<T> out(plan.n);
  const T* av = a.data();
  const T* bv = b.data();
  broadcast_walk(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = fwd(av[ia], bv[ib]);
  });
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op_result<T>(
      plan.out_shape, std::move(out), op, {a, b},
      [plan, ai, bi, da, db](detail::TensorImpl<T>& out_impl) {
        const T* g = out_impl.grad.data();
        const T* pa = ai->data.data();
        const T* pb = bi->data.data();
        T* ga = ai->requires_grad ? ai->grad_buffer().data() : nullptr;
        T* gb = bi->requires_grad ? bi->grad_buffer().data() : nullptr;
        broadcast_walk(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          if (ga) ga[ia] += da(pa[ia], pb[ib]) * g[o];
          if (gb) gb[ib] += db(pa[ia], pb[ib]) * g[o];
        });
      });
}

// fwd(v) -> value; dv(x, y) -> derivative given input x and output y.
template <typename T, typename Fwd, typename Dv>
Tensor<T> unary_pointwise(const char* op, const Tensor<T>& a, Fwd fwd, Dv dv) {
  std::vector<T> out(a.size());
  const T* av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  auto ai = a.impl();
  return make_op_result<T>(a.shape(), std::move(out), op, {a},
                           [ai, dv](detail::TensorImpl<T>& out_impl) {
                             if (!ai->requires_grad) return;
                             const T* g = out_impl.grad.data();
                             const T* x = ai->data.data();
                             const T* y = out_impl.data.data();
                             T* ga = ai->grad_buffer().data();
                             for (std::size_t i = 0; i < out_impl.data.size(); ++i) {
                               ga[i] += dv(x[i], y[i]) * g[i];
                             }
                           });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary_pointwise<T>(
      "add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return unary_pointwise<T>(
      "mul_scalar", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  const T* av = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(av[i] > T(0))) throw std::domain_error("log: non-positive input value");
  }
  return unary_pointwise<T>(
      "log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return unary_pointwise<T>(
      "clamp", a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  if (!(slope >= T(0) && slope < T(1))) {
    throw std::invalid_argument("leaky_relu: slope must lie in [0, 1)");
  }
  return unary_pointwise<T>(
      "leaky_relu", a, [slope](T x) { return x >= T(0) ? x : slope * x; },
      [slope](T x, T) { return x >= T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_pointwise<T>(
      "sigmoid", a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() < 1) throw std::invalid_argument("softmax: requires at least one axis");
  const int channels = a.dim(-1);
  const std::size_t rows = a.size() / static_cast<std::size_t>(channels);
  std::vector<T> out(a.size());
  const T* av = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av + r * channels;
    T* y = out.data() + r * channels;
    T m = x[0];
    for (int c = 1; c < channels; ++c) m = std::max(m, x[c]);
    T total = T(0);
    for (int c = 0; c < channels; ++c) {
      y[c] = std::exp(x[c] - m);
      total += y[c];
    }
    for (int c = 0; c < channels; ++c) y[c] /= total;
  }
  auto ai = a.impl();
  return make_op_result<T>(
      a.shape(), std::move(out), "softmax", {a},
      [ai, channels, rows](detail::TensorImpl<T>& out_impl) {
        if (!ai->requires_grad) return;
        const T* g = out_impl.grad.data();
        const T* p = out_impl.data.data();
        T* ga = ai->grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * channels;
          const T* pr = p + r * channels;
          T dot = T(0);
          for (int c = 0; c < channels; ++c) dot += gr[c] * pr[c];
          T* go = ga + r * channels;
          for (int c = 0; c < channels; ++c) go[c] += pr[c] * (gr[c] - dot);
        }
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  }
  std::vector<T> out(a.data(), a.data() + a.size());
  auto ai = a.impl();
  return make_op_result<T>(std::move(shape), std::move(out), "reshape", {a},
                           [ai](detail::TensorImpl<T>& out_impl) {
                             if (!ai->requires_grad) return;
                             T* ga = ai->grad_buffer().data();
                             const T* g = out_impl.grad.data();
                             for (std::size_t i = 0; i < out_impl.data.size(); ++i) ga[i] += g[i];
                           });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw std::invalid_argument("concat: inputs must have a channel axis");
  Shape lead(first.begin(), first.end() - 1);
  int total_c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw std::invalid_argument("concat: non-channel dims disagree between " + shape_str(first) +
                                  " and " + shape_str(s));
    }
    total_c += s.back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total_c);
  const std::size_t rows = shape_numel(lead);
  std::vector<T> out(rows * static_cast<std::size_t>(total_c));
  std::vector<int> offsets;
  int at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    const int c = p.shape().back();
    const T* src = p.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src + r * c, c, out.data() + r * total_c + at);
    }
    at += c;
  }
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_op_result<T>(
      std::move(out_shape), std::move(out), "concat", parts,
      [impls, offsets, rows, total_c](detail::TensorImpl<T>& out_impl) {
        const T* g = out_impl.grad.data();
        for (std::size_t k = 0; k < impls.size(); ++k) {
          auto& in = *impls[k];
          if (!in.requires_grad) continue;
          const int c = in.shape.back();
          T* gi = in.grad_buffer().data();
          for (std::size_t r = 0; r < rows; ++r) {
            const T* src = g + r * total_c + offsets[k];
            T* dst = gi + r * c;
            for (int j = 0; j < c; ++j) dst[j] += src[j];
          }
        }
      });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int begin, int end) {
  if (a.rank() < 1) throw std::invalid_argument("slice_channels: requires a channel axis");
  const int channels = a.dim(-1);
  if (begin < 0 || end > channels || begin >= end) {
    throw std::invalid_argument("slice_channels: invalid range [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") for " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape.back() = end - begin;
  const int width = end - begin;
  const std::size_t rows = a.size() / static_cast<std::size_t>(channels);
  std::vector<T> out(rows * static_cast<std::size_t>(width));
  const T* av = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av + r * channels + begin, width, out.data() + r * width);
  }
  auto ai = a.impl();
  return make_op_result<T>(std::move(out_shape), std::move(out), "slice_channels", {a},
                           [ai, begin, width, rows, channels](detail::TensorImpl<T>& out_impl) {
                             if (!ai->requires_grad) return;
                             const T* g = out_impl.grad.data();
                             T* ga = ai->grad_buffer().data();
                             for (std::size_t r = 0; r < rows; ++r) {
                               T* dst = ga + r * channels + begin;
                               const T* src = g + r * width;
                               for (int j = 0; j < width; ++j) dst[j] += src[j];
                             }
                           });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  const T* av = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) total += av[i];
  auto ai = a.impl();
  return make_op_result<T>({}, {total}, "sum", {a}, [ai](detail::TensorImpl<T>& out_impl) {
    if (!ai->requires_grad) return;
    const T g = out_impl.grad[0];
    T* ga = ai->grad_buffer().data();
    for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const T scale = T(1) / static_cast<T>(a.size());
  T total = T(0);
  const T* av = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) total += av[i];
  auto ai = a.impl();
  return make_op_result<T>({}, {total * scale}, "mean", {a},
                           [ai, scale](detail::TensorImpl<T>& out_impl) {
                             if (!ai->requires_grad) return;
                             const T g = out_impl.grad[0] * scale;
                             T* ga = ai->grad_buffer().data();
                             for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g;
                           });
}

#define OCUNET_INSTANTIATE_ELEMENTWISE(T)                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);              \
  template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);              \
  template Tensor<T> log<T>(const Tensor<T>&);                        \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);              \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                    \
  template Tensor<T> softmax<T>(const Tensor<T>&);                    \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);             \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&);        \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, int, int);   \
  template Tensor<T> sum<T>(const Tensor<T>&);                        \
  template Tensor<T> mean<T>(const Tensor<T>&);

OCUNET_INSTANTIATE_ELEMENTWISE(float)
OCUNET_INSTANTIATE_ELEMENTWISE(double)

#undef OCUNET_INSTANTIATE_ELEMENTWISE

}  // namespace ocunet
