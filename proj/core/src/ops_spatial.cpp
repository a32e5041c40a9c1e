#include <cmath>
#include <stdexcept>

#include "ocunet/ops.hpp"

namespace ocunet {
namespace {

template <typename T>
void require_nhwc(const Tensor<T>& x, const char* op) {
  if (x.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected [B,H,W,C], got " +
                                shape_str(x.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training, T momentum,
                     T epsilon) {
  if (!(epsilon > T(0))) throw std::invalid_argument("batch_norm: epsilon must be positive");
  if (x.rank() < 2) throw std::invalid_argument("batch_norm: input needs a channel axis");
  const int channels = x.dim(-1);
  const std::initializer_list<const Tensor<T>*> per_channel{&gamma, &beta, &running_mean,
                                                            &running_var};
  for (const Tensor<T>* p : per_channel) {
    if (p->rank() != 1 || p->dim(0) != channels) {
      throw std::invalid_argument("batch_norm: per-channel tensor " + shape_str(p->shape()) +
                                  " does not match " + std::to_string(channels) + " channels");
    }
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(channels);
  const T* xv = x.data();

  std::vector<T> use_mean(channels), invstd(channels);
  if (training) {
    std::vector<T> var(channels, T(0));
    std::fill(use_mean.begin(), use_mean.end(), T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* px = xv + r * channels;
      for (int c = 0; c < channels; ++c) use_mean[c] += px[c];
    }
    const T inv_rows = T(1) / static_cast<T>(rows);
    for (int c = 0; c < channels; ++c) use_mean[c] *= inv_rows;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* px = xv + r * channels;
      for (int c = 0; c < channels; ++c) {
        const T d = px[c] - use_mean[c];
        var[c] += d * d;
      }
    }
    T* rm = running_mean.mutable_data();
    T* rv = running_var.mutable_data();
    for (int c = 0; c < channels; ++c) {
      var[c] *= inv_rows;
      invstd[c] = T(1) / std::sqrt(var[c] + epsilon);
      rm[c] = momentum * rm[c] + (T(1) - momentum) * use_mean[c];
      rv[c] = momentum * rv[c] + (T(1) - momentum) * var[c];
    }
  } else {
    const T* rm = running_mean.data();
    const T* rv = running_var.data();
    for (int c = 0; c < channels; ++c) {
      use_mean[c] = rm[c];
      invstd[c] = T(1) / std::sqrt(rv[c] + epsilon);
    }
  }

  std::vector<T> out(x.size());
  const T* gv = gamma.data();
  const T* bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* px = xv + r * channels;
    T* py = out.data() + r * channels;
    for (int c = 0; c < channels; ++c) {
      py[c] = gv[c] * (px[c] - use_mean[c]) * invstd[c] + bv[c];
    }
  }

  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  return make_op_result<T>(
      x.shape(), std::move(out), "batch_norm", {x, gamma, beta},
      [xi, gi, bi, rows, channels, training, mean = std::move(use_mean),
       invstd = std::move(invstd)](detail::TensorImpl<T>& out_impl) {
        const T* g = out_impl.grad.data();
        const T* xv = xi->data.data();
        const T* gv = gi->data.data();
        std::vector<T> sum_g(channels, T(0)), sum_gx(channels, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
          const T* pg = g + r * channels;
          const T* px = xv + r * channels;
          for (int c = 0; c < channels; ++c) {
            sum_g[c] += pg[c];
            sum_gx[c] += pg[c] * (px[c] - mean[c]) * invstd[c];
          }
        }
        if (bi->requires_grad) {
          T* gb = bi->grad_buffer().data();
          for (int c = 0; c < channels; ++c) gb[c] += sum_g[c];
        }
        if (gi->requires_grad) {
          T* gg = gi->grad_buffer().data();
          for (int c = 0; c < channels; ++c) gg[c] += sum_gx[c];
        }
        if (xi->requires_grad) {
          T* gx = xi->grad_buffer().data();
          const T inv_rows = T(1) / static_cast<T>(rows);
          if (training) {
            for (std::size_t r = 0; r < rows; ++r) {
              const T* pg = g + r * channels;
              const T* px = xv + r * channels;
              T* pgx = gx + r * channels;
              for (int c = 0; c < channels; ++c) {
                const T xhat = (px[c] - mean[c]) * invstd[c];
                pgx[c] += gv[c] * invstd[c] *
                          (pg[c] - sum_g[c] * inv_rows - xhat * sum_gx[c] * inv_rows);
              }
            }
          } else {
            for (std::size_t r = 0; r < rows; ++r) {
              const T* pg = g + r * channels;
              T* pgx = gx + r * channels;
              for (int c = 0; c < channels; ++c) pgx[c] += gv[c] * invstd[c] * pg[c];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x) {
  require_nhwc(x, "max_pool2");
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("max_pool2: spatial dims must be even, got " +
                                shape_str(x.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  std::vector<T> out(static_cast<std::size_t>(b) * oh * ow * c);
  std::vector<std::size_t> argmax(out.size());
  const T* xv = x.data();
  auto in_at = [&](int bi, int i, int j, int ci) {
    return ((static_cast<std::size_t>(bi) * h + i) * w + j) * c + ci;
  };
  std::size_t o = 0;
  for (int bi = 0; bi < b; ++bi) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        for (int ci = 0; ci < c; ++ci, ++o) {
          std::size_t best = in_at(bi, 2 * i, 2 * j, ci);
          T best_v = xv[best];
          for (int di = 0; di < 2; ++di) {
            for (int dj = 0; dj < 2; ++dj) {
              const std::size_t idx = in_at(bi, 2 * i + di, 2 * j + dj, ci);
              if (xv[idx] > best_v) {
                best_v = xv[idx];
                best = idx;
              }
            }
          }
          out[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }
  auto xi = x.impl();
  return make_op_result<T>({b, oh, ow, c}, std::move(out), "max_pool2", {x},
                           [xi, argmax = std::move(argmax)](detail::TensorImpl<T>& out_impl) {
                             if (!xi->requires_grad) return;
                             T* gx = xi->grad_buffer().data();
                             const T* g = out_impl.grad.data();
                             for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
                           });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_nhwc(x, "global_avg_pool");
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t sites = static_cast<std::size_t>(h) * w;
  std::vector<T> out(static_cast<std::size_t>(b) * c, T(0));
  const T* xv = x.data();
  for (int bi = 0; bi < b; ++bi) {
    const T* img = xv + static_cast<std::size_t>(bi) * sites * c;
    T* dst = out.data() + static_cast<std::size_t>(bi) * c;
    for (std::size_t s = 0; s < sites; ++s) {
      const T* px = img + s * c;
      for (int ci = 0; ci < c; ++ci) dst[ci] += px[ci];
    }
  }
  const T inv = T(1) / static_cast<T>(sites);
  for (auto& v : out) v *= inv;
  auto xi = x.impl();
  return make_op_result<T>({b, c}, std::move(out), "global_avg_pool", {x},
                           [xi, b, sites, c, inv](detail::TensorImpl<T>& out_impl) {
                             if (!xi->requires_grad) return;
                             T* gx = xi->grad_buffer().data();
                             const T* g = out_impl.grad.data();
                             for (int bi = 0; bi < b; ++bi) {
                               const T* gs = g + static_cast<std::size_t>(bi) * c;
                               T* img = gx + static_cast<std::size_t>(bi) * sites * c;
                               for (std::size_t s = 0; s < sites; ++s) {
                                 T* px = img + s * c;
                                 for (int ci = 0; ci < c; ++ci) px[ci] += gs[ci] * inv;
                               }
                             }
                           });
}

template <typename T>
Tensor<T> channel_max(const Tensor<T>& x) {
  require_nhwc(x, "channel_max");
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t sites = static_cast<std::size_t>(b) * h * w;
  std::vector<T> out(sites);
  std::vector<int> argmax(sites);
  const T* xv = x.data();
  for (std::size_t s = 0; s < sites; ++s) {
    const T* px = xv + s * c;
    int best = 0;
    for (int ci = 1; ci < c; ++ci) {
      if (px[ci] > px[best]) best = ci;
    }
    out[s] = px[best];
    argmax[s] = best;
  }
  auto xi = x.impl();
  return make_op_result<T>({b, h, w, 1}, std::move(out), "channel_max", {x},
                           [xi, c, argmax = std::move(argmax)](detail::TensorImpl<T>& out_impl) {
                             if (!xi->requires_grad) return;
                             T* gx = xi->grad_buffer().data();
                             const T* g = out_impl.grad.data();
                             for (std::size_t s = 0; s < argmax.size(); ++s) {
                               gx[s * c + argmax[s]] += g[s];
                             }
                           });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  require_nhwc(x, "upsample2x");
  const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int oh = 2 * h, ow = 2 * w;
  std::vector<T> out(static_cast<std::size_t>(b) * oh * ow * c);
  const T* xv = x.data();
  for (int bi = 0; bi < b; ++bi) {
    for (int i = 0; i < oh; ++i) {
      const T* src_row = xv + ((static_cast<std::size_t>(bi) * h + i / 2) * w) * c;
      T* dst_row = out.data() + ((static_cast<std::size_t>(bi) * oh + i) * ow) * c;
      for (int j = 0; j < ow; ++j) {
        std::copy_n(src_row + static_cast<std::size_t>(j / 2) * c, c,
                    dst_row + static_cast<std::size_t>(j) * c);
      }
    }
  }
  auto xi = x.impl();
  return make_op_result<T>(
      {b, oh, ow, c}, std::move(out), "upsample2x", {x},
      [xi, b, h, w, c, oh, ow](detail::TensorImpl<T>& out_impl) {
        if (!xi->requires_grad) return;
        T* gx = xi->grad_buffer().data();
        const T* g = out_impl.grad.data();
        for (int bi = 0; bi < b; ++bi) {
          for (int i = 0; i < oh; ++i) {
            T* dst_row = gx + ((static_cast<std::size_t>(bi) * h + i / 2) * w) * c;
            const T* src_row = g + ((static_cast<std::size_t>(bi) * oh + i) * ow) * c;
            for (int j = 0; j < ow; ++j) {
              T* dst = dst_row + static_cast<std::size_t>(j / 2) * c;
              const T* src = src_row + static_cast<std::size_t>(j) * c;
              for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
            }
          }
        }
      });
}

#define OCUNET_INSTANTIATE_SPATIAL(T)                                                        \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                   Tensor<T>&, Tensor<T>&, bool, T, T);                     \
  template Tensor<T> max_pool2<T>(const Tensor<T>&);                                        \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                  \
  template Tensor<T> channel_max<T>(const Tensor<T>&);                                      \
  template Tensor<T> upsample2x<T>(const Tensor<T>&);

OCUNET_INSTANTIATE_SPATIAL(float)
OCUNET_INSTANTIATE_SPATIAL(double)

#undef OCUNET_INSTANTIATE_SPATIAL

}  // namespace ocunet
