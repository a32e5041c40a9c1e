#include <Eigen/Core>
#include <stdexcept>

#include "ocunet/ops.hpp"

namespace ocunet {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int batch, in_h, in_w, in_c;
  int kh, kw, out_c;
  int stride, dilation;
  int out_h, out_w;
  int pad_top, pad_left;

  std::size_t patch_size() const {
    return static_cast<std::size_t>(kh) * kw * in_c;
  }
  std::size_t rows() const {
    return static_cast<std::size_t>(batch) * out_h * out_w;
  }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernel, int stride,
                           int dilation, Padding padding) {
  if (input.rank() != 4) {
    throw std::invalid_argument("conv2d: input must be [B,H,W,Cin], got " +
                                shape_str(input.shape()));
  }
  if (kernel.rank() != 4) {
    throw std::invalid_argument("conv2d: kernel must be [kh,kw,Cin,Cout], got " +
                                shape_str(kernel.shape()));
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_h = input.dim(1);
  g.in_w = input.dim(2);
  g.in_c = input.dim(3);
  g.kh = kernel.dim(0);
  g.kw = kernel.dim(1);
  g.out_c = kernel.dim(3);
  g.stride = stride;
  g.dilation = dilation;
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel spatial dims must be odd, got " +
                                shape_str(kernel.shape()));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");
  if (kernel.dim(2) != g.in_c) {
    throw std::invalid_argument("conv2d: input channels " + shape_str(input.shape()) +
                                " do not match kernel " + shape_str(kernel.shape()));
  }
  const int eff_h = (g.kh - 1) * dilation + 1;
  const int eff_w = (g.kw - 1) * dilation + 1;
  if (padding == Padding::same) {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    const int pad_h = std::max(0, (g.out_h - 1) * stride + eff_h - g.in_h);
    const int pad_w = std::max(0, (g.out_w - 1) * stride + eff_w - g.in_w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (g.in_h < eff_h || g.in_w < eff_w) {
      throw std::invalid_argument("conv2d: valid padding needs input >= dilated kernel extent");
    }
    g.out_h = (g.in_h - eff_h) / stride + 1;
    g.out_w = (g.in_w - eff_w) / stride + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

// Patch matrix rows follow output sites (b, oh, ow); columns follow
// (ki, kj, ci), matching the kernel's flat layout so the contraction is a
// plain row-major GEMM.
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* cols) {
  const std::size_t k = g.patch_size();
  const std::size_t im_row = static_cast<std::size_t>(g.in_w) * g.in_c;
  const std::size_t im_img = static_cast<std::size_t>(g.in_h) * im_row;
  std::size_t m = 0;
  for (int b = 0; b < g.batch; ++b) {
    const T* img = input + b * im_img;
    for (int oh = 0; oh < g.out_h; ++oh) {
      const int ih0 = oh * g.stride - g.pad_top;
      for (int ow = 0; ow < g.out_w; ++ow, ++m) {
        const int iw0 = ow * g.stride - g.pad_left;
        T* dst = cols + m * k;
        for (int ki = 0; ki < g.kh; ++ki) {
          const int ih = ih0 + ki * g.dilation;
          if (ih < 0 || ih >= g.in_h) {
            std::fill_n(dst, static_cast<std::size_t>(g.kw) * g.in_c, T(0));
            dst += static_cast<std::size_t>(g.kw) * g.in_c;
            continue;
          }
          const T* row = img + ih * im_row;
          for (int kj = 0; kj < g.kw; ++kj) {
            const int iw = iw0 + kj * g.dilation;
            if (iw < 0 || iw >= g.in_w) {
              std::fill_n(dst, g.in_c, T(0));
            } else {
              std::copy_n(row + iw * g.in_c, g.in_c, dst);
            }
            dst += g.in_c;
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* input_grad) {
  const std::size_t k = g.patch_size();
  const std::size_t im_row = static_cast<std::size_t>(g.in_w) * g.in_c;
  const std::size_t im_img = static_cast<std::size_t>(g.in_h) * im_row;
  std::size_t m = 0;
  for (int b = 0; b < g.batch; ++b) {
    T* img = input_grad + b * im_img;
    for (int oh = 0; oh < g.out_h; ++oh) {
      const int ih0 = oh * g.stride - g.pad_top;
      for (int ow = 0; ow < g.out_w; ++ow, ++m) {
        const int iw0 = ow * g.stride - g.pad_left;
        const T* src = cols + m * k;
        for (int ki = 0; ki < g.kh; ++ki) {
          const int ih = ih0 + ki * g.dilation;
          if (ih < 0 || ih >= g.in_h) {
            src += static_cast<std::size_t>(g.kw) * g.in_c;
            continue;
          }
          T* row = img + ih * im_row;
          for (int kj = 0; kj < g.kw; ++kj) {
            const int iw = iw0 + kj * g.dilation;
            if (iw >= 0 && iw < g.in_w) {
              T* dst = row + iw * g.in_c;
              for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
            }
            src += g.in_c;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int dilation, Padding padding) {
  const ConvGeometry g = conv_geometry(input, kernel, stride, dilation, padding);
  if (bias.rank() != 1 || bias.dim(0) != g.out_c) {
    throw std::invalid_argument("conv2d: bias must be [Cout], got " + shape_str(bias.shape()));
  }

  const std::size_t m = g.rows();
  const std::size_t k = g.patch_size();
  std::vector<T> cols(m * k);
  im2col(g, input.data(), cols.data());

  std::vector<T> out(m * static_cast<std::size_t>(g.out_c));
  {
    ConstMatMap<T> cmat(cols.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    ConstMatMap<T> kmat(kernel.data(), static_cast<Eigen::Index>(k), g.out_c);
    MatMap<T> omat(out.data(), static_cast<Eigen::Index>(m), g.out_c);
    omat.noalias() = cmat * kmat;
    omat.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), g.out_c);
  }

  auto in_impl = input.impl();
  auto k_impl = kernel.impl();
  auto b_impl = bias.impl();
  return make_op_result<T>(
      {g.batch, g.out_h, g.out_w, g.out_c}, std::move(out), "conv2d", {input, kernel, bias},
      [g, m, k, in_impl, k_impl, b_impl](detail::TensorImpl<T>& out_impl) {
        ConstMatMap<T> gout(out_impl.grad.data(), static_cast<Eigen::Index>(m), g.out_c);
        if (b_impl->requires_grad) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(b_impl->grad_buffer().data(),
                                                             g.out_c);
          gb += gout.colwise().sum();
        }
        if (k_impl->requires_grad) {
          // Patches are rebuilt rather than kept; the input is alive anyway.
          std::vector<T> cols(m * k);
          im2col(g, in_impl->data.data(), cols.data());
          ConstMatMap<T> cmat(cols.data(), static_cast<Eigen::Index>(m),
                              static_cast<Eigen::Index>(k));
          MatMap<T> gk(k_impl->grad_buffer().data(), static_cast<Eigen::Index>(k), g.out_c);
          gk.noalias() += cmat.transpose() * gout;
        }
        if (in_impl->requires_grad) {
          std::vector<T> gcols(m * k);
          ConstMatMap<T> kmat(k_impl->data.data(), static_cast<Eigen::Index>(k), g.out_c);
          MatMap<T> gc(gcols.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
          gc.noalias() = gout * kmat.transpose();
          col2im(g, gcols.data(), in_impl->grad_buffer().data());
        }
      });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw std::invalid_argument("dense: inner dimensions disagree between " +
                                shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  const int b = x.dim(0), cin = x.dim(1), cout = w.dim(1);
  std::vector<T> out(static_cast<std::size_t>(b) * cout);
  {
    ConstMatMap<T> xm(x.data(), b, cin);
    ConstMatMap<T> wm(w.data(), cin, cout);
    MatMap<T> om(out.data(), b, cout);
    om.noalias() = xm * wm;
  }
  auto xi = x.impl();
  auto wi = w.impl();
  return make_op_result<T>({b, cout}, std::move(out), "dense", {x, w},
                           [b, cin, cout, xi, wi](detail::TensorImpl<T>& out_impl) {
                             ConstMatMap<T> gout(out_impl.grad.data(), b, cout);
                             if (xi->requires_grad) {
                               ConstMatMap<T> wm(wi->data.data(), cin, cout);
                               MatMap<T> gx(xi->grad_buffer().data(), b, cin);
                               gx.noalias() += gout * wm.transpose();
                             }
                             if (wi->requires_grad) {
                               ConstMatMap<T> xm(xi->data.data(), b, cin);
                               MatMap<T> gw(wi->grad_buffer().data(), cin, cout);
                               gw.noalias() += xm.transpose() * gout;
                             }
                           });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  Tensor<T> y = dense(x, w);
  if (bias.rank() != 1 || bias.dim(0) != y.dim(1)) {
    throw std::invalid_argument("dense: bias must be [Cout], got " + shape_str(bias.shape()));
  }
  return add(y, reshape(bias, {1, bias.dim(0)}));
}

template Tensor<float> conv2d<float>(const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&, int, int, Padding);
template Tensor<double> conv2d<double>(const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, int, int, Padding);
template Tensor<float> dense<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> dense<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> dense<float>(const Tensor<float>&, const Tensor<float>&,
                                    const Tensor<float>&);
template Tensor<double> dense<double>(const Tensor<double>&, const Tensor<double>&,
                                      const Tensor<double>&);

}  // namespace ocunet
