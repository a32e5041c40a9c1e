#pragma once

#include <vector>

#include "ocunet/tensor.hpp"

namespace ocunet {

enum class Padding { same, valid };

// ---- elementwise (broadcast = singleton expansion on equal-rank shapes) ----

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

// ---- activations ----

template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
/// Normalizes along the channel (last) axis.
template <typename T> Tensor<T> softmax(const Tensor<T>& a);

// ---- shape ----

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Joins along the channel (last) axis; all other dims must agree.
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);
/// Channel range [begin, end) of the last axis.
template <typename T> Tensor<T> slice_channels(const Tensor<T>& a, int begin, int end);

// ---- reductions ----

template <typename T> Tensor<T> sum(const Tensor<T>& a);   // rank-0 result
template <typename T> Tensor<T> mean(const Tensor<T>& a);  // rank-0 result

// ---- linear ----

/// x[B,Cin] . w[Cin,Cout] (+ b[Cout]).
template <typename T> Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w);
template <typename T> Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// ---- convolution ----

/// Dilated cross-correlation. input [B,H,W,Cin], kernel [kh,kw,Cin,Cout]
/// (odd spatial dims), bias [Cout]. "same" pads symmetrically from the
/// effective (dilated) kernel extent; "valid" applies no padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int dilation, Padding padding);

// ---- normalization ----

/// Per-channel batch normalization over all non-channel axes. In training
/// mode the batch statistics normalize and update the running buffers by
/// exponential moving average; in eval mode the running buffers normalize.
/// running_mean/running_var are [C] leaf tensors mutated in place.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     T momentum, T epsilon);

// ---- spatial ----

/// 2x2 max pooling, stride 2. H and W must be even.
template <typename T> Tensor<T> max_pool2(const Tensor<T>& x);
/// [B,H,W,C] -> [B,C], spatial mean per channel.
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);
/// [B,H,W,C] -> [B,H,W,1], max across channels.
template <typename T> Tensor<T> channel_max(const Tensor<T>& x);
/// Nearest-neighbor 2x replication of H and W.
template <typename T> Tensor<T> upsample2x(const Tensor<T>& x);

}  // namespace ocunet
