#pragma once

#include <cstdint>
#include <vector>

#include "ocunet/ops.hpp"
#include "ocunet/params.hpp"
#include "ocunet/random.hpp"
#include "ocunet/tensor.hpp"

namespace ocunet {

/// Knobs shared by every block; the model config passes these through.
template <typename T>
struct BlockSettings {
  T leaky_slope = T(0.3);
  T bn_epsilon = T(1e-3);
  T bn_momentum = T(0.99);
  int se_ratio = 16;
};

template <typename T>
class Conv2D {
 public:
  Conv2D() = default;
  Conv2D(int in_channels, int out_channels, int kh, int kw, Rng& rng, int dilation = 1);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);
  const Tensor<T>& kernel() const { return kernel_; }
  Tensor<T>& kernel() { return kernel_; }
  Tensor<T>& bias() { return bias_; }
  int out_channels() const { return kernel_.dim(3); }

 private:
  Tensor<T> kernel_;  // [kh,kw,Cin,Cout]
  Tensor<T> bias_;    // [Cout]
  int dilation_ = 1;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(int channels, T epsilon, T momentum);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out);
  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  Tensor<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  T epsilon_ = T(1e-3);
  T momentum_ = T(0.99);
};

/// Conv2D -> batch norm -> leaky ReLU, stride 1, same padding.
template <typename T>
class ConvBnLReLU {
 public:
  ConvBnLReLU() = default;
  ConvBnLReLU(int in_channels, int out_channels, int kh, int kw, const BlockSettings<T>& settings,
              Rng& rng, int dilation = 1);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out);
  Conv2D<T>& conv() { return conv_; }
  BatchNorm<T>& bn() { return bn_; }
  int out_channels() const { return conv_.out_channels(); }

 private:
  Conv2D<T> conv_;
  BatchNorm<T> bn_;
  T slope_ = T(0.3);
};

/// Squeeze-and-excitation channel attention: global average pool, a two-layer
/// bottleneck (leaky ReLU then sigmoid), and per-channel rescaling. The hidden
/// width is max(1, C / ratio).
template <typename T>
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(int channels, int ratio, T slope, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out);
  int channels() const { return channels_; }
  int hidden_width() const { return hidden_; }
  Tensor<T>& reduce_weights() { return w1_; }
  Tensor<T>& expand_weights() { return w2_; }
  std::size_t forward_count() const { return forward_count_; }

 private:
  Tensor<T> w1_;  // [C, hidden]
  Tensor<T> w2_;  // [hidden, C]
  int channels_ = 0;
  int hidden_ = 0;
  T slope_ = T(0.3);
  mutable std::size_t forward_count_ = 0;
};

/// Channel and spatial attention fusion. Three chained conv blocks (3x3, 3x3,
/// 1x1, all keeping the input width), an SE pass over the last, a residual sum
/// of the three signals, channel-max + kxk conv + sigmoid for the spatial map,
/// and finally the map multiplied onto the module input.
template <typename T>
class CSAFModule {
 public:
  CSAFModule() = default;
  CSAFModule(int channels, int map_h, int map_w, const BlockSettings<T>& settings, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out);
  int channels() const { return channels_; }
  int spatial_kernel() const { return spatial_kernel_; }

  /// 7 when the map area exceeds 128*128, otherwise 5.
  static int select_spatial_kernel(int h, int w);

 private:
  ConvBnLReLU<T> block1_, block2_, block3_;
  SEBlock<T> se_;
  Conv2D<T> attention_;  // k x k, 1 -> 1 channel
  int channels_ = 0;
  int spatial_kernel_ = 5;
};

/// Parallel 3x3 and 1x1 conv-bn-lrelu branches summed together.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int channels, const BlockSettings<T>& settings, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out);
  std::size_t forward_count() const { return forward_count_; }

 private:
  ConvBnLReLU<T> branch3_, branch1_;
  std::size_t forward_count_ = 0;
};

/// Skip-connection refinement: 5 - level residual blocks followed by one SE
/// block. Valid levels are 1..4.
template <typename T>
class ResidualChain {
 public:
  ResidualChain() = default;
  ResidualChain(int channels, int level, const BlockSettings<T>& settings, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out);
  int level() const { return level_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  const std::vector<ResidualBlock<T>>& blocks() const { return blocks_; }
  const SEBlock<T>& se() const { return se_; }

 private:
  std::vector<ResidualBlock<T>> blocks_;
  SEBlock<T> se_;
  int level_ = 0;
};

/// Atrous spatial pyramid pooling: parallel dilated 3x3 branches, a 1x1
/// branch, and a global-pool branch, concatenated and fused by a 1x1 conv.
template <typename T>
class ASPPModule {
 public:
  ASPPModule() = default;
  ASPPModule(int in_channels, int out_channels, const std::vector<int>& rates,
             const BlockSettings<T>& settings, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out);
  int branch_count() const { return static_cast<int>(dilated_.size()) + 2; }
  int out_channels() const { return fuse_.out_channels(); }
  Conv2D<T>& fuse_conv() { return fuse_; }
  ConvBnLReLU<T>& point_branch() { return point_; }
  std::vector<ConvBnLReLU<T>>& dilated_branches() { return dilated_; }

 private:
  std::vector<ConvBnLReLU<T>> dilated_;
  ConvBnLReLU<T> point_;
  ConvBnLReLU<T> pool_proj_;
  Conv2D<T> fuse_;
  std::vector<int> rates_;
};

extern template struct BlockSettings<float>;
extern template struct BlockSettings<double>;
extern template class Conv2D<float>;
extern template class Conv2D<double>;
extern template class BatchNorm<float>;
extern template class BatchNorm<double>;
extern template class ConvBnLReLU<float>;
extern template class ConvBnLReLU<double>;
extern template class SEBlock<float>;
extern template class SEBlock<double>;
extern template class CSAFModule<float>;
extern template class CSAFModule<double>;
extern template class ResidualBlock<float>;
extern template class ResidualBlock<double>;
extern template class ResidualChain<float>;
extern template class ResidualChain<double>;
extern template class ASPPModule<float>;
extern template class ASPPModule<double>;

}  // namespace ocunet
