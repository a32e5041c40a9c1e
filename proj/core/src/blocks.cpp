#include "ocunet/blocks.hpp"

#include <stdexcept>

namespace ocunet {

template <typename T>
Conv2D<T>::Conv2D(int in_channels, int out_channels, int kh, int kw, Rng& rng, int dilation)
    : dilation_(dilation) {
  kernel_ = he_uniform<T>({kh, kw, in_channels, out_channels}, kh * kw * in_channels, rng);
  bias_ = Tensor<T>::zeros({out_channels}, true);
}

template <typename T>
Tensor<T> Conv2D<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, kernel_, bias_, 1, dilation_, Padding::same);
}

template <typename T>
void Conv2D<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".kernel", kernel_, true});
  out.push_back({prefix + ".bias", bias_, true});
}

template <typename T>
BatchNorm<T>::BatchNorm(int channels, T epsilon, T momentum)
    : epsilon_(epsilon), momentum_(momentum) {
  gamma_ = Tensor<T>::full({channels}, T(1), true);
  beta_ = Tensor<T>::zeros({channels}, true);
  running_mean_ = Tensor<T>::zeros({channels});
  running_var_ = Tensor<T>::full({channels}, T(1));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, bool training) {
  return batch_norm(x, gamma_, beta_, running_mean_, running_var_, training, momentum_, epsilon_);
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".gamma", gamma_, true});
  out.push_back({prefix + ".beta", beta_, true});
  out.push_back({prefix + ".running_mean", running_mean_, false});
  out.push_back({prefix + ".running_var", running_var_, false});
}

template <typename T>
ConvBnLReLU<T>::ConvBnLReLU(int in_channels, int out_channels, int kh, int kw,
                            const BlockSettings<T>& settings, Rng& rng, int dilation)
    : conv_(in_channels, out_channels, kh, kw, rng, dilation),
      bn_(out_channels, settings.bn_epsilon, settings.bn_momentum),
      slope_(settings.leaky_slope) {}

template <typename T>
Tensor<T> ConvBnLReLU<T>::forward(const Tensor<T>& x, bool training) {
  return leaky_relu(bn_.forward(conv_.forward(x), training), slope_);
}

template <typename T>
void ConvBnLReLU<T>::collect(const std::string& prefix, ParamList<T>& out) {
  conv_.collect(prefix + ".conv", out);
  bn_.collect(prefix + ".bn", out);
}

template <typename T>
SEBlock<T>::SEBlock(int channels, int ratio, T slope, Rng& rng)
    : channels_(channels), slope_(slope) {
  if (channels <= 0) throw std::invalid_argument("se: channels must be positive");
  if (ratio <= 0) throw std::invalid_argument("se: reduction ratio must be positive");
  hidden_ = std::max(1, channels / ratio);
  w1_ = he_uniform<T>({channels, hidden_}, channels, rng);
  w2_ = he_uniform<T>({hidden_, channels}, hidden_, rng);
}

template <typename T>
Tensor<T> SEBlock<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(3) != channels_) {
    throw std::invalid_argument("se: input " + shape_str(x.shape()) + " does not match " +
                                std::to_string(channels_) + " channels");
  }
  ++forward_count_;
  Tensor<T> z = global_avg_pool(x);                       // [B,C]
  Tensor<T> hidden = leaky_relu(dense(z, w1_), slope_);   // [B,hidden]
  Tensor<T> s = sigmoid(dense(hidden, w2_));              // [B,C]
  return mul(x, reshape(s, {x.dim(0), 1, 1, channels_}));
}

template <typename T>
void SEBlock<T>::collect(const std::string& prefix, ParamList<T>& out) {
  out.push_back({prefix + ".w1", w1_, true});
  out.push_back({prefix + ".w2", w2_, true});
}

template <typename T>
int CSAFModule<T>::select_spatial_kernel(int h, int w) {
  return (static_cast<long long>(h) * w > 128ll * 128ll) ? 7 : 5;
}

template <typename T>
CSAFModule<T>::CSAFModule(int channels, int map_h, int map_w, const BlockSettings<T>& settings,
                          Rng& rng)
    : block1_(channels, channels, 3, 3, settings, rng),
      block2_(channels, channels, 3, 3, settings, rng),
      block3_(channels, channels, 1, 1, settings, rng),
      se_(channels, settings.se_ratio, settings.leaky_slope, rng),
      channels_(channels),
      spatial_kernel_(select_spatial_kernel(map_h, map_w)) {
  attention_ = Conv2D<T>(1, 1, spatial_kernel_, spatial_kernel_, rng);
}

template <typename T>
Tensor<T> CSAFModule<T>::forward(const Tensor<T>& x, bool training) {
  if (x.rank() != 4 || x.dim(3) != channels_) {
    throw std::invalid_argument("csaf: input " + shape_str(x.shape()) + " does not match " +
                                std::to_string(channels_) + " channels");
  }
  Tensor<T> f1 = block1_.forward(x, training);
  Tensor<T> f2 = block2_.forward(f1, training);
  Tensor<T> f3 = block3_.forward(f2, training);
  Tensor<T> fused = add(add(f1, f2), se_.forward(f3));
  Tensor<T> attn = sigmoid(attention_.forward(channel_max(fused)));  // [B,H,W,1]
  return mul(x, attn);
}

template <typename T>
void CSAFModule<T>::collect(const std::string& prefix, ParamList<T>& out) {
  block1_.collect(prefix + ".block1", out);
  block2_.collect(prefix + ".block2", out);
  block3_.collect(prefix + ".block3", out);
  se_.collect(prefix + ".se", out);
  attention_.collect(prefix + ".attention", out);
}

template <typename T>
ResidualBlock<T>::ResidualBlock(int channels, const BlockSettings<T>& settings, Rng& rng)
    : branch3_(channels, channels, 3, 3, settings, rng),
      branch1_(channels, channels, 1, 1, settings, rng) {}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, bool training) {
  ++forward_count_;
  return add(branch3_.forward(x, training), branch1_.forward(x, training));
}

template <typename T>
void ResidualBlock<T>::collect(const std::string& prefix, ParamList<T>& out) {
  branch3_.collect(prefix + ".b3", out);
  branch1_.collect(prefix + ".b1", out);
}

template <typename T>
ResidualChain<T>::ResidualChain(int channels, int level, const BlockSettings<T>& settings,
                                Rng& rng)
    : level_(level) {
  if (level < 1 || level > 4) {
    throw std::invalid_argument("residual chain: level must be in 1..4, got " +
                                std::to_string(level));
  }
  const int count = 5 - level;
  blocks_.reserve(count);
  for (int i = 0; i < count; ++i) blocks_.emplace_back(channels, settings, rng);
  se_ = SEBlock<T>(channels, settings.se_ratio, settings.leaky_slope, rng);
}

template <typename T>
Tensor<T> ResidualChain<T>::forward(const Tensor<T>& x, bool training) {
  Tensor<T> out = x;
  for (auto& block : blocks_) out = block.forward(out, training);
  return se_.forward(out);
}

template <typename T>
void ResidualChain<T>::collect(const std::string& prefix, ParamList<T>& out) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect(prefix + ".res" + std::to_string(i + 1), out);
  }
  se_.collect(prefix + ".se", out);
}

template <typename T>
ASPPModule<T>::ASPPModule(int in_channels, int out_channels, const std::vector<int>& rates,
                          const BlockSettings<T>& settings, Rng& rng)
    : rates_(rates) {
  if (rates.empty()) throw std::invalid_argument("aspp: at least one dilation rate required");
  dilated_.reserve(rates.size());
  for (int rate : rates) {
    if (rate < 1) throw std::invalid_argument("aspp: dilation rates must be >= 1");
    dilated_.emplace_back(in_channels, out_channels, 3, 3, settings, rng, rate);
  }
  point_ = ConvBnLReLU<T>(in_channels, out_channels, 1, 1, settings, rng);
  pool_proj_ = ConvBnLReLU<T>(in_channels, out_channels, 1, 1, settings, rng);
  fuse_ = Conv2D<T>(static_cast<int>(branch_count()) * out_channels, out_channels, 1, 1, rng);
}

template <typename T>
Tensor<T> ASPPModule<T>::forward(const Tensor<T>& x, bool training) {
  std::vector<Tensor<T>> branches;
  branches.reserve(branch_count());
  for (auto& branch : dilated_) branches.push_back(branch.forward(x, training));
  branches.push_back(point_.forward(x, training));
  // Image-pool branch: pooled descriptor projected, then spread back over the map.
  Tensor<T> pooled = reshape(global_avg_pool(x), {x.dim(0), 1, 1, x.dim(3)});
  Tensor<T> proj = pool_proj_.forward(pooled, training);
  Tensor<T> ones = Tensor<T>::full({1, x.dim(1), x.dim(2), 1}, T(1));
  branches.push_back(mul(proj, ones));
  return fuse_.forward(concat(branches));
}

template <typename T>
void ASPPModule<T>::collect(const std::string& prefix, ParamList<T>& out) {
  for (std::size_t i = 0; i < dilated_.size(); ++i) {
    dilated_[i].collect(prefix + ".d" + std::to_string(rates_[i]), out);
  }
  point_.collect(prefix + ".point", out);
  pool_proj_.collect(prefix + ".pool", out);
  fuse_.collect(prefix + ".fuse", out);
}

template struct BlockSettings<float>;
template struct BlockSettings<double>;
template class Conv2D<float>;
template class Conv2D<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class ConvBnLReLU<float>;
template class ConvBnLReLU<double>;
template class SEBlock<float>;
template class SEBlock<double>;
template class CSAFModule<float>;
template class CSAFModule<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class ResidualChain<float>;
template class ResidualChain<double>;
template class ASPPModule<float>;
template class ASPPModule<double>;

}  // namespace ocunet
