#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ocunet/blocks.hpp"
#include "ocunet/kv.hpp"
#include "ocunet/params.hpp"

namespace ocunet {

struct ModelConfig {
  int base_channels = 32;
  std::vector<int> channel_schedule;  // empty -> {c, 2c, 4c, 8c}
  int aspp_channels = 0;              // 0 -> 2 * top width (512 for the default schedule)
  int num_classes = 3;
  int input_h = 512;
  int input_w = 512;
  double leaky_slope = 0.3;
  int se_ratio = 16;
  std::vector<int> aspp_rates{1, 6, 12, 18};
  double bn_epsilon = 1e-3;
  double bn_momentum = 0.99;

  std::vector<int> resolved_schedule() const;
  int resolved_aspp_channels() const;
  void validate() const;

  KvDoc to_kv() const;
  static ModelConfig from_kv(const KvDoc& doc);
};

struct ModelStructure {
  int csaf_modules = 0;
  int aspp_modules = 0;
  std::array<int, 4> skip_chain_blocks{};   // residual blocks per level 1..4
  int encoder_fusion_residuals = 0;         // multi-scale refinement blocks
};

/// The full segmentation network: a four-level encoder (conv block + SE per
/// level, multi-scale fusion through CSAF at levels 3 and 4), an ASPP
/// bottleneck, a four-level decoder with residual skip chains and a CSAF at
/// the end of every level, multi-scale concatenation into the last two
/// decoder levels, and a 1x1 classification head.
template <typename T>
class OCUNet {
 public:
  OCUNet(const ModelConfig& config, std::uint64_t seed);

  /// batch [B,H,W,3] -> per-pixel class probabilities [B,H,W,num_classes].
  Tensor<T> forward(const Tensor<T>& batch, bool training);

  const ModelConfig& config() const { return config_; }
  ModelStructure structure() const;
  ParamList<T>& parameters() { return params_; }
  const ParamList<T>& parameters() const { return params_; }
  std::size_t param_count() const { return trainable_count(params_); }

  const ResidualChain<T>& skip_chain(int level) const { return skips_.at(level - 1); }
  const std::vector<CSAFModule<T>>& encoder_csaf() const { return enc_csaf_; }
  const std::vector<CSAFModule<T>>& decoder_csaf() const { return dec_csaf_; }
  const ASPPModule<T>& aspp() const { return aspp_; }

 private:
  struct ConvBlock {
    ConvBnLReLU<T> conv1, conv2;
    Tensor<T> forward(const Tensor<T>& x, bool training) {
      return conv2.forward(conv1.forward(x, training), training);
    }
    void collect(const std::string& prefix, ParamList<T>& out) {
      conv1.collect(prefix + ".conv1", out);
      conv2.collect(prefix + ".conv2", out);
    }
  };

  ConvBlock make_conv_block(int in_ch, int out_ch, Rng& rng);

  ModelConfig config_;
  BlockSettings<T> settings_;

  std::vector<ConvBlock> enc_blocks_;       // levels 1..4
  std::vector<SEBlock<T>> enc_se_;          // levels 1..4
  std::vector<ResidualBlock<T>> enc_ms_;    // l3<-l1, l3<-l2, l4<-l2, l4<-l3
  std::vector<CSAFModule<T>> enc_csaf_;     // levels 3, 4
  ASPPModule<T> aspp_;
  std::vector<ResidualChain<T>> skips_;     // levels 1..4
  std::vector<ConvBlock> dec_blocks_;       // levels 4..1 stored as [0..3] = level 4..1
  std::vector<CSAFModule<T>> dec_csaf_;
  Conv2D<T> head_;

  ParamList<T> params_;
};

extern template class OCUNet<float>;
extern template class OCUNet<double>;

}  // namespace ocunet
