#include "ocunet/model.hpp"

#include <sstream>
#include <stdexcept>

namespace ocunet {

std::vector<int> ModelConfig::resolved_schedule() const {
  if (!channel_schedule.empty()) return channel_schedule;
  return {base_channels, 2 * base_channels, 4 * base_channels, 8 * base_channels};
}

int ModelConfig::resolved_aspp_channels() const {
  if (aspp_channels > 0) return aspp_channels;
  return 2 * resolved_schedule().back();
}

void ModelConfig::validate() const {
  if (num_classes < 1) throw std::invalid_argument("model config: num_classes must be >= 1");
  if (input_h < 16 || input_w < 16 || input_h % 16 != 0 || input_w % 16 != 0) {
    throw std::invalid_argument("model config: input size " + std::to_string(input_h) + "x" +
                                std::to_string(input_w) + " must be divisible by 16");
  }
  const auto sched = resolved_schedule();
  if (sched.size() != 4) {
    throw std::invalid_argument("model config: channel schedule must list 4 level widths");
  }
  for (int c : sched) {
    if (c < 1) throw std::invalid_argument("model config: channel widths must be positive");
  }
  if (base_channels < 1) throw std::invalid_argument("model config: base_channels must be >= 1");
  if (aspp_rates.empty()) throw std::invalid_argument("model config: aspp_rates must be non-empty");
  if (se_ratio < 1) throw std::invalid_argument("model config: se_ratio must be >= 1");
  if (!(bn_epsilon > 0)) throw std::invalid_argument("model config: bn_epsilon must be positive");
  if (!(bn_momentum >= 0 && bn_momentum < 1)) {
    throw std::invalid_argument("model config: bn_momentum must lie in [0, 1)");
  }
  if (!(leaky_slope >= 0 && leaky_slope < 1)) {
    throw std::invalid_argument("model config: leaky_slope must lie in [0, 1)");
  }
}

KvDoc ModelConfig::to_kv() const {
  KvDoc doc;
  doc.set("base_channels", std::to_string(base_channels));
  doc.set("channel_schedule", join_int_list(resolved_schedule()));
  doc.set("aspp_channels", std::to_string(resolved_aspp_channels()));
  doc.set("aspp_rates", join_int_list(aspp_rates));
  doc.set("num_classes", std::to_string(num_classes));
  doc.set("input_h", std::to_string(input_h));
  doc.set("input_w", std::to_string(input_w));
  doc.set("leaky_slope", std::to_string(leaky_slope));
  doc.set("se_ratio", std::to_string(se_ratio));
  doc.set("bn_epsilon", std::to_string(bn_epsilon));
  doc.set("bn_momentum", std::to_string(bn_momentum));
  return doc;
}

ModelConfig ModelConfig::from_kv(const KvDoc& doc) {
  ModelConfig cfg;
  if (auto v = doc.find("base_channels")) cfg.base_channels = std::stoi(*v);
  if (auto v = doc.find("channel_schedule")) cfg.channel_schedule = parse_int_list(*v);
  if (auto v = doc.find("aspp_channels")) cfg.aspp_channels = std::stoi(*v);
  if (auto v = doc.find("aspp_rates")) cfg.aspp_rates = parse_int_list(*v);
  if (auto v = doc.find("num_classes")) cfg.num_classes = std::stoi(*v);
  if (auto v = doc.find("input_h")) cfg.input_h = std::stoi(*v);
  if (auto v = doc.find("input_w")) cfg.input_w = std::stoi(*v);
  if (auto v = doc.find("leaky_slope")) cfg.leaky_slope = std::stod(*v);
  if (auto v = doc.find("se_ratio")) cfg.se_ratio = std::stoi(*v);
  if (auto v = doc.find("bn_epsilon")) cfg.bn_epsilon = std::stod(*v);
  if (auto v = doc.find("bn_momentum")) cfg.bn_momentum = std::stod(*v);
  return cfg;
}

template <typename T>
typename OCUNet<T>::ConvBlock OCUNet<T>::make_conv_block(int in_ch, int out_ch, Rng& rng) {
  ConvBlock block;
  block.conv1 = ConvBnLReLU<T>(in_ch, out_ch, 3, 3, settings_, rng);
  block.conv2 = ConvBnLReLU<T>(out_ch, out_ch, 3, 3, settings_, rng);
  return block;
}

template <typename T>
OCUNet<T>::OCUNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  settings_.leaky_slope = static_cast<T>(config_.leaky_slope);
  settings_.bn_epsilon = static_cast<T>(config_.bn_epsilon);
  settings_.bn_momentum = static_cast<T>(config_.bn_momentum);
  settings_.se_ratio = config_.se_ratio;

  Rng rng(seed);
  const auto sched = config_.resolved_schedule();
  const int aspp_ch = config_.resolved_aspp_channels();
  const int h = config_.input_h;
  const int w = config_.input_w;

  // Encoder widths. Levels 3 and 4 emit the CSAF-fused concatenation of their
  // own conv output with the two refined lower-level feature maps.
  const int s1 = sched[0];
  const int s2 = sched[1];
  const int s3 = sched[2] + s1 + s2;
  const int s4 = sched[3] + s2 + s3;

  enc_blocks_.push_back(make_conv_block(3, sched[0], rng));
  enc_blocks_.push_back(make_conv_block(sched[0], sched[1], rng));
  enc_blocks_.push_back(make_conv_block(sched[1], sched[2], rng));
  enc_blocks_.push_back(make_conv_block(s3, sched[3], rng));
  for (int level = 0; level < 4; ++level) {
    enc_se_.emplace_back(enc_blocks_[level].conv2.out_channels(), settings_.se_ratio,
                         settings_.leaky_slope, rng);
  }
  enc_ms_.emplace_back(s1, settings_, rng);  // level 3 <- level 1
  enc_ms_.emplace_back(s2, settings_, rng);  // level 3 <- level 2
  enc_ms_.emplace_back(s2, settings_, rng);  // level 4 <- level 2
  enc_ms_.emplace_back(s3, settings_, rng);  // level 4 <- level 3
  enc_csaf_.emplace_back(s3, h / 4, w / 4, settings_, rng);
  enc_csaf_.emplace_back(s4, h / 8, w / 8, settings_, rng);

  aspp_ = ASPPModule<T>(s4, aspp_ch, config_.aspp_rates, settings_, rng);

  const std::array<int, 4> skip_ch{s1, s2, s3, s4};
  for (int level = 1; level <= 4; ++level) {
    skips_.emplace_back(skip_ch[level - 1], level, settings_, rng);
  }

  // Decoder, deepest level first. The final two levels also take upsampled
  // features from the two decoder levels before them.
  const int d4_in = aspp_ch + s4;
  const int d3_in = sched[3] + s3;
  const int d2_in = sched[2] + s2 + sched[3] + sched[2];
  const int d1_in = sched[1] + s1 + sched[2] + sched[1];
  dec_blocks_.push_back(make_conv_block(d4_in, sched[3], rng));
  dec_blocks_.push_back(make_conv_block(d3_in, sched[2], rng));
  dec_blocks_.push_back(make_conv_block(d2_in, sched[1], rng));
  dec_blocks_.push_back(make_conv_block(d1_in, sched[0], rng));
  dec_csaf_.emplace_back(sched[3], h / 8, w / 8, settings_, rng);
  dec_csaf_.emplace_back(sched[2], h / 4, w / 4, settings_, rng);
  dec_csaf_.emplace_back(sched[1], h / 2, w / 2, settings_, rng);
  dec_csaf_.emplace_back(sched[0], h, w, settings_, rng);

  head_ = Conv2D<T>(sched[0], config_.num_classes, 1, 1, rng);

  enc_blocks_[0].collect("enc1", params_);
  enc_blocks_[1].collect("enc2", params_);
  enc_blocks_[2].collect("enc3", params_);
  enc_blocks_[3].collect("enc4", params_);
  for (int level = 0; level < 4; ++level) {
    enc_se_[level].collect("enc" + std::to_string(level + 1) + ".se", params_);
  }
  enc_ms_[0].collect("enc3.ms_l1", params_);
  enc_ms_[1].collect("enc3.ms_l2", params_);
  enc_ms_[2].collect("enc4.ms_l2", params_);
  enc_ms_[3].collect("enc4.ms_l3", params_);
  enc_csaf_[0].collect("enc3.csaf", params_);
  enc_csaf_[1].collect("enc4.csaf", params_);
  aspp_.collect("aspp", params_);
  for (int level = 1; level <= 4; ++level) {
    skips_[level - 1].collect("skip" + std::to_string(level), params_);
  }
  dec_blocks_[0].collect("dec4", params_);
  dec_blocks_[1].collect("dec3", params_);
  dec_blocks_[2].collect("dec2", params_);
  dec_blocks_[3].collect("dec1", params_);
  dec_csaf_[0].collect("dec4.csaf", params_);
  dec_csaf_[1].collect("dec3.csaf", params_);
  dec_csaf_[2].collect("dec2.csaf", params_);
  dec_csaf_[3].collect("dec1.csaf", params_);
  head_.collect("head", params_);
}

namespace {

template <typename T>
Tensor<T> down2x(const Tensor<T>& x, int times) {
  Tensor<T> out = x;
  for (int i = 0; i < times; ++i) out = max_pool2(out);
  return out;
}

template <typename T>
Tensor<T> up2x(const Tensor<T>& x, int times) {
  Tensor<T> out = x;
  for (int i = 0; i < times; ++i) out = upsample2x(out);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> OCUNet<T>::forward(const Tensor<T>& batch, bool training) {
  if (batch.rank() != 4 || batch.dim(3) != 3) {
    throw std::invalid_argument("ocunet: expected [B,H,W,3] batch, got " +
                                shape_str(batch.shape()));
  }
  if (batch.dim(1) != config_.input_h || batch.dim(2) != config_.input_w) {
    throw std::invalid_argument("ocunet: batch " + shape_str(batch.shape()) +
                                " does not match configured input " +
                                std::to_string(config_.input_h) + "x" +
                                std::to_string(config_.input_w));
  }

  Tensor<T> s1 = enc_se_[0].forward(enc_blocks_[0].forward(batch, training));
  Tensor<T> s2 = enc_se_[1].forward(enc_blocks_[1].forward(max_pool2(s1), training));

  Tensor<T> t3 = enc_se_[2].forward(enc_blocks_[2].forward(max_pool2(s2), training));
  Tensor<T> m31 = enc_ms_[0].forward(down2x(s1, 2), training);
  Tensor<T> m32 = enc_ms_[1].forward(down2x(s2, 1), training);
  Tensor<T> s3 = enc_csaf_[0].forward(concat<T>({t3, m31, m32}), training);

  Tensor<T> t4 = enc_se_[3].forward(enc_blocks_[3].forward(max_pool2(s3), training));
  Tensor<T> m42 = enc_ms_[2].forward(down2x(s2, 2), training);
  Tensor<T> m43 = enc_ms_[3].forward(down2x(s3, 1), training);
  Tensor<T> s4 = enc_csaf_[1].forward(concat<T>({t4, m42, m43}), training);

  Tensor<T> bottleneck = aspp_.forward(max_pool2(s4), training);

  Tensor<T> d4 = dec_csaf_[0].forward(
      dec_blocks_[0].forward(
          concat<T>({upsample2x(bottleneck), skips_[3].forward(s4, training)}), training),
      training);
  Tensor<T> d3 = dec_csaf_[1].forward(
      dec_blocks_[1].forward(concat<T>({upsample2x(d4), skips_[2].forward(s3, training)}),
                             training),
      training);
  Tensor<T> d2 = dec_csaf_[2].forward(
      dec_blocks_[2].forward(concat<T>({upsample2x(d3), skips_[1].forward(s2, training),
                                        up2x(d4, 2), up2x(d3, 1)}),
                             training),
      training);
  Tensor<T> d1 = dec_csaf_[3].forward(
      dec_blocks_[3].forward(concat<T>({upsample2x(d2), skips_[0].forward(s1, training),
                                        up2x(d3, 2), up2x(d2, 1)}),
                             training),
      training);

  Tensor<T> logits = head_.forward(d1);
  return config_.num_classes >= 2 ? softmax(logits) : sigmoid(logits);
}

template <typename T>
ModelStructure OCUNet<T>::structure() const {
  ModelStructure s;
  s.csaf_modules = static_cast<int>(enc_csaf_.size() + dec_csaf_.size());
  s.aspp_modules = 1;
  for (int level = 1; level <= 4; ++level) {
    s.skip_chain_blocks[level - 1] = skips_[level - 1].block_count();
  }
  s.encoder_fusion_residuals = static_cast<int>(enc_ms_.size());
  return s;
}

template class OCUNet<float>;
template class OCUNet<double>;

}  // namespace ocunet
