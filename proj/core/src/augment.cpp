#include "ocunet/augment.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ocunet {

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += taps[i + radius];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Tensor<float> flip_image(const Tensor<float>& image, bool horizontal) {
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
  std::vector<float> out(image.size());
  const float* src = image.data();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int si = horizontal ? i : h - 1 - i;
      const int sj = horizontal ? w - 1 - j : j;
      std::copy_n(src + (static_cast<std::size_t>(si) * w + sj) * c, c,
                  out.data() + (static_cast<std::size_t>(i) * w + j) * c);
    }
  }
  return Tensor<float>::from_data(image.shape(), std::move(out));
}

LabelMap flip_labels(const LabelMap& labels, bool horizontal) {
  LabelMap out;
  out.h = labels.h;
  out.w = labels.w;
  out.data.resize(labels.size());
  for (int i = 0; i < labels.h; ++i) {
    for (int j = 0; j < labels.w; ++j) {
      const int si = horizontal ? i : labels.h - 1 - i;
      const int sj = horizontal ? labels.w - 1 - j : j;
      out.data[static_cast<std::size_t>(i) * labels.w + j] =
          labels.data[static_cast<std::size_t>(si) * labels.w + sj];
    }
  }
  return out;
}

namespace {

int clamp_index(int v, int limit) { return std::min(std::max(v, 0), limit - 1); }

}  // namespace

Tensor<float> gaussian_blur(const Tensor<float>& image, double sigma) {
  const std::vector<double> taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size()) / 2;
  const int h = image.dim(0), w = image.dim(1), c = image.dim(2);

  // Separable pass, rows then columns, replicating edge pixels.
  std::vector<float> tmp(image.size());
  const float* src = image.data();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int sj = clamp_index(j + t, w);
          acc += taps[t + radius] * src[(static_cast<std::size_t>(i) * w + sj) * c + ch];
        }
        tmp[(static_cast<std::size_t>(i) * w + j) * c + ch] = static_cast<float>(acc);
      }
    }
  }
  std::vector<float> out(image.size());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const int si = clamp_index(i + t, h);
          acc += taps[t + radius] * tmp[(static_cast<std::size_t>(si) * w + j) * c + ch];
        }
        out[(static_cast<std::size_t>(i) * w + j) * c + ch] = static_cast<float>(acc);
      }
    }
  }
  return Tensor<float>::from_data(image.shape(), std::move(out));
}

Tensor<float> sharpen(const Tensor<float>& image, double sigma, double amount) {
  Tensor<float> blurred = gaussian_blur(image, sigma);
  std::vector<float> out(image.size());
  const float* src = image.data();
  const float* blur = blurred.data();
  const float a = static_cast<float>(amount);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(std::max(src[i] + a * (src[i] - blur[i]), 0.0f), 1.0f);
  }
  return Tensor<float>::from_data(image.shape(), std::move(out));
}

Sample augment(const Sample& sample, const AugmentationSpec& spec) {
  Sample out = sample;
  for (AugOp op : spec.ops) {
    switch (op) {
      case AugOp::hflip:
        out.image = flip_image(out.image, true);
        out.labels = flip_labels(out.labels, true);
        break;
      case AugOp::vflip:
        out.image = flip_image(out.image, false);
        out.labels = flip_labels(out.labels, false);
        break;
      case AugOp::gaussian_blur:
        out.image = gaussian_blur(out.image, spec.blur_sigma);
        break;
      case AugOp::sharpen:
        out.image = sharpen(out.image, spec.blur_sigma, spec.sharpen_amount);
        break;
    }
  }
  return out;
}

AugmentationSpec sample_augmentations(const AugmentationSpec& enabled, Rng& rng) {
  AugmentationSpec chosen;
  chosen.blur_sigma = enabled.blur_sigma;
  chosen.sharpen_amount = enabled.sharpen_amount;
  for (AugOp op : enabled.ops) {
    if (rng.uniform() < 0.5) chosen.ops.push_back(op);
  }
  return chosen;
}

AugmentationSpec parse_augmentation_ops(const std::string& csv) {
  AugmentationSpec spec;
  std::istringstream is(csv);
  std::string token;
  while (std::getline(is, token, ',')) {
    if (token.empty()) continue;
    if (token == "hflip") {
      spec.ops.push_back(AugOp::hflip);
    } else if (token == "vflip") {
      spec.ops.push_back(AugOp::vflip);
    } else if (token == "blur") {
      spec.ops.push_back(AugOp::gaussian_blur);
    } else if (token == "sharpen") {
      spec.ops.push_back(AugOp::sharpen);
    } else if (token != "none") {
      throw std::invalid_argument("augment: unknown op '" + token + "'");
    }
  }
  return spec;
}

}  // namespace ocunet
