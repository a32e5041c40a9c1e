#pragma once

#include <vector>

#include "ocunet/dataset.hpp"
#include "ocunet/random.hpp"

namespace ocunet {

enum class AugOp { hflip, vflip, gaussian_blur, sharpen };

/// Geometric ops transform image and label map together; photometric ops
/// (blur, sharpen) touch the image only.
struct AugmentationSpec {
  std::vector<AugOp> ops;
  double blur_sigma = 1.0;
  double sharpen_amount = 1.0;
};

Sample augment(const Sample& sample, const AugmentationSpec& spec);

/// Draws an independent coin per enabled op, yielding the per-sample spec for
/// one epoch pass.
AugmentationSpec sample_augmentations(const AugmentationSpec& enabled, Rng& rng);

AugmentationSpec parse_augmentation_ops(const std::string& csv);

Tensor<float> flip_image(const Tensor<float>& image, bool horizontal);
LabelMap flip_labels(const LabelMap& labels, bool horizontal);

/// Truncated normalized Gaussian, radius ceil(3 sigma), replicated borders.
Tensor<float> gaussian_blur(const Tensor<float>& image, double sigma);

/// image + amount * (image - blur(image)), clamped to [0,1].
Tensor<float> sharpen(const Tensor<float>& image, double sigma, double amount);

/// The separable blur taps, exposed for checking against analytic values.
std::vector<double> gaussian_taps(double sigma);

}  // namespace ocunet
