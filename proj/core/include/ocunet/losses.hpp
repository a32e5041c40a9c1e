#pragma once

#include <vector>

#include "ocunet/tensor.hpp"

namespace ocunet {

/// Non-negative per-class (size 2, background then foreground) or per-pixel
/// (size N) weights for the weighted binary cross-entropy term.
template <typename T>
struct ClassWeights {
  std::vector<T> values;

  static ClassWeights uniform() { return {{T(1), T(1)}}; }
  void validate() const;
};

/// Mean over pixels of the negative log-likelihood of the true class.
/// y_pred holds per-pixel class probabilities along the last axis, y_true the
/// matching one-hot encoding. Probabilities are clamped to
/// [clamp_eps, 1 - clamp_eps] before the log.
template <typename T>
Tensor<T> cce_loss(const Tensor<T>& y_pred, const Tensor<T>& y_true, T clamp_eps = T(1e-7));

/// Weighted binary cross-entropy. As written, the class weight multiplies
/// only the positive (foreground) term; `symmetric` extends it to both terms.
template <typename T>
Tensor<T> wbce_loss(const Tensor<T>& y_pred, const Tensor<T>& y_true,
                    const ClassWeights<T>& weights, T clamp_eps = T(1e-7),
                    bool symmetric = false);

/// Soft dice loss: 1 - (2 * sum(y p) + smooth) / (sum(y) + sum(p) + smooth).
/// No thresholding; the smoothing term keeps empty-vs-empty masks at zero loss.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& y_pred, const Tensor<T>& y_true, T smooth = T(1e-6));

struct HybridLossConfig {
  double alpha = 0.5;  // weight of the WBCE term; (1 - alpha) goes to dice
  bool symmetric_wbce = false;
  double dice_smooth = 1e-6;
  double clamp_eps = 1e-7;

  void validate() const;
};

/// alpha * wbce + (1 - alpha) * dice.
template <typename T>
Tensor<T> hybrid_loss(const HybridLossConfig& config, const Tensor<T>& y_pred,
                      const Tensor<T>& y_true, const ClassWeights<T>& weights);

}  // namespace ocunet
