#include "ocunet/losses.hpp"

#include <stdexcept>

#include "ocunet/ops.hpp"

namespace ocunet {

template <typename T>
void ClassWeights<T>::validate() const {
  bool any_positive = false;
  for (T w : values) {
    if (w < T(0)) throw std::invalid_argument("class weights: negative weight");
    if (w > T(0)) any_positive = true;
  }
  if (!any_positive) throw std::invalid_argument("class weights: all weights are zero");
}

void HybridLossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("hybrid loss: alpha must lie in [0, 1]");
  }
  if (dice_smooth < 0.0) throw std::invalid_argument("hybrid loss: smooth must be >= 0");
}

template <typename T>
Tensor<T> cce_loss(const Tensor<T>& y_pred, const Tensor<T>& y_true, T clamp_eps) {
  if (y_pred.shape() != y_true.shape()) {
    throw std::invalid_argument("cce: prediction " + shape_str(y_pred.shape()) +
                                " and truth " + shape_str(y_true.shape()) + " disagree");
  }
  if (y_pred.rank() < 1) throw std::invalid_argument("cce: inputs need a class axis");
  const std::size_t pixels = y_pred.size() / static_cast<std::size_t>(y_pred.dim(-1));
  Tensor<T> p = clamp(y_pred, clamp_eps, T(1) - clamp_eps);
  Tensor<T> nll = sum(mul(y_true, log(p)));
  return mul_scalar(nll, -T(1) / static_cast<T>(pixels));
}

template <typename T>
Tensor<T> wbce_loss(const Tensor<T>& y_pred, const Tensor<T>& y_true,
                    const ClassWeights<T>& weights, T clamp_eps, bool symmetric) {
  if (y_pred.shape() != y_true.shape()) {
    throw std::invalid_argument("wbce: prediction " + shape_str(y_pred.shape()) +
                                " and truth " + shape_str(y_true.shape()) + " disagree");
  }
  weights.validate();
  const std::size_t n = y_pred.size();

  // Per-pixel weight map from either a 2-class weight pair or an N-vector.
  std::vector<T> w(n);
  if (weights.values.size() == 2) {
    const T* yt = y_true.data();
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = yt[i] > T(0.5) ? weights.values[1] : weights.values[0];
    }
  } else if (weights.values.size() == n) {
    w = weights.values;
  } else {
    throw std::invalid_argument("wbce: expected 2 class weights or " + std::to_string(n) +
                                " per-pixel weights, got " +
                                std::to_string(weights.values.size()));
  }
  Tensor<T> wmap = Tensor<T>::from_data(y_true.shape(), std::move(w));

  Tensor<T> p = clamp(y_pred, clamp_eps, T(1) - clamp_eps);
  Tensor<T> pos = mul(wmap, mul(y_true, log(p)));
  Tensor<T> one_minus_y = add_scalar(mul_scalar(y_true, T(-1)), T(1));
  Tensor<T> one_minus_p = add_scalar(mul_scalar(p, T(-1)), T(1));
  Tensor<T> neg = mul(one_minus_y, log(one_minus_p));
  if (symmetric) neg = mul(wmap, neg);
  return mul_scalar(sum(add(pos, neg)), -T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& y_pred, const Tensor<T>& y_true, T smooth) {
  if (y_pred.shape() != y_true.shape()) {
    throw std::invalid_argument("dice: prediction " + shape_str(y_pred.shape()) +
                                " and truth " + shape_str(y_true.shape()) + " disagree");
  }
  Tensor<T> overlap = sum(mul(y_true, y_pred));
  Tensor<T> total = add(sum(y_true), sum(y_pred));
  Tensor<T> ratio = div(add_scalar(mul_scalar(overlap, T(2)), smooth), add_scalar(total, smooth));
  return add_scalar(mul_scalar(ratio, T(-1)), T(1));
}

template <typename T>
Tensor<T> hybrid_loss(const HybridLossConfig& config, const Tensor<T>& y_pred,
                      const Tensor<T>& y_true, const ClassWeights<T>& weights) {
  config.validate();
  const T alpha = static_cast<T>(config.alpha);
  Tensor<T> w = wbce_loss(y_pred, y_true, weights, static_cast<T>(config.clamp_eps),
                          config.symmetric_wbce);
  Tensor<T> d = dice_loss(y_pred, y_true, static_cast<T>(config.dice_smooth));
  return add(mul_scalar(w, alpha), mul_scalar(d, T(1) - alpha));
}

template struct ClassWeights<float>;
template struct ClassWeights<double>;
template Tensor<float> cce_loss<float>(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> cce_loss<double>(const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> wbce_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                        const ClassWeights<float>&, float, bool);
template Tensor<double> wbce_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                          const ClassWeights<double>&, double, bool);
template Tensor<float> dice_loss<float>(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> dice_loss<double>(const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> hybrid_loss<float>(const HybridLossConfig&, const Tensor<float>&,
                                          const Tensor<float>&, const ClassWeights<float>&);
template Tensor<double> hybrid_loss<double>(const HybridLossConfig&, const Tensor<double>&,
                                            const Tensor<double>&, const ClassWeights<double>&);

}  // namespace ocunet
