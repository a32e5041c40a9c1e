#include "ocunet/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ocunet {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  // Top 53 bits -> [0, 1); identical on every platform.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("rng: empty integer range");
  auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ (0xA0761D6478BD642Full + stream * 0xE7037ED1A0B428DBull)));
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T lo, T hi, Rng& rng, bool requires_grad) {
  std::vector<T> vals(shape_numel(shape));
  for (auto& v : vals) v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  return Tensor<T>::from_data(std::move(shape), std::move(vals), requires_grad);
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, T mean, T stddev, Rng& rng, bool requires_grad) {
  std::vector<T> vals(shape_numel(shape));
  for (auto& v : vals) v = static_cast<T>(mean + stddev * rng.normal());
  return Tensor<T>::from_data(std::move(shape), std::move(vals), requires_grad);
}

template <typename T>
Tensor<T> he_uniform(Shape shape, int fan_in, Rng& rng, bool requires_grad) {
  if (fan_in <= 0) throw std::invalid_argument("he_uniform: fan_in must be positive");
  T limit = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  return uniform_tensor<T>(std::move(shape), -limit, limit, rng, requires_grad);
}

template Tensor<float> uniform_tensor<float>(Shape, float, float, Rng&, bool);
template Tensor<double> uniform_tensor<double>(Shape, double, double, Rng&, bool);
template Tensor<float> normal_tensor<float>(Shape, float, float, Rng&, bool);
template Tensor<double> normal_tensor<double>(Shape, double, double, Rng&, bool);
template Tensor<float> he_uniform<float>(Shape, int, Rng&, bool);
template Tensor<double> he_uniform<double>(Shape, int, Rng&, bool);

}  // namespace ocunet
