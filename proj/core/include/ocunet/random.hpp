#pragma once

#include <cstdint>
#include <random>

#include "ocunet/tensor.hpp"

namespace ocunet {

/// Seedable generator with a platform-independent mapping from engine output
/// to floats, so identical seeds give identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  int uniform_int(int lo, int hi);         // [lo, hi]
  double normal();                         // standard normal, Box-Muller

  /// Independent substream; forking with the same (seed, stream) pair always
  /// yields the same generator.
  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T lo, T hi, Rng& rng, bool requires_grad = false);

template <typename T>
Tensor<T> normal_tensor(Shape shape, T mean, T stddev, Rng& rng, bool requires_grad = false);

/// He-style fan-in scaled uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
Tensor<T> he_uniform(Shape shape, int fan_in, Rng& rng, bool requires_grad = true);

}  // namespace ocunet
