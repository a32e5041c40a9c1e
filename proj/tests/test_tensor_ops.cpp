#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ocunet/ops.hpp"
#include "ocunet/random.hpp"
#include "test_util.hpp"

using namespace ocunet;

namespace {

// Direct dilated cross-correlation, quadruple loop. The production path goes
// through patch matrices and a GEMM; this stays the independent reference.
template <typename T>
Tensor<T> conv2d_oracle(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                        int stride, int dilation) {
  const int b = input.dim(0), h = input.dim(1), w = input.dim(2), cin = input.dim(3);
  const int kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  const int eff_h = (kh - 1) * dilation + 1;
  const int eff_w = (kw - 1) * dilation + 1;
  const int oh = (h + stride - 1) / stride;
  const int ow = (w + stride - 1) / stride;
  const int pad_top = std::max(0, (oh - 1) * stride + eff_h - h) / 2;
  const int pad_left = std::max(0, (ow - 1) * stride + eff_w - w) / 2;
  std::vector<T> out(static_cast<std::size_t>(b) * oh * ow * cout, T(0));
  for (int bi = 0; bi < b; ++bi) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        for (int co = 0; co < cout; ++co) {
          T acc = bias.data()[co];
          for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
              const int ii = i * stride - pad_top + ki * dilation;
              const int jj = j * stride - pad_left + kj * dilation;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
              for (int ci = 0; ci < cin; ++ci) {
                acc += input.at({bi, ii, jj, ci}) * kernel.at({ki, kj, ci, co});
              }
            }
          }
          out[((static_cast<std::size_t>(bi) * oh + i) * ow + j) * cout + co] = acc;
        }
      }
    }
  }
  return Tensor<T>::from_data({b, oh, ow, cout}, std::move(out));
}

}  // namespace

TEST_CASE("conv2d 1x1 identity kernel passes the input through") {
  Rng rng(1);
  Tensor<float> x = uniform_tensor<float>({1, 4, 5, 1}, -1.f, 1.f, rng);
  Tensor<float> k = Tensor<float>::full({1, 1, 1, 1}, 1.f);
  Tensor<float> b = Tensor<float>::zeros({1});
  Tensor<float> y = conv2d(x, k, b, 1, 1, Padding::same);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d all-ones 3x3 on all-ones 3x3 input counts the window") {
  Tensor<float> x = Tensor<float>::full({1, 3, 3, 1}, 1.f);
  Tensor<float> k = Tensor<float>::full({3, 3, 1, 1}, 1.f);
  Tensor<float> y = conv2d(x, k, Tensor<float>::zeros({1}), 1, 1, Padding::same);
  CHECK(y.at({0, 1, 1, 0}) == doctest::Approx(9.f));
  CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(4.f));
  CHECK(y.at({0, 2, 2, 0}) == doctest::Approx(4.f));
  CHECK(y.at({0, 0, 1, 0}) == doctest::Approx(6.f));
  CHECK(y.at({0, 1, 2, 0}) == doctest::Approx(6.f));
}

TEST_CASE("conv2d dilation scatters an impulse like the nested-loop oracle") {
  Tensor<float> x = Tensor<float>::zeros({1, 7, 7, 1});
  x.mutable_data()[3 * 7 + 3] = 1.f;
  Rng rng(2);
  Tensor<float> k = uniform_tensor<float>({3, 3, 1, 1}, -1.f, 1.f, rng);
  Tensor<float> b = Tensor<float>::zeros({1});
  Tensor<float> got = conv2d(x, k, b, 1, 2, Padding::same);
  Tensor<float> want = conv2d_oracle(x, k, b, 1, 2);
  REQUIRE(got.shape() == want.shape());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-6));
  }
  // Kernel values land mirrored around the impulse at stride-2 offsets.
  CHECK(got.at({0, 1, 1, 0}) == doctest::Approx(k.at({2, 2, 0, 0})));
  CHECK(got.at({0, 5, 5, 0}) == doctest::Approx(k.at({0, 0, 0, 0})));
}

TEST_CASE("conv2d random case matches the oracle for strides and dilations") {
  Rng rng(3);
  Tensor<float> x = uniform_tensor<float>({2, 8, 9, 3}, -1.f, 1.f, rng);
  for (int dilation : {1, 2, 3}) {
    for (int stride : {1, 2}) {
      Tensor<float> k = uniform_tensor<float>({3, 3, 3, 4}, -1.f, 1.f, rng);
      Tensor<float> b = uniform_tensor<float>({4}, -1.f, 1.f, rng);
      Tensor<float> got = conv2d(x, k, b, stride, dilation, Padding::same);
      Tensor<float> want = conv2d_oracle(x, k, b, stride, dilation);
      REQUIRE(got.shape() == want.shape());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("conv2d same padding preserves spatial dims for odd kernels and dilations") {
  Rng rng(4);
  Tensor<float> x = uniform_tensor<float>({1, 20, 24, 2}, -1.f, 1.f, rng);
  for (int ksize : {1, 3, 5}) {
    for (int dilation : {1, 2, 6, 12, 18}) {
      Tensor<float> k = uniform_tensor<float>({ksize, ksize, 2, 2}, -1.f, 1.f, rng);
      Tensor<float> y = conv2d(x, k, Tensor<float>::zeros({2}), 1, dilation, Padding::same);
      CHECK(y.dim(1) == 20);
      CHECK(y.dim(2) == 24);
    }
  }
}

TEST_CASE("conv2d rejects mismatched channels naming both shapes") {
  Tensor<float> x = Tensor<float>::zeros({1, 4, 4, 3});
  Tensor<float> k = Tensor<float>::zeros({3, 3, 2, 4});
  expect_throw_containing(
      [&] { conv2d(x, k, Tensor<float>::zeros({4}), 1, 1, Padding::same); },
      {"[1x4x4x3]", "[3x3x2x4]"});
}

TEST_CASE("conv2d rejects even kernels and bad stride or dilation") {
  Tensor<float> x = Tensor<float>::zeros({1, 4, 4, 1});
  Tensor<float> even = Tensor<float>::zeros({2, 2, 1, 1});
  Tensor<float> odd = Tensor<float>::zeros({3, 3, 1, 1});
  Tensor<float> b = Tensor<float>::zeros({1});
  CHECK_THROWS_AS(conv2d(x, even, b, 1, 1, Padding::same), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, odd, b, 0, 1, Padding::same), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, odd, b, 1, 0, Padding::same), std::invalid_argument);
}

TEST_CASE("dense identity and zero weights") {
  Rng rng(5);
  Tensor<float> x = uniform_tensor<float>({3, 4}, -1.f, 1.f, rng);
  Tensor<float> eye = Tensor<float>::zeros({4, 4});
  for (int i = 0; i < 4; ++i) eye.mutable_data()[i * 4 + i] = 1.f;
  Tensor<float> y = dense(x, eye, Tensor<float>::zeros({4}));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));

  Tensor<float> bias = Tensor<float>::from_data({4}, {1.f, 2.f, 3.f, 4.f});
  Tensor<float> z = dense(x, Tensor<float>::zeros({4, 4}), bias);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) CHECK(z.at({r, c}) == doctest::Approx(bias.data()[c]));
  }
}

TEST_CASE("dense random case matches a naive matmul") {
  Rng rng(6);
  Tensor<float> x = uniform_tensor<float>({2, 3}, -1.f, 1.f, rng);
  Tensor<float> w = uniform_tensor<float>({3, 2}, -1.f, 1.f, rng);
  Tensor<float> y = dense(x, w);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      float acc = 0.f;
      for (int k = 0; k < 3; ++k) acc += x.at({r, k}) * w.at({k, c});
      CHECK(y.at({r, c}) == doctest::Approx(acc).epsilon(1e-6));
    }
  }
  CHECK_THROWS_AS(dense(x, Tensor<float>::zeros({4, 2})), std::invalid_argument);
}

TEST_CASE("batch_norm normalizes, scales, and guards epsilon") {
  Tensor<float> gamma = Tensor<float>::full({2}, 1.f);
  Tensor<float> beta = Tensor<float>::zeros({2});
  Tensor<float> rm = Tensor<float>::zeros({2});
  Tensor<float> rv = Tensor<float>::full({2}, 1.f);

  SUBCASE("constant input maps to zero in training mode") {
    Tensor<float> x = Tensor<float>::full({2, 3, 3, 2}, 4.f);
    Tensor<float> y = batch_norm(x, gamma, beta, rm, rv, true, 0.99f, 1e-3f);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(0.f));
  }
  SUBCASE("gamma zero pins the output at beta") {
    Rng rng(7);
    Tensor<float> x = uniform_tensor<float>({2, 3, 3, 2}, -2.f, 2.f, rng);
    Tensor<float> g0 = Tensor<float>::zeros({2});
    Tensor<float> b5 = Tensor<float>::full({2}, 5.f);
    Tensor<float> y = batch_norm(x, g0, b5, rm, rv, true, 0.99f, 1e-3f);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(5.f));
  }
  SUBCASE("per-channel statistics come out standardized") {
    Rng rng(8);
    Tensor<float> x = uniform_tensor<float>({2, 4, 4, 3}, -3.f, 3.f, rng);
    Tensor<float> g = Tensor<float>::full({3}, 1.f);
    Tensor<float> b = Tensor<float>::zeros({3});
    Tensor<float> m = Tensor<float>::zeros({3});
    Tensor<float> v = Tensor<float>::full({3}, 1.f);
    Tensor<float> y = batch_norm(x, g, b, m, v, true, 0.99f, 1e-3f);
    const int rows = 32;
    for (int c = 0; c < 3; ++c) {
      double mean = 0, var = 0;
      for (int r = 0; r < rows; ++r) mean += y.data()[r * 3 + c];
      mean /= rows;
      for (int r = 0; r < rows; ++r) {
        const double d = y.data()[r * 3 + c] - mean;
        var += d * d;
      }
      var /= rows;
      CHECK(std::abs(mean) < 1e-5);
      CHECK(var == doctest::Approx(1.0).epsilon(0.05));
    }
    // Running statistics moved toward the batch.
    CHECK(m.data()[0] != 0.f);
    CHECK(v.data()[0] != 1.f);
  }
  SUBCASE("epsilon must be positive") {
    Tensor<float> x = Tensor<float>::zeros({1, 2, 2, 2});
    CHECK_THROWS_AS(batch_norm(x, gamma, beta, rm, rv, true, 0.99f, 0.f),
                    std::invalid_argument);
  }
}

TEST_CASE("leaky_relu values and sort-order monotonicity") {
  Tensor<float> x = Tensor<float>::from_data({3}, {0.f, -1.f, 2.f});
  Tensor<float> y = leaky_relu(x, 0.01f);
  CHECK(y.data()[0] == 0.f);
  CHECK(y.data()[1] == doctest::Approx(-0.01f));
  CHECK(y.data()[2] == doctest::Approx(2.f));
  CHECK_THROWS_AS(leaky_relu(x, 1.f), std::invalid_argument);
  CHECK_THROWS_AS(leaky_relu(x, -0.1f), std::invalid_argument);

  Rng rng(9);
  std::vector<float> vals(64);
  for (auto& v : vals) v = static_cast<float>(rng.uniform(-5.0, 5.0));
  std::sort(vals.begin(), vals.end());
  Tensor<float> sorted = Tensor<float>::from_data({64}, std::move(vals));
  Tensor<float> out = leaky_relu(sorted, 0.3f);
  CHECK(std::is_sorted(out.data(), out.data() + out.size()));
}

TEST_CASE("sigmoid and softmax basics") {
  CHECK(sigmoid(Tensor<float>::scalar(0.f)).item() == doctest::Approx(0.5f));
  Tensor<float> equal = softmax(Tensor<float>::full({1, 3}, 0.7f));
  for (int c = 0; c < 3; ++c) CHECK(equal.data()[c] == doctest::Approx(1.f / 3.f));
}

TEST_CASE("softmax shift invariance and unit row sums") {
  Rng rng(10);
  Tensor<float> x = uniform_tensor<float>({2, 5, 5, 4}, -4.f, 4.f, rng);
  Tensor<float> shifted = add_scalar(x, 3.25f);
  Tensor<float> p = softmax(x);
  Tensor<float> q = softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(std::abs(p.data()[i] - q.data()[i]) < 1e-6f);
  }
  for (std::size_t row = 0; row < p.size() / 4; ++row) {
    float total = 0.f;
    for (int c = 0; c < 4; ++c) total += p.data()[row * 4 + c];
    CHECK(std::abs(total - 1.f) < 1e-5f);
    for (int c = 0; c < 4; ++c) CHECK(p.data()[row * 4 + c] >= 0.f);
  }
}

TEST_CASE("pooling family") {
  SUBCASE("constant tensors pass through every pool") {
    Tensor<float> x = Tensor<float>::full({1, 4, 4, 3}, 2.5f);
    Tensor<float> mp = max_pool2(x);
    CHECK(mp.shape() == Shape{1, 2, 2, 3});
    for (std::size_t i = 0; i < mp.size(); ++i) CHECK(mp.data()[i] == 2.5f);
    Tensor<float> gap = global_avg_pool(x);
    CHECK(gap.shape() == Shape{1, 3});
    for (std::size_t i = 0; i < gap.size(); ++i) CHECK(gap.data()[i] == doctest::Approx(2.5f));
    Tensor<float> cm = channel_max(x);
    CHECK(cm.shape() == Shape{1, 4, 4, 1});
    for (std::size_t i = 0; i < cm.size(); ++i) CHECK(cm.data()[i] == 2.5f);
  }
  SUBCASE("global average of a 2x2 map is its mean") {
    Tensor<float> x = Tensor<float>::from_data({1, 2, 2, 1}, {1.f, 2.f, 3.f, 4.f});
    CHECK(global_avg_pool(x).item() == doctest::Approx(2.5f));
  }
  SUBCASE("channel max keeps the larger channel per pixel") {
    Tensor<float> x = Tensor<float>::from_data({1, 1, 2, 2}, {1.f, 5.f, 7.f, 2.f});
    Tensor<float> y = channel_max(x);
    CHECK(y.shape() == Shape{1, 1, 2, 1});
    CHECK(y.data()[0] == 5.f);
    CHECK(y.data()[1] == 7.f);
  }
  SUBCASE("odd spatial dims are rejected") {
    CHECK_THROWS_AS(max_pool2(Tensor<float>::zeros({1, 3, 4, 1})), std::invalid_argument);
    CHECK_THROWS_AS(max_pool2(Tensor<float>::zeros({1, 4, 5, 1})), std::invalid_argument);
  }
}

TEST_CASE("upsample2x replication") {
  SUBCASE("single pixel becomes a 2x2 block") {
    Tensor<float> x = Tensor<float>::full({1, 1, 1, 1}, 3.f);
    Tensor<float> y = upsample2x(x);
    CHECK(y.shape() == Shape{1, 2, 2, 1});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == 3.f);
  }
  SUBCASE("upsample then max_pool recovers the input") {
    Rng rng(11);
    Tensor<float> x = uniform_tensor<float>({2, 3, 5, 4}, -1.f, 1.f, rng);
    Tensor<float> back = max_pool2(upsample2x(x));
    REQUIRE(back.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(back.data()[i] == x.data()[i]);
  }
  SUBCASE("checkerboard matches the index-map oracle") {
    Tensor<float> x = Tensor<float>::from_data({1, 2, 2, 1}, {0.f, 1.f, 1.f, 0.f});
    Tensor<float> y = upsample2x(x);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(y.at({0, i, j, 0}) == x.at({0, i / 2, j / 2, 0}));
      }
    }
  }
}

TEST_CASE("elementwise ops and broadcast") {
  Rng rng(12);
  Tensor<float> x = uniform_tensor<float>({2, 3, 3, 4}, -1.f, 1.f, rng);
  SUBCASE("adding zero is the identity") {
    Tensor<float> y = add(x, Tensor<float>::zeros({2, 3, 3, 4}));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
  }
  SUBCASE("a [B,H,W,1] map broadcasts across channels") {
    Tensor<float> m = uniform_tensor<float>({2, 3, 3, 1}, 0.f, 1.f, rng);
    Tensor<float> y = mul(x, m);
    REQUIRE(y.shape() == x.shape());
    for (int b = 0; b < 2; ++b) {
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          for (int c = 0; c < 4; ++c) {
            CHECK(y.at({b, i, j, c}) ==
                  doctest::Approx(x.at({b, i, j, c}) * m.at({b, i, j, 0})));
          }
        }
      }
    }
  }
  SUBCASE("incompatible shapes raise an error naming both") {
    expect_throw_containing(
        [&] { add(x, Tensor<float>::zeros({2, 3, 2, 4})); }, {"[2x3x3x4]", "[2x3x2x4]"});
  }
}

TEST_CASE("concat joins channels and slicing recovers the parts") {
  Rng rng(13);
  Tensor<float> a = uniform_tensor<float>({1, 2, 2, 2}, -1.f, 1.f, rng);
  Tensor<float> b = uniform_tensor<float>({1, 2, 2, 3}, -1.f, 1.f, rng);
  Tensor<float> joined = concat<float>({a, b});
  CHECK(joined.shape() == Shape{1, 2, 2, 5});

  Tensor<float> back_a = slice_channels(joined, 0, 2);
  Tensor<float> back_b = slice_channels(joined, 2, 5);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(back_a.data()[i] == a.data()[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(back_b.data()[i] == b.data()[i]);

  expect_throw_containing([&] { concat<float>({a, Tensor<float>::zeros({1, 2, 3, 1})}); },
                          {"[1x2x2x2]", "[1x2x3x1]"});
}

TEST_CASE("operations are deterministic across repeated calls") {
  Rng rng(14);
  Tensor<float> x = uniform_tensor<float>({2, 4, 4, 3}, -1.f, 1.f, rng);
  Tensor<float> k = uniform_tensor<float>({3, 3, 3, 2}, -1.f, 1.f, rng);
  Tensor<float> b = uniform_tensor<float>({2}, -1.f, 1.f, rng);
  Tensor<float> y1 = conv2d(x, k, b, 1, 1, Padding::same);
  Tensor<float> y2 = conv2d(x, k, b, 1, 1, Padding::same);
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
  Tensor<float> s1 = softmax(x);
  Tensor<float> s2 = softmax(x);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1.data()[i] == s2.data()[i]);
}
