#include <doctest.h>

#include <unordered_set>

#include "ocunet/autograd.hpp"
#include "ocunet/gradcheck.hpp"
#include "ocunet/ops.hpp"
#include "ocunet/random.hpp"

using namespace ocunet;

TEST_CASE("gradient of a plain sum is all ones") {
  Rng rng(21);
  Tensor<double> x = uniform_tensor<double>({3, 4}, -1.0, 1.0, rng, true);
  backward(sum(x));
  for (double g : x.grad_values()) CHECK(g == 1.0);
}

TEST_CASE("gradient of sum(x*x) is 2x") {
  Rng rng(22);
  Tensor<double> x = uniform_tensor<double>({2, 5}, -2.0, 2.0, rng, true);
  backward(sum(mul(x, x)));
  auto grads = x.grad_values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(grads[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward refuses non-scalar outputs") {
  Tensor<double> x = Tensor<double>::full({2, 2}, 1.0, true);
  Tensor<double> y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("tape records nodes in topological order and freezes after one pass") {
  Rng rng(23);
  Tensor<double> x = uniform_tensor<double>({4}, -1.0, 1.0, rng, true);
  Tensor<double> a = mul(x, x);
  Tensor<double> b = add(a, x);   // diamond: x feeds both a and the add
  Tensor<double> loss = sum(mul(b, a));
  Tape<double> tape(loss);
  CHECK(tape.node_count() == 4);

  std::unordered_set<const void*> seen;
  for (const auto& impl : tape.order()) {
    for (const auto& input : impl->node->inputs) {
      if (input->node) {
        INFO("every producer must be listed before its consumer");
        CHECK(seen.count(input.get()) == 1);
      }
    }
    seen.insert(impl.get());
  }

  CHECK_FALSE(tape.frozen());
  tape.backward();
  CHECK(tape.frozen());
  CHECK_THROWS_AS(tape.backward(), std::runtime_error);
}

TEST_CASE("no-grad mode skips graph recording") {
  Tensor<double> x = Tensor<double>::full({3}, 2.0, true);
  NoGradGuard guard;
  Tensor<double> y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(Tape<double>(sum(y)).node_count() == 0);
}

TEST_CASE("shared subexpressions accumulate gradients once per use") {
  // f = sum(a) + sum(a) with a = x*x used twice: df/dx = 4x.
  Tensor<double> x = Tensor<double>::from_data({2}, {1.5, -0.5}, true);
  Tensor<double> a = mul(x, x);
  backward(add(sum(a), sum(a)));
  CHECK(x.grad_values()[0] == doctest::Approx(4.0 * 1.5));
  CHECK(x.grad_values()[1] == doctest::Approx(4.0 * -0.5));
}

TEST_CASE("finite-difference suite validates every primitive, block, and loss") {
  const auto results = run_gradient_checks();
  CHECK(results.size() >= 10);
  for (const auto& r : results) {
    INFO(r.unit, " max_rel_err=", r.max_rel_error, " tol=", r.tolerance);
    CHECK(r.passed);
  }
}

TEST_CASE("an injected sign error is caught and attributed") {
  GradCheckOptions options;
  options.max_probes = 16;
  const auto results = run_gradient_checks(options, "se_block");
  bool saw_failure = false;
  for (const auto& r : results) {
    if (r.unit == "se_block") {
      CHECK_FALSE(r.passed);
      saw_failure = true;
    } else {
      CHECK(r.passed);
    }
  }
  CHECK(saw_failure);
  CHECK_FALSE(gradcheck_all_passed(results));
}
