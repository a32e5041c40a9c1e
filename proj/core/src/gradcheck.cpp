#include "ocunet/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "ocunet/autograd.hpp"
#include "ocunet/blocks.hpp"
#include "ocunet/losses.hpp"
#include "ocunet/model.hpp"
#include "ocunet/ops.hpp"
#include "ocunet/random.hpp"

namespace ocunet {
namespace {

constexpr double kPrimitiveTol = 1e-4;
constexpr double kModelTol = 1e-3;

/// One verification case: differentiable leaves plus a closure recomputing
/// the network output from their current values.
struct CheckCase {
  std::vector<Tensor<double>> leaves;
  std::function<Tensor<double>()> forward;
  int max_probes = 0;  // 0 -> harness default
  // Deep composites stack many activation kinks; a smaller half-step keeps
  // the central difference one-sided around them while double precision
  // keeps the round-off noise far below the tolerance.
  double step = 0.0;  // 0 -> harness default
};

struct Unit {
  std::string name;
  double tolerance;
  std::function<CheckCase(Rng&)> build;
};

Tensor<double> random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return uniform_tensor<double>(std::move(shape), lo, hi, rng, true);
}

/// Values on a jittered 0.01 grid: every pair differs by at least 5e-3, so a
/// 1e-5 probe step can never flip an argmax and bend the finite difference.
Tensor<double> separated_leaf(Shape shape, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  std::vector<double> values(n);
  const double center = 0.005 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = 0.01 * static_cast<double>(order[i]) + rng.uniform(0.0, 0.002) - center;
  }
  return Tensor<double>::from_data(std::move(shape), std::move(values), true);
}

/// Values bounded away from zero, for activation kinks.
Tensor<double> kink_free_leaf(Shape shape, Rng& rng, double margin = 0.05) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n);
  for (auto& v : values) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    v = sign * rng.uniform(margin, 1.0);
  }
  return Tensor<double>::from_data(std::move(shape), std::move(values), true);
}

GradCheckResult check_unit(const Unit& unit, const GradCheckOptions& options, bool inject_fault) {
  Rng rng(splitmix64(options.seed ^ std::hash<std::string>{}(unit.name)));
  CheckCase cc = unit.build(rng);

  // Fixed random direction; a plain sum would null out softmax-style
  // gradients whose rows always sum to one.
  Tensor<double> direction;
  {
    NoGradGuard no_grad;
    Tensor<double> probe_out = cc.forward();
    Rng dir_rng = rng.fork(0xD17);
    std::vector<double> d(probe_out.size());
    for (auto& v : d) v = dir_rng.uniform(-1.0, 1.0);
    direction = Tensor<double>::from_data(probe_out.shape(), std::move(d));
  }
  auto eval = [&]() {
    NoGradGuard no_grad;
    return sum(mul(cc.forward(), direction)).item();
  };

  // Analytic gradients via the reverse pass.
  for (auto& leaf : cc.leaves) leaf.zero_grad();
  backward(sum(mul(cc.forward(), direction)));
  std::vector<std::vector<double>> analytic;
  analytic.reserve(cc.leaves.size());
  for (auto& leaf : cc.leaves) {
    auto gv = leaf.grad_values();
    analytic.emplace_back(gv.begin(), gv.end());
    if (inject_fault) {
      for (auto& g : analytic.back()) g = -g;
    }
  }

  // Probe coordinates across every leaf.
  std::vector<std::pair<std::size_t, std::size_t>> space;
  for (std::size_t l = 0; l < cc.leaves.size(); ++l) {
    for (std::size_t i = 0; i < cc.leaves[l].size(); ++i) space.emplace_back(l, i);
  }
  const int want = cc.max_probes > 0 ? cc.max_probes : options.max_probes;
  const std::size_t probes = std::min<std::size_t>(want, space.size());
  Rng pick = rng.fork(0x9B0);
  for (std::size_t i = 0; i < probes; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(space.size() - i) - 1));
    std::swap(space[i], space[j]);
  }

  GradCheckResult result;
  result.unit = unit.name;
  result.tolerance = unit.tolerance;
  result.probes = static_cast<int>(probes);
  const double h = cc.step > 0.0 ? cc.step : options.step;
  for (std::size_t p = 0; p < probes; ++p) {
    const auto [l, i] = space[p];
    double* x = cc.leaves[l].mutable_data() + i;
    const double saved = *x;
    *x = saved + h;
    const double f_plus = eval();
    *x = saved - h;
    const double f_minus = eval();
    *x = saved;
    const double fd = (f_plus - f_minus) / (2.0 * h);
    const double a = analytic[l][i];
    // Guarded relative error. The 1e-2 scale floor keeps coordinates whose
    // true gradient is exactly zero (a conv bias feeding a training-mode
    // batch norm cancels analytically) from amplifying central-difference
    // round-off, while still flagging absolute errors above 1e-6 there.
    const double rel = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-2);
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  result.passed = result.max_rel_error <= unit.tolerance;
  return result;
}

template <typename Fn>
Unit make_unit(std::string name, double tol, Fn build) {
  return Unit{std::move(name), tol, build};
}

BlockSettings<double> gradcheck_settings() {
  BlockSettings<double> s;
  s.leaky_slope = 0.3;
  s.bn_epsilon = 1e-3;
  s.bn_momentum = 0.9;
  s.se_ratio = 2;
  return s;
}

std::vector<Unit> unit_suite() {
  std::vector<Unit> units;

  units.push_back(make_unit("conv2d", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({2, 5, 6, 3}, rng);
    Tensor<double> k = random_leaf({3, 3, 3, 4}, rng);
    Tensor<double> b = random_leaf({4}, rng);
    cc.leaves = {x, k, b};
    cc.forward = [=] { return conv2d(x, k, b, 1, 1, Padding::same); };
    return cc;
  }));
  units.push_back(make_unit("conv2d_dilated", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({1, 7, 7, 2}, rng);
    Tensor<double> k = random_leaf({3, 3, 2, 3}, rng);
    Tensor<double> b = random_leaf({3}, rng);
    cc.leaves = {x, k, b};
    cc.forward = [=] { return conv2d(x, k, b, 1, 2, Padding::same); };
    return cc;
  }));
  units.push_back(make_unit("conv2d_strided_valid", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({1, 9, 9, 2}, rng);
    Tensor<double> k = random_leaf({3, 3, 2, 3}, rng);
    Tensor<double> b = random_leaf({3}, rng);
    cc.leaves = {x, k, b};
    cc.forward = [=] { return conv2d(x, k, b, 2, 1, Padding::valid); };
    return cc;
  }));
  units.push_back(make_unit("dense", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({3, 4}, rng);
    Tensor<double> w = random_leaf({4, 5}, rng);
    Tensor<double> b = random_leaf({5}, rng);
    cc.leaves = {x, w, b};
    cc.forward = [=] { return dense(x, w, b); };
    return cc;
  }));
  units.push_back(make_unit("batch_norm_train", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({2, 3, 3, 4}, rng);
    Tensor<double> gamma = random_leaf({4}, rng, 0.5, 1.5);
    Tensor<double> beta = random_leaf({4}, rng);
    auto rm = std::make_shared<Tensor<double>>(Tensor<double>::zeros({4}));
    auto rv = std::make_shared<Tensor<double>>(Tensor<double>::full({4}, 1.0));
    cc.leaves = {x, gamma, beta};
    cc.forward = [=] { return batch_norm(x, gamma, beta, *rm, *rv, true, 0.9, 1e-3); };
    return cc;
  }));
  units.push_back(make_unit("batch_norm_eval", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({2, 3, 3, 4}, rng);
    Tensor<double> gamma = random_leaf({4}, rng, 0.5, 1.5);
    Tensor<double> beta = random_leaf({4}, rng);
    auto rm = std::make_shared<Tensor<double>>(uniform_tensor<double>({4}, -0.5, 0.5, rng));
    auto rv = std::make_shared<Tensor<double>>(uniform_tensor<double>({4}, 0.5, 1.5, rng));
    cc.leaves = {x, gamma, beta};
    cc.forward = [=] { return batch_norm(x, gamma, beta, *rm, *rv, false, 0.9, 1e-3); };
    return cc;
  }));
  units.push_back(make_unit("leaky_relu", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = kink_free_leaf({3, 4, 5}, rng);
    cc.leaves = {x};
    cc.forward = [=] { return leaky_relu(x, 0.3); };
    return cc;
  }));
  units.push_back(make_unit("sigmoid", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({3, 7}, rng, -3.0, 3.0);
    cc.leaves = {x};
    cc.forward = [=] { return sigmoid(x); };
    return cc;
  }));
  units.push_back(make_unit("softmax", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({2, 3, 5}, rng, -2.0, 2.0);
    cc.leaves = {x};
    cc.forward = [=] { return softmax(x); };
    return cc;
  }));
  units.push_back(make_unit("max_pool", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = separated_leaf({2, 4, 6, 3}, rng);
    cc.leaves = {x};
    cc.forward = [=] { return max_pool2(x); };
    return cc;
  }));
  units.push_back(make_unit("global_avg_pool", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({2, 4, 4, 3}, rng);
    cc.leaves = {x};
    cc.forward = [=] { return global_avg_pool(x); };
    return cc;
  }));
  units.push_back(make_unit("channel_max", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = separated_leaf({2, 3, 4, 5}, rng);
    cc.leaves = {x};
    cc.forward = [=] { return channel_max(x); };
    return cc;
  }));
  units.push_back(make_unit("upsample2x", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({2, 3, 4, 2}, rng);
    cc.leaves = {x};
    cc.forward = [=] { return upsample2x(x); };
    return cc;
  }));
  units.push_back(make_unit("add_broadcast", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> a = random_leaf({2, 3, 1, 4}, rng);
    Tensor<double> b = random_leaf({2, 1, 5, 1}, rng);
    cc.leaves = {a, b};
    cc.forward = [=] { return add(a, b); };
    return cc;
  }));
  units.push_back(make_unit("mul_broadcast", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> a = random_leaf({2, 4, 4, 3}, rng);
    Tensor<double> b = random_leaf({2, 4, 4, 1}, rng);
    cc.leaves = {a, b};
    cc.forward = [=] { return mul(a, b); };
    return cc;
  }));
  units.push_back(make_unit("div", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> a = random_leaf({3, 4}, rng);
    Tensor<double> b = kink_free_leaf({3, 4}, rng, 0.5);
    cc.leaves = {a, b};
    cc.forward = [=] { return div(a, b); };
    return cc;
  }));
  units.push_back(make_unit("concat_slice", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> a = random_leaf({2, 3, 3, 2}, rng);
    Tensor<double> b = random_leaf({2, 3, 3, 3}, rng);
    cc.leaves = {a, b};
    cc.forward = [=] { return slice_channels(concat<double>({a, b}), 1, 4); };
    return cc;
  }));
  units.push_back(make_unit("log", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({3, 5}, rng, 0.1, 2.0);
    cc.leaves = {x};
    cc.forward = [=] { return log(x); };
    return cc;
  }));
  units.push_back(make_unit("clamp", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    // Values at least 0.01 from the clamp bounds so probes stay one-sided.
    const std::size_t n = 24;
    std::vector<double> vals(n);
    for (auto& v : vals) {
      v = rng.uniform() < 0.3 ? rng.uniform(-0.6, -0.11) : rng.uniform(0.11, 1.2);
    }
    Tensor<double> x = Tensor<double>::from_data({4, 6}, std::move(vals), true);
    cc.leaves = {x};
    cc.forward = [=] { return clamp(x, -0.1, 0.9); };
    return cc;
  }));
  units.push_back(make_unit("mean", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> x = random_leaf({3, 4, 2}, rng);
    cc.leaves = {x};
    cc.forward = [=] { return mean(x); };
    return cc;
  }));

  units.push_back(make_unit("conv_bn_lrelu", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    auto block = std::make_shared<ConvBnLReLU<double>>(3, 5, 3, 3, gradcheck_settings(), rng);
    Tensor<double> x = random_leaf({1, 6, 6, 3}, rng);
    cc.leaves = {x};
    ParamList<double> params;
    block->collect("b", params);
    for (auto& p : params) {
      if (p.trainable) cc.leaves.push_back(p.tensor);
    }
    cc.forward = [=] { return block->forward(x, true); };
    cc.step = 1e-6;
    return cc;
  }));
  units.push_back(make_unit("se_block", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    auto block = std::make_shared<SEBlock<double>>(6, 2, 0.3, rng);
    Tensor<double> x = random_leaf({1, 4, 4, 6}, rng);
    cc.leaves = {x, block->reduce_weights(), block->expand_weights()};
    cc.forward = [=] { return block->forward(x); };
    cc.step = 1e-6;
    return cc;
  }));
  units.push_back(make_unit("csaf", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    auto block = std::make_shared<CSAFModule<double>>(4, 8, 8, gradcheck_settings(), rng);
    Tensor<double> x = random_leaf({1, 8, 8, 4}, rng);
    cc.leaves = {x};
    ParamList<double> params;
    block->collect("csaf", params);
    for (auto& p : params) {
      if (p.trainable) cc.leaves.push_back(p.tensor);
    }
    cc.forward = [=] { return block->forward(x, true); };
    cc.step = 1e-6;
    return cc;
  }));
  units.push_back(make_unit("residual_block", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    auto block = std::make_shared<ResidualBlock<double>>(4, gradcheck_settings(), rng);
    Tensor<double> x = random_leaf({1, 6, 6, 4}, rng);
    cc.leaves = {x};
    ParamList<double> params;
    block->collect("res", params);
    for (auto& p : params) {
      if (p.trainable) cc.leaves.push_back(p.tensor);
    }
    cc.forward = [=] { return block->forward(x, true); };
    cc.step = 1e-6;
    return cc;
  }));
  units.push_back(make_unit("residual_chain", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    auto chain = std::make_shared<ResidualChain<double>>(3, 3, gradcheck_settings(), rng);
    Tensor<double> x = random_leaf({1, 4, 4, 3}, rng);
    cc.leaves = {x};
    ParamList<double> params;
    chain->collect("chain", params);
    for (auto& p : params) {
      if (p.trainable) cc.leaves.push_back(p.tensor);
    }
    cc.forward = [=] { return chain->forward(x, true); };
    cc.step = 1e-6;
    return cc;
  }));
  units.push_back(make_unit("aspp", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    auto block = std::make_shared<ASPPModule<double>>(4, 4, std::vector<int>{1, 6, 12, 18},
                                                      gradcheck_settings(), rng);
    Tensor<double> x = random_leaf({1, 8, 8, 4}, rng);
    cc.leaves = {x};
    ParamList<double> params;
    block->collect("aspp", params);
    for (auto& p : params) {
      if (p.trainable) cc.leaves.push_back(p.tensor);
    }
    cc.forward = [=] { return block->forward(x, true); };
    cc.step = 1e-6;
    return cc;
  }));

  units.push_back(make_unit("cce_loss", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> p = random_leaf({2, 2, 2, 3}, rng, 0.1, 0.9);
    std::vector<double> onehot(24, 0.0);
    for (int i = 0; i < 8; ++i) onehot[i * 3 + rng.uniform_int(0, 2)] = 1.0;
    Tensor<double> y = Tensor<double>::from_data({2, 2, 2, 3}, std::move(onehot));
    cc.leaves = {p};
    cc.forward = [=] { return cce_loss(p, y); };
    return cc;
  }));
  units.push_back(make_unit("wbce_loss", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> p = random_leaf({2, 4, 4, 1}, rng, 0.1, 0.9);
    std::vector<double> truth(32);
    for (auto& v : truth) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    Tensor<double> y = Tensor<double>::from_data({2, 4, 4, 1}, std::move(truth));
    cc.leaves = {p};
    cc.forward = [=] {
      return wbce_loss(p, y, ClassWeights<double>{{0.7, 1.3}});
    };
    return cc;
  }));
  units.push_back(make_unit("dice_loss", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> p = random_leaf({2, 4, 4, 1}, rng, 0.1, 0.9);
    std::vector<double> truth(32);
    for (auto& v : truth) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    Tensor<double> y = Tensor<double>::from_data({2, 4, 4, 1}, std::move(truth));
    cc.leaves = {p};
    cc.forward = [=] { return dice_loss(p, y); };
    return cc;
  }));
  units.push_back(make_unit("hybrid_loss", kPrimitiveTol, [](Rng& rng) {
    CheckCase cc;
    Tensor<double> p = random_leaf({2, 4, 4, 1}, rng, 0.1, 0.9);
    std::vector<double> truth(32);
    for (auto& v : truth) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    Tensor<double> y = Tensor<double>::from_data({2, 4, 4, 1}, std::move(truth));
    cc.leaves = {p};
    HybridLossConfig config;
    config.alpha = 0.37;
    cc.forward = [=] {
      return hybrid_loss(config, p, y, ClassWeights<double>{{0.8, 1.2}});
    };
    return cc;
  }));

  units.push_back(make_unit("ocunet", kModelTol, [](Rng& rng) {
    CheckCase cc;
    ModelConfig config;
    config.base_channels = 2;
    config.num_classes = 3;
    config.input_h = 16;
    config.input_w = 16;
    config.se_ratio = 2;
    auto model = std::make_shared<OCUNet<double>>(config, rng.next_u64());
    Tensor<double> x = random_leaf({1, 16, 16, 3}, rng, 0.0, 1.0);
    cc.leaves = {x};
    for (auto& p : model->parameters()) {
      if (p.trainable) cc.leaves.push_back(p.tensor);
    }
    cc.forward = [=] { return model->forward(x, true); };
    cc.max_probes = 32;
    cc.step = 1e-6;
    return cc;
  }));

  return units;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& options,
                                                 const std::string& fault_unit) {
  std::vector<GradCheckResult> results;
  for (const Unit& unit : unit_suite()) {
    results.push_back(check_unit(unit, options, unit.name == fault_unit));
  }
  return results;
}

std::string render_gradcheck_report(const std::vector<GradCheckResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << std::left << std::setw(22) << r.unit << " max_rel_err=" << std::scientific
       << std::setprecision(3) << r.max_rel_error << "  tol=" << r.tolerance
       << std::defaultfloat << "  probes=" << r.probes << "  " << (r.passed ? "PASS" : "FAIL")
       << '\n';
  }
  return os.str();
}

bool gradcheck_all_passed(const std::vector<GradCheckResult>& results) {
  if (results.empty()) return false;
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return true;
}

}  // namespace ocunet
