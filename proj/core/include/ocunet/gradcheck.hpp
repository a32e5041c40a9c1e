#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ocunet {

/// Numeric mode of a run. Finite-difference verification always uses
/// double_precision end to end; training runs in single_precision.
enum class Precision { single_precision, double_precision };

struct GradCheckOptions {
  double step = 1e-5;    // central-difference half-step
  int max_probes = 100;  // sampled coordinates per unit
  std::uint64_t seed = 0xC0FFEE;
};

struct GradCheckResult {
  std::string unit;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int probes = 0;
  bool passed = false;
};

/// Central finite-difference verification of every differentiable primitive,
/// block, loss, and a tiny full network, in double precision. Analytic
/// gradients come from the reverse pass; the reference values are forward-only
/// re-evaluations, so the two routes stay independent. `fault_unit`, when
/// non-empty, negates the analytic gradients of the named unit — a hook for
/// proving the harness actually detects wrong gradients.
std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& options = {},
                                                 const std::string& fault_unit = "");

std::string render_gradcheck_report(const std::vector<GradCheckResult>& results);
bool gradcheck_all_passed(const std::vector<GradCheckResult>& results);

}  // namespace ocunet
