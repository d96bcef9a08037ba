#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "latent_shield/autodiff.hpp"

namespace lshield {

/// Builds a scalar on `tape` from the leaf `x`.
using ScalarFn = std::function<Var(Tape& tape, Var x)>;

struct GradCheckReport {
  /// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2); decides pass.
  double rel_err = 0.0;
  /// Largest elementwise error, for locating offenders. Components far below
  /// the gradient's norm are dominated by difference round-off, so this one is
  /// informational only.
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = false;
  /// Non-empty when the check failed for a reason other than tolerance
  /// (NaN on either side).
  std::string failure;
};

/// Compares backward() gradients of `f` at `x` against central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h. Passes when rel_err <= tol. The
/// elementwise measure is |a - n| / max(|a|, |n|), falling back to |a - n|
/// when both magnitudes are below 1e-8. Two zero gradients give rel_err 0.
/// Requires 0 < h <= 1e-2.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double h, double tol);

}  // namespace lshield
