#include "latent_shield/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lshield {

namespace {

constexpr double kAbsoluteFloor = 1e-8;

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Var leaf = tape.leaf(x, false);
  return f(tape, leaf).value().item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double h, double tol) {
  if (!(h > 0.0 && h <= 1e-2)) throw std::invalid_argument("grad_check step h must lie in (0, 1e-2]");

  GradCheckReport report;
  Tensor analytic;
  {
    Tape tape;
    Var leaf = tape.leaf(x, true);
    Var out = f(tape, leaf);
    tape.backward(out);
    analytic = tape.grad(leaf);
  }

  double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe);
    probe[i] = orig - h;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    if (std::isnan(a) || std::isnan(numeric)) {
      report.failure = "NaN gradient at flat index " + std::to_string(i) +
                       (std::isnan(a) ? " (analytic)" : " (numeric)");
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
      report.pass = false;
      return report;
    }
    diff_sq += (a - numeric) * (a - numeric);
    a_sq += a * a;
    n_sq += numeric * numeric;
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double err = scale < kAbsoluteFloor ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
    if (i == 0 || err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  const double norm = std::sqrt(std::max(a_sq, n_sq));
  report.rel_err = norm > 0.0 ? std::sqrt(diff_sq) / norm : 0.0;
  report.pass = report.rel_err <= tol;
  return report;
}

}  // namespace lshield
