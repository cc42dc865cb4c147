#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

namespace udae {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0; // parameters skipped because +-h crossed a kink
};

// |a - n| / max(|a|, |n|, floor). The floor plays the role of atol/rtol in
// the usual combined-tolerance convention: below it, differences are
// measured in units of the floor instead of relatively.
inline double relative_gradient_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return denom == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
}

// Central finite differences of a scalar loss against a supplied analytic
// gradient. The loss accumulates in 64-bit; parameters are perturbed in
// place and restored. Instantiate with T = double to evaluate the perturbed
// passes at full precision.
template <typename T>
GradCheckReport gradient_check(const std::function<double(std::span<const T>)> &loss,
                               std::span<T> params, std::span<const T> analytic_grad,
                               double h = 1e-3, double abs_floor = 1e-6) {
  if (params.size() != analytic_grad.size())
    throw std::invalid_argument("gradient_check: param/grad size mismatch");
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T saved = params[i];
    params[i] = static_cast<T>(saved + h);
    const double f_plus = loss(params);
    params[i] = static_cast<T>(saved - h);
    const double f_minus = loss(params);
    params[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw std::runtime_error("gradient_check: non-finite loss at parameter " +
                               std::to_string(i));
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double analytic = static_cast<double>(analytic_grad[i]);
    const double err = relative_gradient_error(analytic, numeric, abs_floor);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

} // namespace udae
