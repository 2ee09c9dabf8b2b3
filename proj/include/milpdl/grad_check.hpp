// grad_check.hpp
//
// Central-difference gradient validation. Used by the test suite to certify
// every hand-written backward pass in the library.

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace milpdl {

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// eps must lie in [1e-7, 1e-4]: central differences have O(eps^2) truncation
// error, which keeps the bound below the 1e-4 pass threshold in that range.
inline double grad_check(const ScalarFn& f, const std::vector<double>& x,
                         const std::vector<double>& analytic, double eps) {
  if (analytic.size() != x.size())
    throw std::invalid_argument("grad_check: gradient length mismatch");
  if (eps < 1e-7 || eps > 1e-4)
    throw std::invalid_argument("grad_check: eps outside [1e-7, 1e-4]");
  if (!std::isfinite(f(x)))
    throw std::invalid_argument("grad_check: f(x) is not finite");

  std::vector<double> xp = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + eps;
    const double fp = f(xp);
    xp[i] = x[i] - eps;
    const double fm = f(xp);
    xp[i] = x[i];
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace milpdl
