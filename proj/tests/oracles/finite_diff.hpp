#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

/// Central difference of f along coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double h) {
  const double keep = x[i];
  x[i] = keep + h;
  const double up = f(x);
  x[i] = keep - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

/// Relative agreement, falling back to an absolute bound for small magnitudes.
inline bool gradient_close(double analytic, double numeric, double rel = 1e-5, double abs_tol = 1e-7,
                           double small = 1e-2) {
  const double diff = std::abs(analytic - numeric);
  const double mag = std::max(std::abs(analytic), std::abs(numeric));
  if (mag < small) return diff <= abs_tol || diff <= rel * mag;
  return diff <= rel * mag;
}

}  // namespace oracle
