#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "cno/grid.hpp"
#include "cno/rng.hpp"

namespace cno::test {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline Field1D sine(const Grid1D& g, int n = 1, double shift = 0.0, double amp = 1.0) {
  return Field1D::sample(g, [&](double x) { return amp * std::sin(kTwoPi * n * (x - shift)); });
}

inline Field1D random_field(const Grid1D& g, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(g.nx);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Field1D(g, std::move(v));
}

inline double l2(const Field1D& a) {
  double s = 0.0;
  for (double x : a.values()) s += x * x;
  return std::sqrt(s);
}

inline double rel_err(const Field1D& a, const Field1D& ref) { return l2(a - ref) / l2(ref); }

inline double max_abs_diff(const Field1D& a, const Field1D& b) {
  double m = 0.0;
  for (int j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

// Central difference of loss with respect to *x, restoring *x afterwards.
inline double central_diff(const std::function<double()>& loss, double* x, double h = 1e-6) {
  const double saved = *x;
  *x = saved + h;
  const double up = loss();
  *x = saved - h;
  const double down = loss();
  *x = saved;
  return (up - down) / (2.0 * h);
}

// Relative error with an absolute floor so near-zero gradients do not blow up the ratio.
inline double grad_rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace cno::test
