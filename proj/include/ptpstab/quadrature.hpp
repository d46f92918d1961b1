#pragma once

// Adaptive Simpson quadrature with interval-doubling error control.

#include <cstdint>

#include "ptpstab/common.hpp"

namespace ptpstab {

namespace detail {

template <typename F>
double simpson(F&& f, double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive_simpson_rec(F&& f, double a, double fa, double b, double fb,
                            double fm, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(f, a, fa, m, fm, flm);
  const double right = simpson(f, m, fm, b, fb, frm);
  const double err = left + right - whole;
  if (depth <= 0 || std::abs(err) <= 15.0 * tol)
    return left + right + err / 15.0;
  return adaptive_simpson_rec(f, a, fa, m, fm, flm, left, 0.5 * tol,
                              depth - 1) +
         adaptive_simpson_rec(f, m, fm, b, fb, frm, right, 0.5 * tol,
                              depth - 1);
}

}  // namespace detail

// Integrates f on [a, b] to a mixed tolerance: the local error target is
// abs_tol + rel_tol * |estimate|, refined recursively up to max_depth.
template <typename F>
double integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-9,
                          double abs_tol = 0.0, int max_depth = 48) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = detail::simpson(f, a, fa, b, fb, fm);
  // First pass fixes the scale for the relative part of the tolerance.
  const double scale = std::max(std::abs(whole), 1e-30);
  const double tol = abs_tol + rel_tol * scale;
  const double v = detail::adaptive_simpson_rec(f, a, fa, b, fb, fm, whole,
                                                std::max(tol, 1e-300),
                                                max_depth);
  require(std::isfinite(v), Errc::non_finite_entries, "quadrature diverged");
  return sign * v;
}

// Cumulative integral of f from grid.front() to every grid point, composite
// Simpson on each subinterval (two panels per cell). Returns values aligned
// with the grid.
template <typename F>
std::vector<double> cumulative_integral(F&& f, const std::vector<double>& grid) {
  require(grid.size() >= 2, Errc::grid_too_coarse, "cumulative integral grid");
  std::vector<double> out(grid.size(), 0.0);
  double acc = 0.0;
  double f_lo = f(grid[0]);
  for (size_t i = 0; i + 1 < grid.size(); ++i) {
    const double a = grid[i], b = grid[i + 1];
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    const double f_hi = f(b);
    acc += (b - a) / 6.0 * (f_lo + 4.0 * fm + f_hi);
    out[i + 1] = acc;
    f_lo = f_hi;
  }
  return out;
}

}  // namespace ptpstab
