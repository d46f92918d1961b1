#pragma once

// Scalar root finding: bracketed bisection, Brent, and a Newton iteration
// safeguarded by a bracket.

#include "ptpstab/common.hpp"

namespace ptpstab {

template <typename F>
double bisect(F&& f, double a, double b, double tol = 1e-12,
              int max_iter = 200) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  require(fa * fb < 0.0, Errc::constraint_violated,
          "bisection requires a sign change");
  for (int i = 0; i < max_iter && (b - a) > tol; ++i) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0) return m;
    if (fa * fm < 0.0) {
      b = m;
      fb = fm;
    } else {
      a = m;
      fa = fm;
    }
  }
  return 0.5 * (a + b);
}

// Brent's method on a sign-changing bracket.
template <typename F>
double brent(F&& f, double a, double b, double tol = 1e-13,
             int max_iter = 200) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  require(fa * fb < 0.0, Errc::constraint_violated,
          "brent requires a sign change");
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < max_iter; ++iter) {
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() *
                            std::abs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q),
                             std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
    fb = f(b);
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
  }
  return b;
}

// Newton with derivative callback, falling back to bisection steps whenever
// the Newton update leaves the bracket [lo, hi].
template <typename F, typename DF>
double safeguarded_newton(F&& f, DF&& df, double x0, double lo, double hi,
                          double tol = 1e-12, int max_iter = 100) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  require(flo * fhi < 0.0, Errc::constraint_violated,
          "newton safeguard requires a sign-changing bracket");
  double x = std::clamp(x0, lo, hi);
  for (int i = 0; i < max_iter; ++i) {
    const double fx = f(x);
    if (fx == 0.0) return x;
    if (flo * fx < 0.0) {
      hi = x;
      fhi = fx;
    } else {
      lo = x;
      flo = fx;
    }
    if (hi - lo <= tol) break;
    const double dfx = df(x);
    double xn = (dfx != 0.0) ? x - fx / dfx : lo - 1.0;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) <= 0.25 * tol) return xn;
    x = xn;
  }
  return 0.5 * (lo + hi);
}

}  // namespace ptpstab
