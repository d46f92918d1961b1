#pragma once

// Time integrators: classic fixed-step RK4 and adaptive Dormand-Prince 5(4)
// with PI step-size control. Right-hand sides take (t, x).

#include <functional>

#include "ptpstab/common.hpp"

namespace ptpstab {

using OdeRhs = std::function<VectorXd(double, const VectorXd&)>;

// Single RK4 step.
inline VectorXd rk4_step(const OdeRhs& f, double t, const VectorXd& x,
                         double h) {
  const VectorXd k1 = f(t, x);
  const VectorXd k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
  const VectorXd k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
  const VectorXd k4 = f(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrates on [t0, t1] with the fixed step h (last step shortened to land
// exactly on t1). Returns the final state.
inline VectorXd integrate_rk4(const OdeRhs& f, double t0, const VectorXd& x0,
                              double t1, double h) {
  require(h > 0.0 && t1 >= t0, Errc::config_error, "rk4 step setup");
  VectorXd x = x0;
  double t = t0;
  while (t < t1 - 1e-15 * std::max(1.0, std::abs(t1))) {
    const double step = std::min(h, t1 - t);
    x = rk4_step(f, t, x, step);
    t += step;
    require(all_finite(x), Errc::integration_failure,
            "rk4 produced non-finite state at t=" + std::to_string(t));
  }
  return x;
}

struct AdaptiveOptions {
  double rel_tol{1e-10};
  double abs_tol{1e-12};
  double h_init{1e-4};
  double h_min{1e-12};
  double h_max{0.1};
  std::int64_t max_steps{50'000'000};
};

// Dormand-Prince 5(4). Integrates on [t0, t1], returns the final state.
inline VectorXd integrate_dopri(const OdeRhs& f, double t0, const VectorXd& x0,
                                double t1, const AdaptiveOptions& opt = {}) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                          c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                          e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  if (t1 == t0) return x0;
  if (t1 < t0) {
    // Reverse time: integrate y(tau) = x(-tau) forward on [-t0, -t1].
    const OdeRhs reversed = [&f](double tau, const VectorXd& x) {
      return VectorXd(-f(-tau, x));
    };
    return integrate_dopri(reversed, -t0, x0, -t1, opt);
  }
  VectorXd x = x0;
  double t = t0;
  double h = std::clamp(opt.h_init, opt.h_min, std::min(opt.h_max, t1 - t0));
  VectorXd k1 = f(t, x);
  double err_prev = 1.0;
  for (std::int64_t steps = 0; steps < opt.max_steps; ++steps) {
    if (t >= t1 - 1e-15 * std::max(1.0, std::abs(t1))) return x;
    h = std::min(h, t1 - t);
    const VectorXd k2 = f(t + c2 * h, x + h * (a21 * k1));
    const VectorXd k3 = f(t + c3 * h, x + h * (a31 * k1 + a32 * k2));
    const VectorXd k4 = f(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const VectorXd k5 =
        f(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const VectorXd k6 = f(
        t + h, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const VectorXd x5 =
        x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const VectorXd k7 = f(t + h, x5);
    const VectorXd err_vec =
        h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double sc = opt.abs_tol +
                        opt.rel_tol * std::max(std::abs(x(i)), std::abs(x5(i)));
      const double r = err_vec(i) / sc;
      err += r * r;
    }
    err = std::sqrt(err / static_cast<double>(x.size()));

    if (err <= 1.0 || h <= opt.h_min * (1.0 + 1e-12)) {
      t += h;
      x = x5;
      k1 = k7;  // FSAL
      require(all_finite(x), Errc::integration_failure,
              "adaptive step produced non-finite state at t=" +
                  std::to_string(t));
      err_prev = std::max(err, 1e-4);
    }
    // PI controller (orders 5/4).
    const double fac =
        0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5.0) *
        std::pow(err_prev, 0.4 / 5.0);
    h = std::clamp(h * std::clamp(fac, 0.2, 5.0), opt.h_min, opt.h_max);
  }
  fail(Errc::integration_failure, "adaptive integrator exceeded max_steps");
}

}  // namespace ptpstab
