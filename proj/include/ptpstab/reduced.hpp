#pragma once

// Motion planning through the reduced dynamics of mechanical systems with
// one degree of underactuation.  Given synchronization functions Phi(s)
// pinning the configuration to a scalar parameter, the passive direction of
// the dynamics collapses to
//     alpha(s) rho'(s) rho(s) + beta(s) rho^2(s) + gamma(s) = 0,
// whose solutions are level curves of an integrating-factor identity.  This
// header builds the coefficients, classifies equilibria of the associated
// second-order equation, checks the existence conditions for a rest-to-rest
// speed profile, and assembles the full maneuver (state curve, speed
// profile, nominal input).

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"
#include "ptpstab/curves.hpp"
#include "ptpstab/maneuver.hpp"
#include "ptpstab/mechanics.hpp"
#include "ptpstab/quadrature.hpp"
#include "ptpstab/rootfind.hpp"

namespace ptpstab {

// Scalar coefficients of the reduced dynamics plus the vector-valued terms
// needed to recover the nominal input.  All members are evaluators over the
// profile's domain.
struct ReducedCoefficients {
  int n_q = 0;
  Interval domain{0.0, 1.0};
  RowVectorXd Bu_perp;  // unit left annihilator of Bu, first entry positive
  MatrixXd Bu_pinv;     // left inverse of Bu

  // Vector terms: inertia drive M(Phi)Phi', velocity term
  // M(Phi)Phi'' + C(Phi,Phi')Phi', and gravity G(Phi).
  std::function<VectorXd(double)> drive_term, velocity_term, gravity_term;

  std::function<double(double)> alpha, beta, gamma;
  std::function<double(double)> beta_hat;     // Bu_perp C2(Phi,Phi')Phi'
  std::function<double(double)> alpha_prime;  // d alpha / ds
  std::function<double(double)> gamma_prime;  // d gamma / ds

  double nu(double s) const {
    double a = alpha(s);
    require(std::abs(a) > 1e-300, Errc::alpha_vanishes,
            "nu(s) undefined where alpha vanishes");
    return gamma_prime(s) / a;
  }
};

enum class EquilibriumType { center, saddle, degenerate };

inline const char* equilibrium_name(EquilibriumType t) {
  switch (t) {
    case EquilibriumType::center: return "center";
    case EquilibriumType::saddle: return "saddle";
    case EquilibriumType::degenerate: return "degenerate";
  }
  return "?";
}

inline ReducedCoefficients build_coefficients(const MechanicalSystem& sys,
                                              const Synchronization& profile) {
  require(sys.n_u == sys.n_q - 1, Errc::rank_deficient,
          "reduced planning needs exactly one passive degree of freedom");
  Eigen::JacobiSVD<MatrixXd> svd(sys.Bu, Eigen::ComputeFullU);
  require(sys.n_u >= 1 &&
              svd.singularValues()(sys.n_u - 1) > 1e-10 * svd.singularValues()(0),
          Errc::rank_deficient, "input matrix must have full column rank");

  ReducedCoefficients out;
  out.n_q = sys.n_q;
  out.domain = profile.domain;
  // Left annihilator: the last left singular vector; canonical sign makes
  // the first non-negligible entry positive.
  VectorXd null_dir = svd.matrixU().col(sys.n_q - 1);
  for (int i = 0; i < null_dir.size(); ++i) {
    if (std::abs(null_dir(i)) > 1e-12) {
      if (null_dir(i) < 0.0) null_dir = -null_dir;
      break;
    }
  }
  out.Bu_perp = null_dir.transpose() / null_dir.norm();
  out.Bu_pinv = sys.Bu.completeOrthogonalDecomposition().pseudoInverse();

  MechanicalSystem sys_c = sys;          // captured by value below
  Synchronization prof_c = profile;
  RowVectorXd bp = out.Bu_perp;

  out.drive_term = [sys_c, prof_c](double s) -> VectorXd {
    return sys_c.M(prof_c.Phi(s)) * prof_c.dPhi(s);
  };
  out.velocity_term = [sys_c, prof_c](double s) -> VectorXd {
    VectorXd q = prof_c.Phi(s), dq = prof_c.dPhi(s);
    return sys_c.M(q) * prof_c.ddPhi(s) + coriolis_force(sys_c, q, dq);
  };
  out.gravity_term = [sys_c, prof_c](double s) -> VectorXd {
    return sys_c.G(prof_c.Phi(s));
  };

  auto drive = out.drive_term;
  auto vel = out.velocity_term;
  auto grav = out.gravity_term;
  out.alpha = [bp, drive](double s) { return bp.dot(drive(s)); };
  out.beta = [bp, vel](double s) { return bp.dot(vel(s)); };
  out.gamma = [bp, grav](double s) { return bp.dot(grav(s)); };
  out.beta_hat = [bp, sys_c, prof_c](double s) {
    VectorXd q = prof_c.Phi(s), dq = prof_c.dPhi(s);
    return bp.dot(coriolis_c2(sys_c, q, dq) * dq);
  };
  out.alpha_prime = [bp, sys_c, prof_c](double s) {
    VectorXd q = prof_c.Phi(s), dq = prof_c.dPhi(s);
    return bp.dot(coriolis_c1(sys_c, q, dq) * dq +
                  sys_c.M(q) * prof_c.ddPhi(s));
  };
  out.gamma_prime = [bp, sys_c, prof_c](double s) {
    VectorXd q = prof_c.Phi(s), dq = prof_c.dPhi(s);
    MatrixXd dG = fd_jacobian(
        [&sys_c](const VectorXd& qq) { return sys_c.G(qq); }, q);
    return bp.dot(dG * dq);
  };
  return out;
}

namespace detail {

// Largest magnitudes over a scan grid, used for relative thresholds.
inline double scan_max_abs(const std::function<double(double)>& f,
                           const Interval& dom, int n_pts = 200) {
  double out = 0.0;
  for (double s : linspace(dom, n_pts)) out = std::max(out, std::abs(f(s)));
  return out;
}

inline void require_alpha_nonvanishing(const ReducedCoefficients& co,
                                       double a, double b, int n_pts = 200) {
  Interval span{std::min(a, b), std::max(a, b)};
  if (span.length() <= 0.0) {
    double v = co.alpha(span.s_alpha);
    require(std::abs(v) > 0.0, Errc::alpha_vanishes,
            "alpha vanishes at the evaluation point");
    return;
  }
  double max_a = 0.0;
  std::vector<double> vals;
  for (double s : linspace(span, n_pts)) {
    vals.push_back(co.alpha(s));
    max_a = std::max(max_a, std::abs(vals.back()));
  }
  for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
    require(vals[i] * vals[i + 1] > 0.0 &&
                std::abs(vals[i]) > 1e-9 * max_a,
            Errc::alpha_vanishes,
            "alpha vanishes or changes sign on the requested span");
  }
}

}  // namespace detail

inline EquilibriumType classify_equilibrium(const ReducedCoefficients& co,
                                            double s_e) {
  double gamma_scale =
      std::max(detail::scan_max_abs(co.gamma, co.domain), 1e-300);
  require(std::abs(co.gamma(s_e)) < 1e-8 * gamma_scale,
          Errc::not_an_equilibrium,
          "gamma does not vanish at the candidate equilibrium");
  double a = co.alpha(s_e);
  double alpha_scale =
      std::max(detail::scan_max_abs(co.alpha, co.domain), 1e-300);
  require(std::abs(a) > 1e-10 * alpha_scale, Errc::alpha_vanishes,
          "alpha vanishes at the candidate equilibrium");
  double nu = co.gamma_prime(s_e) / a;
  if (nu > 1e-10) return EquilibriumType::center;
  if (nu < -1e-10) return EquilibriumType::saddle;
  return EquilibriumType::degenerate;
}

// Psi(s_r, s) = exp(integral from s_r to s of 2 beta_hat / alpha).
inline double integrating_factor(const ReducedCoefficients& co, double s_r,
                                 double s) {
  if (s == s_r) return 1.0;
  detail::require_alpha_nonvanishing(co, s_r, s);
  auto f = [&co](double t) { return 2.0 * co.beta_hat(t) / co.alpha(t); };
  double lo = std::min(s_r, s), hi = std::max(s_r, s);
  double integral = integrate_adaptive(f, lo, hi, 1e-9);
  if (s < s_r) integral = -integral;
  return std::exp(integral);
}

// Dense tables of the two cumulative integrals underlying the level-curve
// identity, built once and interpolated.  I(s) integrates 2 beta_hat/alpha
// from s_alpha; J(s) integrates e^{I} alpha gamma; J_abs integrates the
// magnitude of the same integrand (for relative tolerances).
struct CoefficientTable {
  Interval domain{0.0, 1.0};
  ScalarCurve I_curve, J_curve;
  ScalarCurve alpha_curve;
  double J_abs_total = 0.0;

  double psi(double a, double b) const {
    return std::exp(I_curve.eval(b) - I_curve.eval(a));
  }

  // rho^2 at s2 on the level curve through (s1, rho1_sq >= 0).
  double level_rho_sq(double s1, double rho1_sq, double s2) const {
    double I1 = I_curve.eval(s1), I2 = I_curve.eval(s2);
    double a1 = alpha_curve.eval(s1), a2 = alpha_curve.eval(s2);
    double val = std::exp(I1 - I2) * a1 * a1 * rho1_sq -
                 2.0 * std::exp(-I2) * (J_curve.eval(s2) - J_curve.eval(s1));
    return val / (a2 * a2);
  }
};

inline CoefficientTable freeze_coefficients(const ReducedCoefficients& co,
                                            int n_cells = 20000) {
  require(n_cells >= 16, Errc::grid_too_coarse, "coefficient table cells");
  detail::require_alpha_nonvanishing(co, co.domain.s_alpha, co.domain.s_omega,
                                     std::min(n_cells, 2000));
  CoefficientTable out;
  out.domain = co.domain;
  std::vector<double> grid = linspace(co.domain, n_cells + 1);
  auto g = [&co](double s) { return 2.0 * co.beta_hat(s) / co.alpha(s); };
  std::vector<double> I_vals = cumulative_integral(g, grid);
  int n = static_cast<int>(grid.size());
  VectorXd Iv(n), Is(n);
  for (int i = 0; i < n; ++i) {
    Iv(i) = I_vals[static_cast<std::size_t>(i)];
    Is(i) = g(grid[static_cast<std::size_t>(i)]);
  }
  out.I_curve = ScalarCurve::hermite(grid, Iv, Is);

  auto h = [&co, &out](double s) {
    return std::exp(out.I_curve.eval(s)) * co.alpha(s) * co.gamma(s);
  };
  std::vector<double> J_vals = cumulative_integral(h, grid);
  VectorXd Jv(n), Js(n);
  for (int i = 0; i < n; ++i) {
    Jv(i) = J_vals[static_cast<std::size_t>(i)];
    Js(i) = h(grid[static_cast<std::size_t>(i)]);
  }
  out.J_curve = ScalarCurve::hermite(grid, Jv, Js);
  auto h_abs = [&h](double s) { return std::abs(h(s)); };
  out.J_abs_total = cumulative_integral(h_abs, grid).back();

  VectorXd Av(n), As(n);
  for (int i = 0; i < n; ++i) {
    Av(i) = co.alpha(grid[static_cast<std::size_t>(i)]);
    As(i) = co.alpha_prime(grid[static_cast<std::size_t>(i)]);
  }
  out.alpha_curve = ScalarCurve::hermite(grid, Av, As);
  return out;
}

// rho^2 at s_to on the level curve through (s_from, rho_from); may be
// negative, meaning the level curve has no real speed there.
inline double rho_from_level_curve(const ReducedCoefficients& co,
                                   double s_from, double rho_from,
                                   double s_to, int n_cells = 2000) {
  if (s_from == s_to) return rho_from * rho_from;
  detail::require_alpha_nonvanishing(co, s_from, s_to);
  // Local dense table over the span keeps the nested integrals one-pass.
  ReducedCoefficients local = co;
  local.domain = Interval{std::min(s_from, s_to), std::max(s_from, s_to)};
  CoefficientTable table = freeze_coefficients(local, n_cells);
  return table.level_rho_sq(s_from, rho_from * rho_from, s_to);
}

struct ExistenceReport {
  // Boundary interpolation of the synchronization profile.
  double boundary_gap_alpha = 0.0, boundary_gap_omega = 0.0;
  bool boundary_points_ok = false;
  double tangent_alpha = 0.0, tangent_omega = 0.0;
  bool tangents_ok = false;
  // alpha bounded away from zero.
  double min_abs_alpha = 0.0, max_abs_alpha = 0.0;
  bool alpha_ok = false;
  // Interior equilibria of the reduced dynamics.
  std::vector<double> interior_zeros;
  std::vector<double> interior_nus;
  double s_center = 0.0;
  bool single_center_ok = false;
  // Non-positive nu at the caps (slope condition for rest-to-rest motion).
  double nu_alpha = 0.0, nu_omega = 0.0;
  bool boundary_nu_ok = false;
  bool degenerate_alpha_cap = false, degenerate_omega_cap = false;
  // Level-curve closure integral.
  double integral_value = 0.0, integral_scale = 0.0;
  bool integral_ok = false;

  bool ok() const {
    return boundary_points_ok && tangents_ok && alpha_ok &&
           single_center_ok && boundary_nu_ok && integral_ok;
  }
};

struct ExistenceOptions {
  int scan_points = 2000;       // gamma sign-change scan resolution
  int table_cells = 4000;       // integral table resolution
  double boundary_tol = 1e-8;   // profile endpoint matching
  double integral_rel_tol = 1e-6;
  double nu_degeneracy_rel = 1e-6;  // |nu| below this (relative) counts as 0
};

inline ExistenceReport check_ptp_existence(const ReducedCoefficients& co,
                                           const VectorXd& q_alpha,
                                           const VectorXd& q_omega,
                                           const Synchronization& profile,
                                           ExistenceOptions opt = {}) {
  ExistenceReport rep;
  const Interval dom = co.domain;

  rep.boundary_gap_alpha = (profile.Phi(dom.s_alpha) - q_alpha).norm();
  rep.boundary_gap_omega = (profile.Phi(dom.s_omega) - q_omega).norm();
  rep.boundary_points_ok = rep.boundary_gap_alpha < opt.boundary_tol &&
                           rep.boundary_gap_omega < opt.boundary_tol;
  rep.tangent_alpha = profile.dPhi(dom.s_alpha).norm();
  rep.tangent_omega = profile.dPhi(dom.s_omega).norm();
  rep.tangents_ok = rep.tangent_alpha > 1e-10 && rep.tangent_omega > 1e-10;

  // (i) alpha bounded away from zero over the closed domain.
  rep.min_abs_alpha = std::numeric_limits<double>::infinity();
  for (double s : linspace(dom, opt.scan_points + 1)) {
    double a = std::abs(co.alpha(s));
    rep.min_abs_alpha = std::min(rep.min_abs_alpha, a);
    rep.max_abs_alpha = std::max(rep.max_abs_alpha, a);
  }
  rep.alpha_ok = rep.min_abs_alpha > 1e-9 * rep.max_abs_alpha &&
                 rep.max_abs_alpha > 0.0;

  // (ii) interior equilibria: sign-change scan of gamma + bisection.
  // The caps themselves are equilibria by construction and are excluded.
  if (rep.alpha_ok) {
    const double margin = 1e-6 * dom.length();
    Interval inner{dom.s_alpha + margin, dom.s_omega - margin};
    std::vector<double> grid = linspace(inner, opt.scan_points + 1);
    double prev = co.gamma(grid.front());
    for (std::size_t i = 1; i < grid.size(); ++i) {
      double cur = co.gamma(grid[i]);
      if (prev == 0.0) {
        rep.interior_zeros.push_back(grid[i - 1]);
      } else if (prev * cur < 0.0) {
        double root = bisect([&co](double s) { return co.gamma(s); },
                             grid[i - 1], grid[i], 1e-10 * dom.length());
        rep.interior_zeros.push_back(root);
      }
      prev = cur;
    }
    for (double z : rep.interior_zeros) rep.interior_nus.push_back(co.nu(z));
    int centers = 0;
    for (std::size_t i = 0; i < rep.interior_zeros.size(); ++i) {
      if (rep.interior_nus[i] > 1e-10) {
        ++centers;
        rep.s_center = rep.interior_zeros[i];
      }
    }
    rep.single_center_ok =
        centers == 1 && rep.interior_zeros.size() == 1;

    // (iii) nu at the caps.
    rep.nu_alpha = co.nu(dom.s_alpha);
    rep.nu_omega = co.nu(dom.s_omega);
    double nu_scale = std::max({std::abs(rep.nu_alpha), std::abs(rep.nu_omega),
                                detail::scan_max_abs(
                                    [&co](double s) {
                                      double a = co.alpha(s);
                                      return co.gamma_prime(s) / a;
                                    },
                                    dom, 101),
                                1e-300});
    double nu_tol = opt.nu_degeneracy_rel * nu_scale;
    rep.boundary_nu_ok = rep.nu_alpha <= nu_tol && rep.nu_omega <= nu_tol;
    rep.degenerate_alpha_cap = std::abs(rep.nu_alpha) <= nu_tol;
    rep.degenerate_omega_cap = std::abs(rep.nu_omega) <= nu_tol;

    // (iv) level-curve closure over the whole domain.
    CoefficientTable table = freeze_coefficients(co, opt.table_cells);
    rep.integral_value =
        table.J_curve.eval(dom.s_omega) - table.J_curve.eval(dom.s_alpha);
    rep.integral_scale = std::max(table.J_abs_total, 1e-300);
    rep.integral_ok =
        std::abs(rep.integral_value) < opt.integral_rel_tol * rep.integral_scale;
  }
  return rep;
}

// Initial slope of the speed profile at a hyperbolic cap: positive at the
// start, negative at the end.
inline double boundary_slope(const ReducedCoefficients& co, double s_hat) {
  const Interval dom = co.domain;
  bool at_alpha = std::abs(s_hat - dom.s_alpha) <= kDomainTol * (1.0 + std::abs(dom.s_alpha));
  bool at_omega = std::abs(s_hat - dom.s_omega) <= kDomainTol * (1.0 + std::abs(dom.s_omega));
  require(at_alpha || at_omega, Errc::out_of_domain,
          "boundary slope is defined at the caps only");
  double gamma_scale =
      std::max(detail::scan_max_abs(co.gamma, dom), 1e-300);
  require(std::abs(co.gamma(s_hat)) < 1e-8 * gamma_scale,
          Errc::not_an_equilibrium, "gamma must vanish at the cap");
  double nu = co.nu(s_hat);
  require(nu < 0.0, Errc::not_hyperbolic,
          "cap equilibrium is not hyperbolic (nu >= 0)");
  double slope = std::sqrt(-nu);
  return at_alpha ? slope : -slope;
}

struct ConstructOptions {
  int grid = 241;            // Chebyshev sample count for curve fitting
  int table_cells = 20000;   // resolution of the cumulative tables
  double slope_guard_rel = 1e-7;  // below this (relative) speed the 0/0
                                  // slope formula yields to the cap model
  double negative_rho_rel_tol = 1e-9;
  ExistenceOptions existence;
};

namespace detail {

// Local speed model at a cap equilibrium: linear with the hyperbolic slope,
// or a 3/2-power law when the cap is degenerate (gamma has a flat zero).
struct CapModel {
  double s_cap = 0.0;
  bool degenerate = false;
  double slope = 0.0;   // hyperbolic: |rho'| at the cap
  double coeff = 0.0;   // degenerate: rho ~ coeff * |s - s_cap|^{3/2}
  double eval(double s) const {
    double d = std::abs(s - s_cap);
    return degenerate ? coeff * d * std::sqrt(d) : slope * d;
  }
  double eval_slope(double s) const {
    double d = std::abs(s - s_cap);
    double inward = degenerate ? 1.5 * coeff * std::sqrt(d) : slope;
    return (s >= s_cap) ? inward : -inward;
  }
};

// Finite-difference slope of a pointwise-evaluable vector function: fourth
// order central in the interior (shrinking the step to stay central when a
// domain edge is near), second order one-sided at the edges themselves.
inline VectorXd fd_slope(const std::function<VectorXd(double)>& f, double s,
                         const Interval& dom, double h) {
  double room = std::min(s - dom.s_alpha, dom.s_omega - s);
  if (room < 2.0 * h) {
    if (room > 8.0e-3 * h) {
      h = 0.45 * room;
    } else {
      double dir = (s - dom.s_alpha <= dom.s_omega - s) ? 1.0 : -1.0;
      return dir *
             (-3.0 * f(s) + 4.0 * f(s + dir * h) - f(s + dir * 2.0 * h)) /
             (2.0 * h);
    }
  }
  return (-f(s + 2.0 * h) + 8.0 * f(s + h) - 8.0 * f(s - h) +
          f(s - 2.0 * h)) /
         (12.0 * h);
}

}  // namespace detail

// Build the complete maneuver from a synchronization profile whose reduced
// dynamics pass the existence check: the speed profile is recovered from
// the level curve through the resting caps, the state curve is
// col(Phi, Phi' rho), and the input follows from a left inverse of Bu.
inline Maneuver construct_maneuver(const MechanicalSystem& sys,
                                   const Synchronization& profile,
                                   const ReducedCoefficients& co,
                                   ConstructOptions opt = {}) {
  const Interval dom = co.domain;
  VectorXd q_alpha = profile.Phi(dom.s_alpha);
  VectorXd q_omega = profile.Phi(dom.s_omega);
  ExistenceReport rep =
      check_ptp_existence(co, q_alpha, q_omega, profile, opt.existence);
  require(rep.ok(), Errc::existence_check_failed,
          "profile fails the rest-to-rest existence conditions");

  CoefficientTable table = freeze_coefficients(co, opt.table_cells);
  const double L = dom.length();
  const double d_ref = 0.02 * L;  // calibration offset for degenerate caps

  // Level-curve speed squared through the resting start point.
  auto rho_sq_level = [&](double s) {
    return table.level_rho_sq(dom.s_alpha, 0.0, s);
  };

  // Local models at the caps.  A hyperbolic cap carries the linear model
  // with the slope dictated by nu; a cap where nu vanishes is degenerate
  // (the reduced potential has a flat zero) and the level curve itself
  // yields a 3/2-power law, calibrated a short distance inside the domain.
  auto make_cap = [&](double s_cap, bool degenerate) {
    detail::CapModel m;
    m.s_cap = s_cap;
    m.degenerate = degenerate;
    if (degenerate) {
      double s_ref = (s_cap == dom.s_alpha) ? s_cap + d_ref : s_cap - d_ref;
      double r2 = std::max(rho_sq_level(s_ref), 0.0);
      m.coeff = std::sqrt(r2) / (d_ref * std::sqrt(d_ref));
    } else {
      m.slope = std::abs(boundary_slope(co, s_cap));
    }
    return m;
  };
  detail::CapModel cap_a = make_cap(dom.s_alpha, rep.degenerate_alpha_cap);
  detail::CapModel cap_w = make_cap(dom.s_omega, rep.degenerate_omega_cap);

  double rho_sq_scale = 0.0;
  for (double s : linspace(dom, 101))
    rho_sq_scale = std::max(rho_sq_scale, std::abs(rho_sq_level(s)));

  // Speed profile and its slope.  Values come from the level curve
  // everywhere (it is well conditioned: the integral tables accumulate from
  // the resting cap, so no cancellation occurs).  The slope identity
  // -(beta rho^2 + gamma)/(alpha rho) is indeterminate as rho -> 0, so in a
  // thin guard band the slope falls back to the local cap model.
  const double rho_guard = opt.slope_guard_rel * std::sqrt(rho_sq_scale);
  auto rho_of = [&](double s) -> std::pair<double, double> {
    double r2 = rho_sq_level(s);
    require(r2 > -opt.negative_rho_rel_tol * rho_sq_scale,
            Errc::negative_rho_squared,
            "level curve dips below zero between the caps");
    double rho_lvl = std::sqrt(std::max(r2, 0.0));
    double slope;
    if (rho_lvl > rho_guard) {
      slope = -(co.beta(s) * rho_lvl * rho_lvl + co.gamma(s)) /
              (co.alpha(s) * rho_lvl);
    } else {
      double mid = 0.5 * (dom.s_alpha + dom.s_omega);
      slope = (s <= mid) ? cap_a.eval_slope(s) : cap_w.eval_slope(s);
    }
    return {rho_lvl, slope};
  };

  std::vector<double> knots = chebyshev_lobatto(dom, opt.grid);
  int n_k = static_cast<int>(knots.size());
  VectorXd rho_v(n_k), rho_s(n_k);
  for (int i = 0; i < n_k; ++i) {
    auto [v, sl] = rho_of(knots[static_cast<std::size_t>(i)]);
    rho_v(i) = v;
    rho_s(i) = sl;
  }
  rho_v(0) = 0.0;
  rho_v(n_k - 1) = 0.0;
  rho_s(0) = cap_a.degenerate ? 0.0 : cap_a.slope;
  rho_s(n_k - 1) = cap_w.degenerate ? 0.0 : -cap_w.slope;
  ScalarCurve rho_curve = ScalarCurve::hermite(knots, rho_v, rho_s);

  // State curve col(Phi, Phi' rho) and nominal input, all on the same knots.
  int n_q = sys.n_q;
  Maneuver mv;
  mv.domain = dom;
  std::vector<ScalarCurve> x_parts;
  for (int j = 0; j < n_q; ++j) {
    VectorXd vals(n_k), slopes(n_k);
    for (int i = 0; i < n_k; ++i) {
      double s = knots[static_cast<std::size_t>(i)];
      vals(i) = profile.Phi(s)(j);
      slopes(i) = profile.dPhi(s)(j);
    }
    x_parts.push_back(ScalarCurve::hermite(knots, vals, slopes));
  }
  for (int j = 0; j < n_q; ++j) {
    VectorXd vals(n_k), slopes(n_k);
    for (int i = 0; i < n_k; ++i) {
      double s = knots[static_cast<std::size_t>(i)];
      double r = rho_curve.eval(s);
      double rp = rho_curve.derivative(s, 1);
      vals(i) = profile.dPhi(s)(j) * r;
      slopes(i) = profile.ddPhi(s)(j) * r + profile.dPhi(s)(j) * rp;
    }
    x_parts.push_back(ScalarCurve::hermite(knots, vals, slopes));
  }
  mv.x_star = VectorCurve(x_parts);

  // Nominal input: evaluable pointwise straight from the level curve, so
  // the Hermite fit gets exact values and high-order difference slopes.
  std::function<VectorXd(double)> u_of = [&](double s) -> VectorXd {
    auto [r, rp] = rho_of(s);
    return co.Bu_pinv * (co.drive_term(s) * rp * r + co.velocity_term(s) * r * r +
                         co.gravity_term(s));
  };
  std::vector<ScalarCurve> u_parts;
  int m = sys.n_u;
  std::vector<VectorXd> u_samples(static_cast<std::size_t>(n_k));
  std::vector<VectorXd> u_slopes(static_cast<std::size_t>(n_k));
  const double h_fd = 1e-4 * L;
  for (int i = 0; i < n_k; ++i) {
    double s = knots[static_cast<std::size_t>(i)];
    u_samples[static_cast<std::size_t>(i)] = u_of(s);
    u_slopes[static_cast<std::size_t>(i)] = detail::fd_slope(u_of, s, dom, h_fd);
  }
  for (int j = 0; j < m; ++j) {
    VectorXd vals(n_k), slopes(n_k);
    for (int i = 0; i < n_k; ++i) {
      vals(i) = u_samples[static_cast<std::size_t>(i)](j);
      slopes(i) = u_slopes[static_cast<std::size_t>(i)](j);
    }
    u_parts.push_back(ScalarCurve::hermite(knots, vals, slopes));
  }
  mv.u_star = VectorCurve(u_parts);
  mv.rho = rho_curve;

  mv.x_alpha = VectorXd::Zero(2 * n_q);
  mv.x_omega = VectorXd::Zero(2 * n_q);
  mv.x_alpha.head(n_q) = q_alpha;
  mv.x_omega.head(n_q) = q_omega;
  mv.u_alpha = u_samples.front();
  mv.u_omega = u_samples.back();
  return mv;
}

// Fully actuated variant: every configuration direction is driven, so any
// smooth speed profile works and the input follows directly.
inline Maneuver maneuver_from_rho(const MechanicalSystem& sys,
                                  const Synchronization& profile,
                                  const ScalarCurve& rho,
                                  int grid = 241) {
  require(sys.n_u == sys.n_q, Errc::rank_deficient,
          "direct construction needs a fully actuated system");
  const Interval dom = profile.domain;
  MatrixXd Bu_inv = sys.Bu.completeOrthogonalDecomposition().pseudoInverse();

  std::vector<double> knots = chebyshev_lobatto(dom, grid);
  int n_k = static_cast<int>(knots.size());
  int n_q = sys.n_q;

  Maneuver mv;
  mv.domain = dom;
  std::vector<ScalarCurve> x_parts;
  for (int j = 0; j < n_q; ++j) {
    VectorXd vals(n_k), slopes(n_k);
    for (int i = 0; i < n_k; ++i) {
      double s = knots[static_cast<std::size_t>(i)];
      vals(i) = profile.Phi(s)(j);
      slopes(i) = profile.dPhi(s)(j);
    }
    x_parts.push_back(ScalarCurve::hermite(knots, vals, slopes));
  }
  for (int j = 0; j < n_q; ++j) {
    VectorXd vals(n_k), slopes(n_k);
    for (int i = 0; i < n_k; ++i) {
      double s = knots[static_cast<std::size_t>(i)];
      double r = rho.eval(s);
      double rp = rho.derivative(s, 1);
      vals(i) = profile.dPhi(s)(j) * r;
      slopes(i) = profile.ddPhi(s)(j) * r + profile.dPhi(s)(j) * rp;
    }
    x_parts.push_back(ScalarCurve::hermite(knots, vals, slopes));
  }
  mv.x_star = VectorCurve(x_parts);

  std::function<VectorXd(double)> u_of = [&](double s) -> VectorXd {
    double r = rho.eval(s);
    double rp = rho.derivative(s, 1);
    VectorXd q = profile.Phi(s), dq = profile.dPhi(s);
    VectorXd drive = sys.M(q) * dq;
    VectorXd vel = sys.M(q) * profile.ddPhi(s) + coriolis_force(sys, q, dq);
    return Bu_inv * (drive * rp * r + vel * r * r + sys.G(q));
  };
  std::vector<VectorXd> u_samples(static_cast<std::size_t>(n_k));
  std::vector<ScalarCurve> u_parts;
  const double h_fd = 1e-4 * dom.length();
  for (int i = 0; i < n_k; ++i)
    u_samples[static_cast<std::size_t>(i)] =
        u_of(knots[static_cast<std::size_t>(i)]);
  for (int j = 0; j < sys.n_u; ++j) {
    VectorXd vals(n_k), slopes(n_k);
    for (int i = 0; i < n_k; ++i) {
      double s = knots[static_cast<std::size_t>(i)];
      vals(i) = u_samples[static_cast<std::size_t>(i)](j);
      slopes(i) = detail::fd_slope(u_of, s, dom, h_fd)(j);
    }
    u_parts.push_back(ScalarCurve::hermite(knots, vals, slopes));
  }
  mv.u_star = VectorCurve(u_parts);
  mv.rho = rho;
  mv.x_alpha = VectorXd::Zero(2 * n_q);
  mv.x_omega = VectorXd::Zero(2 * n_q);
  mv.x_alpha.head(n_q) = profile.Phi(dom.s_alpha);
  mv.x_omega.head(n_q) = profile.Phi(dom.s_omega);
  mv.u_alpha = u_samples.front();
  mv.u_omega = u_samples.back();
  return mv;
}

// Root-solve a scalar profile parameter (e.g. the interior-equilibrium
// location of a template profile) so the level-curve closure integral
// vanishes.  `make` maps the parameter to fresh reduced coefficients.
inline double tune_existence_integral(
    const std::function<ReducedCoefficients(double)>& make, double lo,
    double hi, int table_cells = 2000, double tol = 1e-11) {
  auto closure = [&](double p) {
    ReducedCoefficients co = make(p);
    CoefficientTable t = freeze_coefficients(co, table_cells);
    return t.J_curve.eval(co.domain.s_omega) -
           t.J_curve.eval(co.domain.s_alpha);
  };
  double f_lo = closure(lo), f_hi = closure(hi);
  require(f_lo * f_hi < 0.0, Errc::existence_check_failed,
          "closure integral does not change sign over the bracket");
  return brent(closure, lo, hi, tol);
}

// Degree-4 polynomial profile with simple zeros at s_alpha and s_e and a
// double zero at s_omega, scaled by k.
inline ScalarCurve pinned_quartic_profile(double k, double s_e,
                                          const Interval& dom) {
  double L = dom.length();
  double c = s_e - dom.s_alpha;
  VectorXd coef(5);
  coef << 0.0, -k * c * L * L, k * (L * L + 2.0 * c * L), -k * (2.0 * L + c),
      k;
  return ScalarCurve::polynomial(coef, dom);
}

}  // namespace ptpstab
