#pragma once

// Shared fixtures: the one-degree-of-freedom cart maneuver used across the
// test suite (state curve col(s, rho(s)), input rho' rho, speed profile
// rho(s) = kappa (s - qa)(qw - s)^2), plus its first-order system.

#include <vector>

#include <Eigen/Dense>

#include "ptpstab/maneuver.hpp"
#include "ptpstab/mechanics.hpp"
#include "ptpstab/system.hpp"

namespace testfix {

using ptpstab::ControlAffineSystem;
using ptpstab::Interval;
using ptpstab::Maneuver;
using ptpstab::ScalarCurve;
using ptpstab::VectorCurve;
using Eigen::VectorXd;

inline VectorXd poly_mul(const VectorXd& a, const VectorXd& b) {
  VectorXd c = VectorXd::Zero(a.size() + b.size() - 1);
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j) c(i + j) += a(i) * b(j);
  return c;
}

inline ControlAffineSystem cart_system() {
  return ptpstab::to_control_affine(ptpstab::double_integrator());
}

// Exact polynomial maneuver of the cart: position runs from qa to qw.
inline Maneuver cart_maneuver(double kappa = 1.0, double qa = 0.0,
                              double qw = 1.0) {
  const double L = qw - qa;
  Interval dom{qa, qw};
  // Coefficients are ascending powers of (s - qa).
  VectorXd rho_c(4);
  rho_c << 0.0, kappa * L * L, -2.0 * kappa * L, kappa;
  VectorXd drho_c(3);
  drho_c << kappa * L * L, -4.0 * kappa * L, 3.0 * kappa;
  VectorXd pos_c(2);
  pos_c << qa, 1.0;

  Maneuver mv;
  mv.domain = dom;
  mv.x_star = VectorCurve({ScalarCurve::polynomial(pos_c, dom),
                           ScalarCurve::polynomial(rho_c, dom)});
  mv.u_star = VectorCurve(
      {ScalarCurve::polynomial(poly_mul(drho_c, rho_c), dom)});
  mv.rho = ScalarCurve::polynomial(rho_c, dom);
  mv.x_alpha = Eigen::Vector2d(qa, 0.0);
  mv.x_omega = Eigen::Vector2d(qw, 0.0);
  mv.u_alpha = VectorXd::Zero(1);
  mv.u_omega = VectorXd::Zero(1);
  return mv;
}

}  // namespace testfix
