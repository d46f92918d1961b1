#pragma once

// Control-affine system abstraction: xdot = f(x) + B(x) u, with Jacobian
// utilities and equilibrium linearization.

#include <functional>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"
#include "ptpstab/matrix_equations.hpp"

namespace ptpstab {

struct ControlAffineSystem {
  int n = 0;  // state dimension
  int m = 0;  // input dimension
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> B;
  // Optional analytic state Jacobian of f(x) + B(x)u at fixed u.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      analytic_jacobian;

  Eigen::VectorXd rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    require(x.size() == n && u.size() == m, Errc::dimension_mismatch,
            "state/input size does not match system dimensions");
    return f(x) + B(x) * u;
  }
};

// State Jacobian of the drift-plus-forced field at fixed input, by
// fourth-order central differences applied to x -> f(x) + B(x)u.
inline Eigen::MatrixXd jacobian_A_fd(const ControlAffineSystem& sys,
                                     const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u) {
  auto g = [&](const Eigen::VectorXd& xi) { return sys.rhs(xi, u); };
  Eigen::MatrixXd A = fd_jacobian(g, x);
  require(all_finite(A), Errc::non_finite_entries,
          "non-finite entries in finite-difference Jacobian");
  return A;
}

inline Eigen::MatrixXd jacobian_A(const ControlAffineSystem& sys,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u) {
  if (sys.analytic_jacobian) {
    Eigen::MatrixXd A = sys.analytic_jacobian(x, u);
    require(all_finite(A), Errc::non_finite_entries,
            "non-finite entries in analytic Jacobian");
    return A;
  }
  return jacobian_A_fd(sys, x, u);
}

struct EquilibriumLinearization {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  double residual = 0.0;   // ||f(x_e) + B(x_e) u_e||
  int ctrb_rank = 0;       // rank of [B, AB, ..., A^{n-1}B]
  bool controllable = false;
};

inline EquilibriumLinearization linearize_equilibrium(
    const ControlAffineSystem& sys, const Eigen::VectorXd& x_e,
    const Eigen::VectorXd& u_e, double residual_tol = 1e-6) {
  EquilibriumLinearization out;
  out.residual = sys.rhs(x_e, u_e).norm();
  require(out.residual < residual_tol, Errc::not_an_equilibrium,
          "point is not an equilibrium of the forced dynamics");
  out.A = jacobian_A(sys, x_e, u_e);
  out.B = sys.B(x_e);
  out.ctrb_rank = controllability_rank(out.A, out.B);
  out.controllable = (out.ctrb_rank == sys.n);
  return out;
}

}  // namespace ptpstab
