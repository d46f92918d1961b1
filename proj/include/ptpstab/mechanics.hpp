#pragma once

// Mechanical systems M(q) qddot + C(q,qdot) qdot + G(q) = Bu u with one
// degree of underactuation, and their first-order control-affine form.

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"
#include "ptpstab/system.hpp"

namespace ptpstab {

struct MechanicalSystem {
  int n_q = 0;  // configuration dimension
  int n_u = 0;  // input dimension
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> M;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> G;
  Eigen::MatrixXd Bu;  // n_q x n_u, constant, full column rank
  // Optional analytic partials dM/dq_i (one entry per coordinate).
  std::vector<std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>> dM;
  // Optional closed-form Coriolis matrix; the generic path below stays
  // available as a cross-check.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      C_closed_form;
};

namespace detail {

inline Eigen::MatrixXd mass_partial(const MechanicalSystem& sys,
                                    const Eigen::VectorXd& q, int i) {
  if (!sys.dM.empty()) return sys.dM.at(static_cast<std::size_t>(i))(q);
  const double h = fd_step(q.norm());
  Eigen::VectorXd qp = q, qm = q;
  qp(i) += h;
  qm(i) -= h;
  return (sys.M(qp) - sys.M(qm)) / (2.0 * h);
}

}  // namespace detail

// C1(q,qdot) = sum_k dM/dq_k qdot_k.
inline Eigen::MatrixXd coriolis_c1(const MechanicalSystem& sys,
                                   const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& qdot) {
  Eigen::MatrixXd C1 = Eigen::MatrixXd::Zero(sys.n_q, sys.n_q);
  for (int k = 0; k < sys.n_q; ++k)
    C1 += detail::mass_partial(sys, q, k) * qdot(k);
  return C1;
}

// C2(q,qdot)_{ij} = -1/2 sum_k dM_{jk}/dq_i qdot_k, i.e. row i of C2 is
// -1/2 (dM/dq_i qdot)^T.
inline Eigen::MatrixXd coriolis_c2(const MechanicalSystem& sys,
                                   const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& qdot) {
  Eigen::MatrixXd C2(sys.n_q, sys.n_q);
  for (int i = 0; i < sys.n_q; ++i)
    C2.row(i) = -0.5 * (detail::mass_partial(sys, q, i) * qdot).transpose();
  return C2;
}

inline Eigen::MatrixXd coriolis(const MechanicalSystem& sys,
                                const Eigen::VectorXd& q,
                                const Eigen::VectorXd& qdot) {
  Eigen::MatrixXd C = coriolis_c1(sys, q, qdot) + coriolis_c2(sys, q, qdot);
  require(all_finite(C), Errc::non_finite_entries,
          "non-finite entries in Coriolis matrix");
  return C;
}

// Coriolis force vector C(q,qdot) qdot, preferring the closed form when the
// model carries one.
inline Eigen::VectorXd coriolis_force(const MechanicalSystem& sys,
                                      const Eigen::VectorXd& q,
                                      const Eigen::VectorXd& qdot) {
  if (sys.C_closed_form) return sys.C_closed_form(q, qdot) * qdot;
  return coriolis(sys, q, qdot) * qdot;
}

// Forward dynamics qddot = M^{-1} (Bu u - C qdot - G).
inline Eigen::VectorXd forward_dynamics(const MechanicalSystem& sys,
                                        const Eigen::VectorXd& q,
                                        const Eigen::VectorXd& qdot,
                                        const Eigen::VectorXd& u) {
  Eigen::MatrixXd M = sys.M(q);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive() &&
              M.determinant() > 0.0,
          Errc::singular_inertia, "inertia matrix is not positive definite");
  return ldlt.solve(sys.Bu * u - coriolis_force(sys, q, qdot) - sys.G(q));
}

// First-order form: x = col(q, qdot), f = col(qdot, -M^{-1}(C qdot + G)),
// B = col(0, M^{-1} Bu).
inline ControlAffineSystem to_control_affine(const MechanicalSystem& sys) {
  ControlAffineSystem out;
  out.n = 2 * sys.n_q;
  out.m = sys.n_u;
  const int nq = sys.n_q;
  out.f = [sys, nq](const Eigen::VectorXd& x) {
    Eigen::VectorXd q = x.head(nq), qdot = x.tail(nq);
    Eigen::VectorXd acc =
        forward_dynamics(sys, q, qdot, Eigen::VectorXd::Zero(sys.n_u));
    Eigen::VectorXd dx(2 * nq);
    dx << qdot, acc;
    return dx;
  };
  out.B = [sys, nq](const Eigen::VectorXd& x) {
    Eigen::VectorXd q = x.head(nq);
    Eigen::MatrixXd M = sys.M(q);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    require(ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                M.determinant() > 0.0,
            Errc::singular_inertia, "inertia matrix is not positive definite");
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2 * nq, sys.n_u);
    B.bottomRows(nq) = ldlt.solve(sys.Bu);
    return B;
  };
  return out;
}

// Configuration path q = Phi(s) used to synchronize all coordinates to one
// scalar parameter, with derivatives through order 2.
struct Synchronization {
  Interval domain{0.0, 1.0};
  std::function<Eigen::VectorXd(double)> Phi;
  std::function<Eigen::VectorXd(double)> dPhi;
  std::function<Eigen::VectorXd(double)> ddPhi;
};

// Least-squares input balancing gravity at a configuration: Bu u = G(q).
// Returns the input and the residual ||G(q) - Bu u||; a large residual means
// no constant input holds the configuration.
inline std::pair<Eigen::VectorXd, double> equilibrium_control(
    const MechanicalSystem& sys, const Eigen::VectorXd& q) {
  Eigen::VectorXd u = sys.Bu.colPivHouseholderQr().solve(sys.G(q));
  double residual = (sys.G(q) - sys.Bu * u).norm();
  return {u, residual};
}

// Unit point mass on a line with direct force input.
inline MechanicalSystem double_integrator() {
  MechanicalSystem sys;
  sys.n_q = 1;
  sys.n_u = 1;
  sys.M = [](const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Identity(1, 1);
  };
  sys.G = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); };
  sys.Bu = Eigen::MatrixXd::Identity(1, 1);
  sys.dM = {[](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(1, 1); }};
  return sys;
}

}  // namespace ptpstab
