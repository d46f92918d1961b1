#pragma once

// Dense matrix-equation solvers used by the synthesis layer: Hurwitz and
// controllability tests, the continuous algebraic Lyapunov equation via a
// complex-Schur Sylvester solve, and the continuous algebraic Riccati
// equation via the matrix sign function with a Newton polish.

#include <complex>

#include <Eigen/Eigenvalues>

#include "ptpstab/common.hpp"

namespace ptpstab {

inline double max_real_eigenvalue(const MatrixXd& A) {
  Eigen::EigenSolver<MatrixXd> es(A, /*computeEigenvectors=*/false);
  require(es.info() == Eigen::Success, Errc::backend_failure,
          "eigenvalue computation failed");
  return es.eigenvalues().real().maxCoeff();
}

inline bool is_hurwitz(const MatrixXd& A, double margin = 1e-10) {
  return max_real_eigenvalue(A) < -margin;
}

// Rank of [B, AB, ..., A^{n-1}B] with a relative singular-value threshold.
inline int controllability_rank(const MatrixXd& A, const MatrixXd& B,
                                double sv_threshold = 1e-8) {
  const auto n = A.rows();
  require(A.cols() == n && B.rows() == n, Errc::dimension_mismatch,
          "controllability_rank shapes");
  MatrixXd ctrb(n, n * B.cols());
  MatrixXd blk = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * B.cols(), B.cols()) = blk;
    blk = A * blk;
  }
  Eigen::JacobiSVD<MatrixXd> svd(ctrb);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > sv_threshold * sv(0)) ++rank;
  return rank;
}

// Solves the Sylvester equation M X + X N = C by complex Schur reduction of
// both coefficients and a column-wise triangular back-substitution.
inline MatrixXd solve_sylvester(const MatrixXd& M, const MatrixXd& N,
                                const MatrixXd& C) {
  using CMat = Eigen::MatrixXcd;
  require(M.rows() == M.cols() && N.rows() == N.cols(), Errc::dimension_mismatch,
          "sylvester coefficients must be square");
  require(C.rows() == M.rows() && C.cols() == N.rows(),
          Errc::dimension_mismatch, "sylvester right-hand side shape");
  Eigen::ComplexSchur<MatrixXd> schur_m(M, /*computeU=*/true);
  Eigen::ComplexSchur<MatrixXd> schur_n(N, /*computeU=*/true);
  require(schur_m.info() == Eigen::Success && schur_n.info() == Eigen::Success,
          Errc::backend_failure, "schur decomposition failed");
  const CMat& Tm = schur_m.matrixT();
  const CMat& Tn = schur_n.matrixT();
  const CMat& U = schur_m.matrixU();
  const CMat& V = schur_n.matrixU();

  CMat Ct = U.adjoint() * C.cast<std::complex<double>>() * V;
  const auto p = Tm.rows();
  const auto q = Tn.rows();
  CMat Y(p, q);
  const double scale = std::max(1.0, std::max(Tm.norm(), Tn.norm()));
  for (Eigen::Index j = 0; j < q; ++j) {
    CMat rhs = Ct.col(j);
    if (j > 0) rhs -= Y.leftCols(j) * Tn.block(0, j, j, 1);
    CMat lhs = Tm;
    lhs.diagonal().array() += Tn(j, j);
    // Guard against a spectrum clash making the triangular factor singular.
    for (Eigen::Index i = 0; i < p; ++i)
      require(std::abs(lhs(i, i)) > 1e-14 * scale, Errc::backend_failure,
              "sylvester equation is singular (eigenvalue clash)");
    Y.col(j) = lhs.template triangularView<Eigen::Upper>().solve(rhs);
  }
  const CMat X = U * Y * V.adjoint();
  return X.real();
}

// Continuous Lyapunov equation  A^T R + R A = -Q.  The result is symmetrized;
// for symmetric Q and Hurwitz A it is the unique solution.
inline MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& Q) {
  require(A.rows() == A.cols() && Q.rows() == Q.cols() && A.rows() == Q.rows(),
          Errc::dimension_mismatch, "lyapunov shapes");
  MatrixXd R = solve_sylvester(A.transpose(), A, -Q);
  return 0.5 * (R + R.transpose());
}

struct CareResult {
  MatrixXd R;           // stabilizing solution
  MatrixXd K;           // u = K e  gain, K = -Gamma^{-1} B^T R
  double residual;      // Frobenius norm of the Riccati residual
  double closed_loop_max_re;  // max real eigenvalue of A + B K
};

// Continuous algebraic Riccati equation
//   A^T R + R A - R B Gamma^{-1} B^T R + Q = 0,
// solved on the Hamiltonian via the scaled matrix sign iteration, then
// polished with Newton steps through the Lyapunov solver.
inline CareResult solve_care(const MatrixXd& A, const MatrixXd& B,
                             const MatrixXd& Q, const MatrixXd& Gamma) {
  const auto n = A.rows();
  const auto m = B.cols();
  require(A.cols() == n && B.rows() == n, Errc::dimension_mismatch,
          "care A/B shapes");
  require(Q.rows() == n && Q.cols() == n, Errc::dimension_mismatch,
          "care Q shape");
  require(Gamma.rows() == m && Gamma.cols() == m, Errc::dimension_mismatch,
          "care Gamma shape");
  require(controllability_rank(A, B) == static_cast<int>(n) ||
              is_hurwitz(A, 0.0) ||
              [&] {  // allow merely stabilizable pairs
                // Uncontrollable modes must be stable: test via PBH on the
                // unstable eigenvalues.
                Eigen::EigenSolver<MatrixXd> es(A);
                for (Eigen::Index i = 0; i < n; ++i) {
                  if (es.eigenvalues()(i).real() < -1e-12) continue;
                  Eigen::MatrixXcd pbh(n, n + m);
                  pbh << (es.eigenvalues()(i) * Eigen::MatrixXcd::Identity(n, n) -
                          A.cast<std::complex<double>>()),
                      B.cast<std::complex<double>>();
                  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pbh);
                  if (svd.singularValues()(n - 1) <
                      1e-10 * svd.singularValues()(0))
                    return false;
                }
                return true;
              }(),
          Errc::not_stabilizable, "pair (A, B) is not stabilizable");

  const MatrixXd G = B * Gamma.ldlt().solve(B.transpose());
  MatrixXd H(2 * n, 2 * n);
  H << A, -G, -Q, -A.transpose();

  // sign(H) by the determinant-scaled Newton iteration.
  MatrixXd Z = H;
  const double tol = 1e-11 * std::max(1.0, H.norm());
  bool converged = false;
  for (int iter = 0; iter < 120; ++iter) {
    Eigen::PartialPivLU<MatrixXd> lu(Z);
    const double det = std::abs(lu.determinant());
    require(std::isfinite(det) && det > 0.0, Errc::riccati_divergence,
            "sign iteration hit a singular iterate");
    const double c = std::pow(det, -1.0 / static_cast<double>(2 * n));
    const MatrixXd Zs = c * Z;
    const MatrixXd Zn = 0.5 * (Zs + (1.0 / c) * lu.inverse());
    const double delta = (Zn - Z).norm();
    Z = Zn;
    if (delta <= tol) {
      converged = true;
      break;
    }
  }
  require(converged, Errc::riccati_divergence,
          "matrix sign iteration did not converge");

  // Stable subspace: (sign(H) + I) [I; R] = 0.
  MatrixXd lhs(2 * n, n), rhs(2 * n, n);
  lhs << Z.topRightCorner(n, n),
      Z.bottomRightCorner(n, n) + MatrixXd::Identity(n, n);
  rhs << -(Z.topLeftCorner(n, n) + MatrixXd::Identity(n, n)),
      -Z.bottomLeftCorner(n, n);
  MatrixXd R = lhs.colPivHouseholderQr().solve(rhs);
  R = 0.5 * (R + R.transpose());

  auto residual_of = [&](const MatrixXd& X) {
    return (A.transpose() * X + X * A - X * G * X + Q).eval();
  };
  // Newton polish: correction from a Lyapunov solve at the closed loop.
  for (int polish = 0; polish < 3; ++polish) {
    const MatrixXd res = residual_of(R);
    if (res.norm() <= 1e-13 * std::max(1.0, Q.norm())) break;
    const MatrixXd Acl = A - G * R;
    if (!is_hurwitz(Acl, 0.0)) break;
    R += solve_lyapunov(Acl, res);
    R = 0.5 * (R + R.transpose());
  }

  CareResult out;
  out.R = R;
  out.K = -Gamma.ldlt().solve(B.transpose() * R);
  out.residual = residual_of(R).norm();
  out.closed_loop_max_re = max_real_eigenvalue(A + B * out.K);
  require(std::isfinite(out.residual), Errc::riccati_divergence,
          "riccati residual is not finite");
  return out;
}

}  // namespace ptpstab
