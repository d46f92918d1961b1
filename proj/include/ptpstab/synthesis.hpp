#pragma once

// Orbitally stabilizing feedback synthesis along an s-parameterized maneuver.
//
// The transverse design problem is posed as a differential linear matrix
// inequality in a matrix function W(s) = R(s)^-1 and a gain factor
// Y(s) = K(s) W(s):
//
//   rho W' - W Aperp^T - Aperp W - Y^T Bperp^T - Bperp Y
//         - lambda (Eperp W + W Eperp^T)  >= 0      on [s_alpha, s_omega],
//
// together with boundary conditions at the two endpoints where rho
// vanishes.  Both W and Y are polynomials in Bernstein (Bezier) form; the
// inequality is enforced on a finite grid and every grid constraint is a
// small dense PSD block of the resulting semidefinite program.  At the
// endpoints the block is structurally singular along the projection row
// P(s), so there it is split into an equality (the singular direction) and
// a strictly definite block on the complement; a uniform margin elsewhere
// keeps the certified sweep positive between grid points.
//
// Boundary handling supports two conventions:
//   * equality:   K(s_i) W(s_i) = Y(s_i) pins the endpoint gains to given
//                 matrices (typically boundary LQR gains), and
//   * inline_lmi: the endpoint Lyapunov inequality alone constrains the
//                 endpoint gain implicitly.
// In both cases the block -sym[A_s W + B_s Y](s_i) >= margin * I is added
// so the recovered endpoint Lyapunov equations have definite right-hand
// sides.
//
// Downstream of the solve, the module provides independent checks:
//   * certify_design     — endpoint Lyapunov recovery, a dense sweep of the
//                          inequality, a projected Lyapunov identity check,
//                          and endpoint closed-loop spectra;
//   * reduced_uniqueness_check — reconstructs the transverse Lyapunov
//                          matrix through the reduced (n-1)-dimensional
//                          differential equation and compares;
//   * hauser_lde_residual — residual of the full-order Lyapunov
//                          differential equation for designs that satisfy
//                          it exactly.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"
#include "ptpstab/curves.hpp"
#include "ptpstab/linearization.hpp"
#include "ptpstab/maneuver.hpp"
#include "ptpstab/ode.hpp"
#include "ptpstab/projection.hpp"
#include "ptpstab/sdp.hpp"
#include "ptpstab/system.hpp"

namespace ptpstab {

namespace detail {

inline double spectral_abscissa(const MatrixXd& a) {
  Eigen::EigenSolver<MatrixXd> es(a, /*computeEigenvectors=*/false);
  require(es.info() == Eigen::Success, Errc::backend_failure,
          "eigenvalue iteration failed");
  return es.eigenvalues().real().maxCoeff();
}

inline MatrixXd symmetrize(const MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

inline MatrixXd sym2(const MatrixXd& a) { return a + a.transpose(); }

// Solves (I (x) A^T + A^T (x) I) vec R = -vec Q directly.  No use is made
// of the spectrum, so this doubles as an independent oracle for the
// eigenvector-based path.
inline MatrixXd ale_kron(const MatrixXd& a, const MatrixXd& q) {
  const Eigen::Index n = a.rows();
  const MatrixXd at = a.transpose();
  MatrixXd big = MatrixXd::Zero(n * n, n * n);
  const MatrixXd id = MatrixXd::Identity(n, n);
  // Column-major vec: vec(A^T R) = (I (x) A^T) vec R, and
  // vec(R A) = (A^T (x) I) vec R, whose (bi, bj) block is A(bj, bi) * I.
  for (Eigen::Index j = 0; j < n; ++j) big.block(j * n, j * n, n, n) += at;
  for (Eigen::Index bi = 0; bi < n; ++bi)
    for (Eigen::Index bj = 0; bj < n; ++bj)
      big.block(bi * n, bj * n, n, n) += a(bj, bi) * id;
  VectorXd rhs = -Eigen::Map<const VectorXd>(q.data(), n * n);
  VectorXd sol = big.partialPivLu().solve(rhs);
  MatrixXd r = Eigen::Map<MatrixXd>(sol.data(), n, n);
  return symmetrize(r);
}

// Values of the degree-p Bernstein basis at unit coordinate t.
inline VectorXd bernstein_values(int p, double t) {
  VectorXd b = VectorXd::Zero(p + 1);
  b(0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    for (int k = j; k >= 1; --k) b(k) = t * b(k - 1) + (1.0 - t) * b(k);
    b(0) *= (1.0 - t);
  }
  return b;
}

// First derivatives with respect to the curve parameter s of the
// degree-p Bernstein basis, for a domain of length len.
inline VectorXd bernstein_derivatives(int p, double t, double len) {
  VectorXd lower = bernstein_values(p - 1, t);
  VectorXd d = VectorXd::Zero(p + 1);
  for (int k = 0; k <= p; ++k) {
    double v = 0.0;
    if (k >= 1) v += lower(k - 1);
    if (k <= p - 1) v -= lower(k);
    d(k) = v * static_cast<double>(p) / len;
  }
  return d;
}

// Symmetric basis matrix for the (i, j) upper-triangle entry: unit on the
// diagonal, mirrored pair off the diagonal.
inline MatrixXd sym_basis(int n, int i, int j) {
  MatrixXd s = MatrixXd::Zero(n, n);
  s(i, j) = 1.0;
  s(j, i) = 1.0;
  if (i == j) s(i, j) = 1.0;
  return s;
}

// Orthonormal basis of the hyperplane orthogonal to the row vector p.
inline MatrixXd orthogonal_complement(const RowVectorXd& p) {
  const Eigen::Index n = p.size();
  Eigen::HouseholderQR<MatrixXd> qr(p.transpose());
  MatrixXd q = qr.householderQ();
  return q.rightCols(n - 1);
}

inline json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline MatrixXd matrix_from_json(const json& j) {
  require(j.is_array() && !j.empty() && j.front().is_array(), Errc::io_error,
          "matrix document must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    require(static_cast<Eigen::Index>(j[static_cast<size_t>(r)].size()) == cols,
            Errc::io_error, "ragged matrix document");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Algebraic Lyapunov equation  A_cl^T R + R A_cl = -Q.

inline MatrixXd ale_solve(const MatrixXd& a_cl, const MatrixXd& q) {
  const Eigen::Index n = a_cl.rows();
  require(a_cl.cols() == n && q.rows() == n && q.cols() == n,
          Errc::dimension_mismatch, "Lyapunov equation shapes");
  require(all_finite(a_cl) && all_finite(q), Errc::non_finite_entries,
          "Lyapunov equation data");
  const double a_scale = std::max(1.0, a_cl.norm());
  const double abscissa = detail::spectral_abscissa(a_cl);
  require(abscissa < -1e-13 * a_scale, Errc::not_hurwitz,
          "closed-loop matrix is not Hurwitz (spectral abscissa " +
              std::to_string(abscissa) + ")");

  const MatrixXd qs = detail::symmetrize(q);
  const double q_scale = std::max(1.0, qs.norm());

  // Diagonalize once; the transformed equation is solved entrywise.
  Eigen::ComplexEigenSolver<MatrixXd> es(a_cl);
  MatrixXd r;
  bool ok = false;
  if (es.info() == Eigen::Success) {
    const Eigen::MatrixXcd v = es.eigenvectors();
    const Eigen::VectorXcd lam = es.eigenvalues();
    Eigen::PartialPivLU<Eigen::MatrixXcd> vlu(v);
    Eigen::MatrixXcd qt = v.transpose() * qs * v;
    Eigen::MatrixXcd st(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        st(i, j) = -qt(i, j) / (lam(i) + lam(j));
    Eigen::MatrixXcd rc =
        vlu.solve(vlu.solve(st.transpose()).transpose());
    r = detail::symmetrize(rc.real());
    const double res = (a_cl.transpose() * r + r * a_cl + qs).norm();
    ok = res <= 1e-12 * q_scale * std::max(1.0, r.norm());
  }
  if (!ok) r = detail::ale_kron(a_cl, qs);

  const double res = (a_cl.transpose() * r + r * a_cl + qs).norm();
  require(res <= 1e-10 * q_scale * std::max(1.0, r.norm()),
          Errc::backend_failure,
          "Lyapunov solve residual " + std::to_string(res) +
              " exceeds tolerance");
  return r;
}

// ---------------------------------------------------------------------------
// Boundary LQR: continuous-time Riccati equation
//   A^T R + R A - R B Gamma^-1 B^T R + Q = 0,  K = -Gamma^-1 B^T R.

struct LqrResult {
  MatrixXd K;
  MatrixXd R;
};

inline LqrResult lqr_boundary(const MatrixXd& a, const MatrixXd& b,
                              const MatrixXd& gamma, const MatrixXd& q) {
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.cols();
  require(a.cols() == n && b.rows() == n && gamma.rows() == m &&
              gamma.cols() == m && q.rows() == n && q.cols() == n,
          Errc::dimension_mismatch, "Riccati data shapes");
  require(all_finite(a) && all_finite(b) && all_finite(gamma) && all_finite(q),
          Errc::non_finite_entries, "Riccati data");
  const MatrixXd gs = detail::symmetrize(gamma);
  const MatrixXd qs = detail::symmetrize(q);
  Eigen::LLT<MatrixXd> gamma_llt(gs);
  require(gamma_llt.info() == Eigen::Success, Errc::assumption_violated,
          "input weight must be positive definite");
  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> qe(qs, Eigen::EigenvaluesOnly);
    require(qe.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, qs.norm()),
            Errc::assumption_violated,
            "state weight must be positive semidefinite");
  }

  // Hautus test on every closed right-half-plane eigenvalue.
  {
    Eigen::ComplexEigenSolver<MatrixXd> es(a);
    require(es.info() == Eigen::Success, Errc::backend_failure,
            "eigenvalue iteration failed");
    const double a_scale = std::max(1.0, a.norm());
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::complex<double> lam = es.eigenvalues()(i);
      if (lam.real() < -1e-12 * a_scale) continue;
      Eigen::MatrixXcd pencil(n, n + m);
      pencil.leftCols(n) =
          a.cast<std::complex<double>>() -
          lam * Eigen::MatrixXcd::Identity(n, n);
      pencil.rightCols(m) = b.cast<std::complex<double>>();
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
      const double smin = svd.singularValues().minCoeff();
      const double smax = svd.singularValues().maxCoeff();
      require(smin > 1e-10 * std::max(1.0, smax), Errc::not_stabilizable,
              "unstabilizable mode at eigenvalue with real part " +
                  std::to_string(lam.real()));
    }
  }

  const MatrixXd ginv_bt = gamma_llt.solve(b.transpose());
  const MatrixXd s = b * ginv_bt;  // B Gamma^-1 B^T

  // Stable invariant subspace of the Hamiltonian matrix.
  MatrixXd ham(2 * n, 2 * n);
  ham << a, -s, -qs, -a.transpose();
  Eigen::ComplexEigenSolver<MatrixXd> hes(ham);
  require(hes.info() == Eigen::Success, Errc::riccati_divergence,
          "Hamiltonian eigenvalue iteration failed");
  Eigen::MatrixXcd basis(2 * n, n);
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < 2 * n && count < n; ++i)
    if (hes.eigenvalues()(i).real() < 0.0)
      basis.col(count++) = hes.eigenvectors().col(i);
  require(count == n, Errc::riccati_divergence,
          "Hamiltonian matrix lacks an n-dimensional stable subspace");
  Eigen::MatrixXcd u1 = basis.topRows(n);
  Eigen::MatrixXcd u2 = basis.bottomRows(n);
  {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(u1);
    require(svd.singularValues().minCoeff() >
                1e-13 * std::max(1.0, svd.singularValues().maxCoeff()),
            Errc::riccati_divergence,
            "stable subspace is not a graph over the state space");
  }
  MatrixXd r = detail::symmetrize(
      (u2 * u1.inverse()).real());

  // Newton (Kleinman) refinement: each step solves a Lyapunov equation for
  // the current stabilizing gain.
  auto riccati_residual = [&](const MatrixXd& rr) {
    return (a.transpose() * rr + rr * a - rr * s * rr + qs).norm() /
           std::max({1.0, qs.norm(), (rr * s * rr).norm()});
  };
  for (int it = 0; it < 60; ++it) {
    const MatrixXd k = -(ginv_bt * r);
    const MatrixXd a_cl = a + b * k;
    if (detail::spectral_abscissa(a_cl) >= 0.0) break;
    MatrixXd r_next;
    try {
      r_next = ale_solve(a_cl, qs + k.transpose() * gs * k);
    } catch (const Error&) {
      break;
    }
    const double move = (r_next - r).norm() / std::max(1.0, r.norm());
    r = r_next;
    if (move < 1e-14) break;
  }

  const double res = riccati_residual(r);
  require(res <= 1e-8, Errc::riccati_divergence,
          "Riccati residual " + std::to_string(res) + " exceeds tolerance");
  LqrResult out;
  out.R = r;
  out.K = -(ginv_bt * r);
  const double cl_abscissa = detail::spectral_abscissa(a + b * out.K);
  require(cl_abscissa < -1e-10, Errc::riccati_divergence,
          "computed gain fails to place the spectrum strictly left of the "
          "imaginary axis");
  return out;
}

// ---------------------------------------------------------------------------
// Gain schedule bundle.

struct GainSchedule {
  MatrixCurve K;       // m x n feedback gain along the maneuver
  MatrixXd K_alpha;    // endpoint gains (constant matrices)
  MatrixXd K_omega;
  MatrixCurve W;       // certificate factor, W(s) = R(s)^-1
  MatrixCurve Y;       // Y(s) = K(s) W(s)
  ScalarCurve lambda;  // exponential-rate shift used in the design

  // Gain evaluated through the exact factorization rather than the K refit.
  MatrixXd gain_exact(double s) const {
    return Y.eval(s) * W.eval(s).inverse();
  }
  GainMap exact_gain_map() const {
    return [*this](double s) { return gain_exact(s); };
  }
};

inline json to_json(const GainSchedule& g) {
  json j;
  j["kind"] = "gain_schedule";
  j["K"] = to_json(g.K);
  j["K_alpha"] = detail::matrix_to_json(g.K_alpha);
  j["K_omega"] = detail::matrix_to_json(g.K_omega);
  j["W"] = to_json(g.W);
  j["Y"] = to_json(g.Y);
  j["lambda"] = to_json(g.lambda);
  return j;
}

inline GainSchedule gain_schedule_from_json(const json& j) {
  require(j.is_object() && j.value("kind", "") == "gain_schedule",
          Errc::io_error, "expected a gain_schedule document");
  GainSchedule g;
  g.K = matrix_curve_from_json(j.at("K"));
  g.K_alpha = detail::matrix_from_json(j.at("K_alpha"));
  g.K_omega = detail::matrix_from_json(j.at("K_omega"));
  g.W = matrix_curve_from_json(j.at("W"));
  g.Y = matrix_curve_from_json(j.at("Y"));
  g.lambda = scalar_curve_from_json(j.at("lambda"));
  return g;
}

// ---------------------------------------------------------------------------
// Differential LMI transcription.

struct BoundaryOption {
  enum class Kind { inline_lmi, equality };
  Kind kind = Kind::equality;
  MatrixXd K_alpha;  // used by Kind::equality
  MatrixXd K_omega;

  static BoundaryOption inline_lmi() {
    BoundaryOption b;
    b.kind = Kind::inline_lmi;
    return b;
  }
  static BoundaryOption equality(MatrixXd k_alpha, MatrixXd k_omega) {
    BoundaryOption b;
    b.kind = Kind::equality;
    b.K_alpha = std::move(k_alpha);
    b.K_omega = std::move(k_omega);
    return b;
  }
};

struct DlmiNumerics {
  // Floor on W(s_k).  The margin blocks break the problem's scale freedom:
  // scaling a feasible (W, Y) up only helps them, so a substantial floor
  // costs no feasibility while it keeps W^-1 (the certificate weight) well
  // conditioned when the trace objective pulls W downward.
  double eps_w_rel = 1e-3;
  double dlmi_margin = 1e-3;  // uniform margin on the scaled grid blocks
  double ale_margin = 1e-3;   // margin on the endpoint Lyapunov blocks
  double cap_rho_tol = 1e-9;  // |rho| below this (relative) marks an endpoint
  bool trace_objective = true;  // minimize sum_k tr W(s_k); else feasibility
  // Weight on the quadratic input-factor regularizer.  The inequality blocks
  // leave directions of Y unbounded (growing Y can only help them), so a pure
  // trace objective admits optimal faces stretching to infinity and the
  // recovered gain Y W^-1 picks up enormous off-endpoint excursions.  Slack
  // blocks [[T, Y_k], [Y_k^T, I]] >= 0 with sum tr T in the objective charge
  // ||Y_k||_F^2 and keep the minimizer finite.
  double y_penalty = 1e-2;
};

struct DlmiAssembly {
  SdpProblem problem;
  int n = 0;
  int m = 0;
  int order = 0;
  Interval domain;
  std::vector<double> grid;

  bool y_slack = false;  // slack variables bounding each input control point

  int sym_dofs() const { return n * (n + 1) / 2; }
  int w_var_count() const { return (order + 1) * sym_dofs(); }
  int y_var_count() const { return (order + 1) * m * n; }
  int t_sym_dofs() const { return m * (m + 1) / 2; }
  int t_var_count() const { return y_slack ? (order + 1) * t_sym_dofs() : 0; }

  int w_index(int k, int i, int j) const {
    if (i > j) std::swap(i, j);
    const int tri = i * n - i * (i - 1) / 2 + (j - i);
    return k * sym_dofs() + tri;
  }
  int y_index(int k, int r, int c) const {
    return w_var_count() + k * m * n + r * n + c;
  }
  int t_index(int k, int i, int j) const {
    if (i > j) std::swap(i, j);
    const int tri = i * m - i * (i - 1) / 2 + (j - i);
    return w_var_count() + y_var_count() + k * t_sym_dofs() + tri;
  }

  MatrixCurve w_curve(const VectorXd& x) const {
    std::vector<ScalarCurve> comps;
    comps.reserve(static_cast<size_t>(n) * static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        VectorXd ctrl(order + 1);
        for (int k = 0; k <= order; ++k) ctrl(k) = x(w_index(k, i, j));
        comps.push_back(ScalarCurve::bezier(ctrl, domain));
      }
    return MatrixCurve(n, n, std::move(comps));
  }
  MatrixCurve y_curve(const VectorXd& x) const {
    std::vector<ScalarCurve> comps;
    comps.reserve(static_cast<size_t>(m) * static_cast<size_t>(n));
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) {
        VectorXd ctrl(order + 1);
        for (int k = 0; k <= order; ++k) ctrl(k) = x(y_index(k, r, c));
        comps.push_back(ScalarCurve::bezier(ctrl, domain));
      }
    return MatrixCurve(m, n, std::move(comps));
  }
};

inline DlmiAssembly assemble_dlmi(const ControlAffineSystem& sys,
                                  const Maneuver& mv,
                                  const ProjectionOperator& op,
                                  const ScalarCurve& lambda, int basis_order,
                                  int grid_size,
                                  const BoundaryOption& boundary,
                                  const DlmiNumerics& num = {}) {
  const int n = mv.n();
  const int m = mv.m();
  require(sys.n == n && sys.m == m, Errc::dimension_mismatch,
          "system and maneuver dimensions disagree");
  require(basis_order >= 1, Errc::config_error, "basis order must be >= 1");
  require(grid_size >= 2 * basis_order, Errc::grid_too_coarse,
          "grid must have at least twice as many points as the basis order");
  require(lambda.domain() == mv.domain, Errc::dimension_mismatch,
          "rate-shift curve domain must match the maneuver domain");
  if (boundary.kind == BoundaryOption::Kind::equality) {
    require(boundary.K_alpha.rows() == m && boundary.K_alpha.cols() == n &&
                boundary.K_omega.rows() == m && boundary.K_omega.cols() == n,
            Errc::dimension_mismatch, "endpoint gain shapes");
    require(all_finite(boundary.K_alpha) && all_finite(boundary.K_omega),
            Errc::non_finite_entries, "endpoint gains");
  }

  DlmiAssembly out;
  out.n = n;
  out.m = m;
  out.order = basis_order;
  out.domain = mv.domain;
  out.grid = linspace(mv.domain, grid_size);
  const double len = mv.domain.length();

  out.y_slack = num.trace_objective;
  const int n_vars =
      out.w_var_count() + out.y_var_count() + out.t_var_count();
  out.problem.n_vars = n_vars;

  double max_rho = 0.0;
  std::vector<OrbitSample> samples;
  samples.reserve(out.grid.size());
  for (double s : out.grid) {
    samples.push_back(orbit_sample(sys, mv, op, GainMap{}, s));
    max_rho = std::max(max_rho, std::abs(samples.back().rho));
  }
  require(max_rho > 0.0, Errc::assumption_violated,
          "speed profile vanishes identically");

  double max_a_norm = 1.0;
  for (const auto& smp : samples)
    max_a_norm = std::max(max_a_norm, smp.A_s.norm());
  const double eps_w = num.eps_w_rel * max_a_norm;

  VectorXd objective = VectorXd::Zero(n_vars);

  // Per-variable dense contribution to the inequality matrix at one sample.
  auto dlmi_contribution = [&](const OrbitSample& smp, double lam, double wb,
                               double wd, bool is_w, int i, int j, int r,
                               int c) -> MatrixXd {
    if (is_w) {
      const MatrixXd s_ij = detail::sym_basis(n, i, j);
      MatrixXd contrib = smp.rho * wd * s_ij;
      contrib -= wb * (s_ij * smp.A_perp.transpose() + smp.A_perp * s_ij);
      contrib -= wb * lam *
                 (smp.E_perp * s_ij + s_ij * smp.E_perp.transpose());
      return contrib;
    }
    const VectorXd br = smp.B_perp.col(r);
    MatrixXd contrib = MatrixXd::Zero(n, n);
    contrib.col(c) -= wb * br;
    contrib.row(c) -= wb * br.transpose();
    return contrib;
  };

  for (size_t g = 0; g < out.grid.size(); ++g) {
    const double s = out.grid[g];
    const OrbitSample& smp = samples[g];
    const double lam = lambda.eval(s);
    require(lam > 0.0, Errc::assumption_violated,
            "rate shift must be positive on the whole domain");
    const double t = mv.domain.to_unit(s);
    const VectorXd wb = detail::bernstein_values(basis_order, t);
    const VectorXd wd = detail::bernstein_derivatives(basis_order, t, len);
    const double c_s = 1.0 / std::max(1.0, smp.A_s.norm());
    const bool is_cap = std::abs(smp.rho) <= num.cap_rho_tol * max_rho;

    MatrixXd v;  // complement of the projection row, used at endpoints
    if (is_cap) v = detail::orthogonal_complement(smp.P);

    SdpBlock block;
    block.dim = is_cap ? n - 1 : n;
    {
      std::ostringstream lbl;
      lbl << (is_cap ? "dlmi_cap[" : "dlmi[") << g << "]";
      block.label = lbl.str();
    }
    block.add_constant_matrix(-num.dlmi_margin *
                              MatrixXd::Identity(block.dim, block.dim));

    // Equality rows taking the place of the singular direction at endpoints:
    // Eperp [(A_s + lambda I) W + B_s Y] P^T = 0, one row per state index.
    std::vector<std::vector<SdpEqualityTerm>> cap_rows;
    if (is_cap) cap_rows.assign(static_cast<size_t>(n), {});
    const MatrixXd a_shift = smp.A_s + lam * MatrixXd::Identity(n, n);

    auto visit_var = [&](int var, bool is_w, int k, int i, int j, int r,
                         int c) {
      const double weight = wb(k);
      const double dweight = wd(k);
      if (weight == 0.0 && dweight == 0.0) return;
      MatrixXd contrib =
          dlmi_contribution(smp, lam, weight, dweight, is_w, i, j, r, c);
      if (is_cap) {
        block.add_linear_matrix(var,
                                c_s * (v.transpose() * contrib * v).eval());
        if (weight != 0.0) {
          VectorXd row;
          if (is_w) {
            const MatrixXd s_ij = detail::sym_basis(n, i, j);
            row = weight *
                  (smp.E_perp * a_shift * s_ij * smp.P.transpose());
          } else {
            row = weight * smp.P(c) * (smp.E_perp * smp.B_s.col(r));
          }
          for (int a = 0; a < n; ++a)
            if (row(a) != 0.0)
              cap_rows[static_cast<size_t>(a)].push_back({var, row(a)});
        }
      } else {
        block.add_linear_matrix(var, (c_s * contrib).eval());
      }
    };

    for (int k = 0; k <= basis_order; ++k) {
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          visit_var(out.w_index(k, i, j), true, k, i, j, 0, 0);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
          visit_var(out.y_index(k, r, c), false, k, 0, 0, r, c);
    }
    out.problem.blocks.push_back(std::move(block));

    if (is_cap) {
      for (int a = 0; a < n; ++a) {
        auto& row = cap_rows[static_cast<size_t>(a)];
        if (row.empty()) continue;
        double big = 0.0;
        for (const auto& term : row) big = std::max(big, std::abs(term.value));
        if (big == 0.0) continue;
        SdpEquality eq;
        for (auto& term : row) eq.terms.push_back({term.var, term.value / big});
        eq.rhs = 0.0;
        std::ostringstream lbl;
        lbl << "cap_null[" << g << "][" << a << "]";
        eq.label = lbl.str();
        out.problem.equalities.push_back(std::move(eq));
      }
    }

    // Floor on W itself.
    SdpBlock floor_block;
    floor_block.dim = n;
    {
      std::ostringstream lbl;
      lbl << "wfloor[" << g << "]";
      floor_block.label = lbl.str();
    }
    floor_block.add_constant_matrix(-eps_w * MatrixXd::Identity(n, n));
    for (int k = 0; k <= basis_order; ++k) {
      if (wb(k) == 0.0) continue;
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          floor_block.add_linear_matrix(
              out.w_index(k, i, j), wb(k) * detail::sym_basis(n, i, j));
    }
    out.problem.blocks.push_back(std::move(floor_block));

    if (num.trace_objective)
      for (int k = 0; k <= basis_order; ++k)
        for (int i = 0; i < n; ++i) objective(out.w_index(k, i, i)) += wb(k);
  }

  // Endpoint Lyapunov blocks -sym[A_s W + B_s Y](s_i) >= margin * I; with
  // Bernstein end conditions only the first/last control points contribute.
  for (int end = 0; end < 2; ++end) {
    const size_t g = (end == 0) ? 0 : out.grid.size() - 1;
    const OrbitSample& smp = samples[g];
    const int k0 = (end == 0) ? 0 : basis_order;
    const double c_s = 1.0 / std::max(1.0, smp.A_s.norm());
    SdpBlock block;
    block.dim = n;
    block.label = (end == 0) ? "bndry_ale_alpha" : "bndry_ale_omega";
    block.add_constant_matrix(-num.ale_margin * MatrixXd::Identity(n, n));
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const MatrixXd s_ij = detail::sym_basis(n, i, j);
        block.add_linear_matrix(
            out.w_index(k0, i, j),
            (-c_s * detail::sym2(smp.A_s * s_ij)).eval());
      }
    const MatrixXd b_mat = smp.B_s;
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) {
        MatrixXd contrib = MatrixXd::Zero(n, n);
        contrib.col(c) -= b_mat.col(r);
        contrib.row(c) -= b_mat.col(r).transpose();
        block.add_linear_matrix(out.y_index(k0, r, c), (c_s * contrib).eval());
      }
    out.problem.blocks.push_back(std::move(block));

    if (boundary.kind == BoundaryOption::Kind::equality) {
      const MatrixXd& k_end = (end == 0) ? boundary.K_alpha : boundary.K_omega;
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
          SdpEquality eq;
          for (int jj = 0; jj < n; ++jj) {
            const double coeff = k_end(r, jj);
            if (coeff != 0.0)
              eq.terms.push_back({out.w_index(k0, jj, c), coeff});
          }
          eq.terms.push_back({out.y_index(k0, r, c), -1.0});
          eq.rhs = 0.0;
          std::ostringstream lbl;
          lbl << "kcap_" << (end == 0 ? "alpha" : "omega") << "[" << r << "]["
              << c << "]";
          eq.label = lbl.str();
          out.problem.equalities.push_back(std::move(eq));
        }
    }
  }

  // Schur slack per input control point: [[T_k, Y_k], [Y_k^T, I]] >= 0
  // forces T_k >= Y_k Y_k^T, and tr T_k in the objective charges ||Y_k||_F^2.
  if (out.y_slack) {
    for (int k = 0; k <= basis_order; ++k) {
      SdpBlock block;
      block.dim = m + n;
      {
        std::ostringstream lbl;
        lbl << "yslack[" << k << "]";
        block.label = lbl.str();
      }
      for (int c = 0; c < n; ++c) block.add_constant(m + c, m + c, 1.0);
      for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j)
          block.add_linear(out.t_index(k, i, j), i, j, 1.0);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
          block.add_linear(out.y_index(k, r, c), r, m + c, 1.0);
      out.problem.blocks.push_back(std::move(block));
      for (int i = 0; i < m; ++i)
        objective(out.t_index(k, i, i)) += num.y_penalty;
    }
  }

  if (num.trace_objective) out.problem.objective = objective;
  out.problem.validate();
  return out;
}

struct DlmiSolution {
  MatrixCurve W;
  MatrixCurve Y;
  SdpSolution raw;
};

inline DlmiSolution solve_dlmi(const DlmiAssembly& assembly,
                               const SdpBackend& backend = {}) {
  DlmiSolution out;
  out.raw = solve_sdp(assembly.problem, backend);
  out.W = assembly.w_curve(out.raw.x);
  out.Y = assembly.y_curve(out.raw.x);
  return out;
}

// ---------------------------------------------------------------------------
// Gain schedule construction.

inline GainSchedule build_gain_schedule(const MatrixCurve& w_curve,
                                        const MatrixCurve& y_curve,
                                        const ScalarCurve& lambda,
                                        const BoundaryOption& boundary,
                                        int refit_knots = 1001) {
  require(refit_knots >= 2, Errc::config_error, "refit grid too small");
  const Interval dom = w_curve.domain();
  const int n = w_curve.rows();
  const int m = y_curve.rows();
  require(y_curve.cols() == n && w_curve.cols() == n, Errc::dimension_mismatch,
          "factor curve shapes");

  const std::vector<double> knots = linspace(dom, refit_knots);
  std::vector<MatrixXd> k_vals, k_slopes;
  k_vals.reserve(knots.size());
  k_slopes.reserve(knots.size());
  for (double s : knots) {
    const MatrixXd w = w_curve.eval(s);
    const MatrixXd wp = w_curve.derivative(s, 1);
    const MatrixXd y = y_curve.eval(s);
    const MatrixXd yp = y_curve.derivative(s, 1);
    Eigen::PartialPivLU<MatrixXd> wlu(w);
    const MatrixXd k = wlu.solve(y.transpose()).transpose();
    const MatrixXd kp =
        wlu.solve((yp - k * wp).transpose()).transpose();
    require(all_finite(k) && all_finite(kp), Errc::non_finite_entries,
            "gain reconstruction");
    k_vals.push_back(k);
    k_slopes.push_back(kp);
  }

  std::vector<ScalarCurve> comps;
  comps.reserve(static_cast<size_t>(m) * static_cast<size_t>(n));
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) {
      VectorXd vals(static_cast<Eigen::Index>(knots.size()));
      VectorXd slopes(static_cast<Eigen::Index>(knots.size()));
      for (size_t q = 0; q < knots.size(); ++q) {
        vals(static_cast<Eigen::Index>(q)) = k_vals[q](r, c);
        slopes(static_cast<Eigen::Index>(q)) = k_slopes[q](r, c);
      }
      comps.push_back(ScalarCurve::hermite(knots, vals, slopes));
    }

  GainSchedule g;
  g.K = MatrixCurve(m, n, std::move(comps));
  g.W = w_curve;
  g.Y = y_curve;
  g.lambda = lambda;
  if (boundary.kind == BoundaryOption::Kind::equality) {
    g.K_alpha = boundary.K_alpha;
    g.K_omega = boundary.K_omega;
  } else {
    g.K_alpha = k_vals.front();
    g.K_omega = k_vals.back();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Top-level synthesis driver.

struct SynthesisOptions {
  ScalarCurve lambda;          // default: constant 0.5 on the domain
  bool has_lambda = false;
  int basis_order = 6;
  int grid_size = 200;
  MatrixXd Gamma_alpha, Gamma_omega;  // default: 1e5 * I_m
  MatrixXd Q_alpha, Q_omega;          // default: I_n
  BoundaryOption::Kind boundary_kind = BoundaryOption::Kind::equality;
  DlmiNumerics numerics;
  SdpBackend backend;  // empty: reference interior-point solver
  int refit_knots = 1001;

  SynthesisOptions& with_lambda(ScalarCurve value) {
    lambda = std::move(value);
    has_lambda = true;
    return *this;
  }
};

struct SynthesisResult {
  GainSchedule gains;
  DlmiAssembly assembly;
  SdpSolution sdp;
  LqrResult lqr_alpha;
  LqrResult lqr_omega;
};

inline SynthesisResult synthesize_gains(const ControlAffineSystem& sys,
                                        const Maneuver& mv,
                                        const ProjectionOperator& op,
                                        SynthesisOptions opt = {}) {
  const int n = mv.n();
  const int m = mv.m();
  if (!opt.has_lambda) opt.lambda = ScalarCurve::constant(0.5, mv.domain);
  MatrixXd gamma_a = opt.Gamma_alpha.size()
                         ? opt.Gamma_alpha
                         : (1e5 * MatrixXd::Identity(m, m)).eval();
  MatrixXd gamma_w = opt.Gamma_omega.size()
                         ? opt.Gamma_omega
                         : (1e5 * MatrixXd::Identity(m, m)).eval();
  MatrixXd q_a =
      opt.Q_alpha.size() ? opt.Q_alpha : MatrixXd::Identity(n, n).eval();
  MatrixXd q_w =
      opt.Q_omega.size() ? opt.Q_omega : MatrixXd::Identity(n, n).eval();

  SynthesisResult out;
  const OrbitSample cap_a =
      orbit_sample(sys, mv, op, GainMap{}, mv.domain.s_alpha);
  const OrbitSample cap_w =
      orbit_sample(sys, mv, op, GainMap{}, mv.domain.s_omega);
  out.lqr_alpha = lqr_boundary(cap_a.A_s, cap_a.B_s, gamma_a, q_a);
  out.lqr_omega = lqr_boundary(cap_w.A_s, cap_w.B_s, gamma_w, q_w);

  BoundaryOption boundary =
      (opt.boundary_kind == BoundaryOption::Kind::equality)
          ? BoundaryOption::equality(out.lqr_alpha.K, out.lqr_omega.K)
          : BoundaryOption::inline_lmi();

  out.assembly = assemble_dlmi(sys, mv, op, opt.lambda, opt.basis_order,
                               opt.grid_size, boundary, opt.numerics);
  DlmiSolution sol = solve_dlmi(out.assembly, opt.backend);
  out.sdp = sol.raw;
  out.gains = build_gain_schedule(sol.W, sol.Y, opt.lambda, boundary,
                                  opt.refit_knots);
  return out;
}

// ---------------------------------------------------------------------------
// Certification: independent checks on a synthesized design.

struct CertifyOptions {
  int dense_grid = 1000;       // sweep size (certification grid)
  double dlmi_tol = 1e-7;      // sweep minimum eigenvalue >= -tol * scale
  double mlde_tol = 1e-6;      // projected-identity residual tolerance
  double hurwitz_tol = 1e-10;  // endpoint spectral-abscissa bound
  bool throw_on_failure = true;
};

struct Certificate {
  MatrixCurve R;                  // inverse certificate factor, refit
  MatrixXd ale_residual_alpha;    // endpoint Lyapunov recovery residuals
  MatrixXd ale_residual_omega;
  double qhat_min_eig_alpha = 0.0;  // recovered endpoint right-hand sides
  double qhat_min_eig_omega = 0.0;
  VectorXd dlmi_min_eigs;         // dense sweep, raw (unscaled) blocks
  double dlmi_scale = 1.0;
  VectorXd mlde_residuals;        // projected-identity residuals on the sweep
  double mlde_scale = 1.0;
  double boundary_abscissa_alpha = 0.0;
  double boundary_abscissa_omega = 0.0;
  std::vector<double> grid;
  bool passed = false;
  std::string summary;
};

inline Certificate certify_design(const ControlAffineSystem& sys,
                                  const Maneuver& mv,
                                  const ProjectionOperator& op,
                                  const GainSchedule& gains,
                                  const CertifyOptions& opt = {}) {
  const int n = mv.n();
  require(gains.W.rows() == n && gains.W.cols() == n &&
              gains.Y.cols() == n && gains.Y.rows() == mv.m(),
          Errc::dimension_mismatch, "gain schedule shapes");
  Certificate cert;
  cert.grid = linspace(mv.domain, opt.dense_grid);
  const GainMap gain = gains.exact_gain_map();

  // Hermite refit of R = W^-1 with exact values and slopes R' = -R W' R.
  {
    std::vector<ScalarCurve> comps;
    std::vector<MatrixXd> r_vals, r_slopes;
    r_vals.reserve(cert.grid.size());
    r_slopes.reserve(cert.grid.size());
    for (double s : cert.grid) {
      const MatrixXd w = gains.W.eval(s);
      const MatrixXd wp = gains.W.derivative(s, 1);
      const MatrixXd r = w.inverse();
      r_vals.push_back(detail::symmetrize(r));
      r_slopes.push_back(detail::symmetrize(-r * wp * r));
    }
    comps.reserve(static_cast<size_t>(n) * static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        VectorXd vals(static_cast<Eigen::Index>(cert.grid.size()));
        VectorXd slopes(static_cast<Eigen::Index>(cert.grid.size()));
        for (size_t q = 0; q < cert.grid.size(); ++q) {
          vals(static_cast<Eigen::Index>(q)) = r_vals[q](i, j);
          slopes(static_cast<Eigen::Index>(q)) = r_slopes[q](i, j);
        }
        comps.push_back(ScalarCurve::hermite(cert.grid, vals, slopes));
      }
    cert.R = MatrixCurve(n, n, std::move(comps));
  }

  std::vector<std::string> failures;

  // (i) Endpoint Lyapunov equations recovered from the design factors.
  for (int end = 0; end < 2; ++end) {
    const double s = (end == 0) ? mv.domain.s_alpha : mv.domain.s_omega;
    const OrbitSample smp = orbit_sample(sys, mv, op, gain, s);
    const MatrixXd w = gains.W.eval(s);
    const MatrixXd y = gains.Y.eval(s);
    const MatrixXd qhat = -detail::sym2(smp.A_s * w + smp.B_s * y);
    Eigen::SelfAdjointEigenSolver<MatrixXd> qe(detail::symmetrize(qhat),
                                               Eigen::EigenvaluesOnly);
    const double qmin = qe.eigenvalues().minCoeff();
    const MatrixXd r = w.inverse();
    const MatrixXd q_end = r * qhat * r;
    const MatrixXd residual =
        smp.A_cl.transpose() * r + r * smp.A_cl + q_end;
    const double abscissa = detail::spectral_abscissa(smp.A_cl);
    if (end == 0) {
      cert.ale_residual_alpha = residual;
      cert.qhat_min_eig_alpha = qmin;
      cert.boundary_abscissa_alpha = abscissa;
    } else {
      cert.ale_residual_omega = residual;
      cert.qhat_min_eig_omega = qmin;
      cert.boundary_abscissa_omega = abscissa;
    }
    const char* name = (end == 0) ? "alpha" : "omega";
    if (!(qmin > 0.0))
      failures.push_back(std::string("endpoint ") + name +
                         ": recovered Lyapunov right-hand side is not "
                         "positive definite (min eig " +
                         std::to_string(qmin) + ")");
    const double res_tol = 1e-8 * std::max(1.0, q_end.norm()) *
                           std::max(1.0, r.norm());
    if (!(residual.norm() <= res_tol))
      failures.push_back(std::string("endpoint ") + name +
                         ": Lyapunov recovery residual " +
                         std::to_string(residual.norm()));
    // (iv) endpoint closed-loop spectra.
    if (!(abscissa < -opt.hurwitz_tol))
      failures.push_back(std::string("endpoint ") + name +
                         ": closed-loop spectral abscissa " +
                         std::to_string(abscissa) + " is not negative");
  }

  // (ii) dense sweep of the inequality, raw scale.
  cert.dlmi_min_eigs.resize(static_cast<Eigen::Index>(cert.grid.size()));
  // (iii) projected Lyapunov identity on the same sweep.
  cert.mlde_residuals.resize(static_cast<Eigen::Index>(cert.grid.size()));
  double scale = 1.0;
  double mscale = 1.0;
  for (size_t g = 0; g < cert.grid.size(); ++g) {
    const double s = cert.grid[g];
    const OrbitSample smp = orbit_sample(sys, mv, op, gain, s);
    const double lam = gains.lambda.eval(s);
    const MatrixXd w = gains.W.eval(s);
    const MatrixXd wp = gains.W.derivative(s, 1);
    const MatrixXd y = gains.Y.eval(s);

    const MatrixXd t1 = detail::sym2(smp.A_perp * w);
    const MatrixXd t2 = detail::sym2(smp.B_perp * y);
    const MatrixXd t3 = lam * (smp.E_perp * w + w * smp.E_perp.transpose());
    const MatrixXd dlmi = smp.rho * wp - t1 - t2 - t3;
    Eigen::SelfAdjointEigenSolver<MatrixXd> de(detail::symmetrize(dlmi),
                                               Eigen::EigenvaluesOnly);
    cert.dlmi_min_eigs(static_cast<Eigen::Index>(g)) =
        de.eigenvalues().minCoeff();
    scale = std::max(scale, t1.norm() + t2.norm() + t3.norm() +
                                std::abs(smp.rho) * wp.norm());

    // Projected identity: with R = W^-1 and the recovered transverse
    // weight, the projected differential equation must hold algebraically.
    Eigen::PartialPivLU<MatrixXd> wlu(w);
    const MatrixXd r = wlu.solve(MatrixXd::Identity(n, n));
    const MatrixXd rp = -r * wp * r;
    const MatrixXd f_prime = mv.x_star.derivative(s, 2);
    const MatrixXd e_perp_prime =
        -f_prime * smp.P - smp.F * smp.P_prime;
    const MatrixXd t_mat =
        smp.A_cl.transpose() * smp.E_perp.transpose() * r +
        r * smp.E_perp * smp.A_cl +
        smp.rho * (rp - smp.P_prime.transpose() * smp.F.transpose() * r -
                   r * smp.F * smp.P_prime);
    const MatrixXd r_perp = smp.E_perp.transpose() * r * smp.E_perp;
    const MatrixXd r_perp_prime =
        e_perp_prime.transpose() * r * smp.E_perp +
        smp.E_perp.transpose() * rp * smp.E_perp +
        smp.E_perp.transpose() * r * e_perp_prime;
    const MatrixXd lhs =
        smp.E_perp.transpose() *
        (smp.A_cl.transpose() * r_perp + r_perp * smp.A_cl +
         smp.rho * r_perp_prime) *
        smp.E_perp;
    const MatrixXd rhs = smp.E_perp.transpose() * t_mat * smp.E_perp;
    cert.mlde_residuals(static_cast<Eigen::Index>(g)) = (lhs - rhs).norm();
    mscale = std::max(mscale, lhs.norm() + rhs.norm());
  }
  cert.dlmi_scale = scale;
  cert.mlde_scale = mscale;

  const double dlmi_worst = cert.dlmi_min_eigs.minCoeff();
  if (!(dlmi_worst >= -opt.dlmi_tol * scale)) {
    Eigen::Index at = 0;
    cert.dlmi_min_eigs.minCoeff(&at);
    failures.push_back(
        "inequality sweep dips to " + std::to_string(dlmi_worst) + " at s = " +
        std::to_string(cert.grid[static_cast<size_t>(at)]) +
        " (tolerance " + std::to_string(-opt.dlmi_tol * scale) + ")");
  }
  const double mlde_worst = cert.mlde_residuals.maxCoeff();
  if (!(mlde_worst <= opt.mlde_tol * mscale))
    failures.push_back("projected-identity residual reaches " +
                       std::to_string(mlde_worst) + " (tolerance " +
                       std::to_string(opt.mlde_tol * mscale) + ")");

  cert.passed = failures.empty();
  if (cert.passed) {
    cert.summary = "all certification checks passed";
  } else {
    std::ostringstream msg;
    msg << failures.size() << " certification check(s) failed:";
    for (const auto& f : failures) msg << "\n  - " << f;
    cert.summary = msg.str();
    if (opt.throw_on_failure) fail(Errc::certification_failed, cert.summary);
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Reduced-order reconstruction of the transverse Lyapunov matrix.
//
// With J(s) spanning the complement of the projection direction and
// propagated by J' = -F P' J, the matrix Rt = J^T R J obeys
//
//   rho Rt' = -At^T Rt - Rt At - Qt,     At = omega A_cl J,
//
// where omega holds the bottom rows of [F, J]^-1 and Qt is recovered from
// the design.  At both endpoints rho vanishes and the equation degenerates
// to an algebraic Lyapunov equation whose unique solution anchors Rt.  The
// equation is integrated BACKWARD from the omega endpoint: leaving an
// endpoint forward, perturbations grow like ((s - s_alpha)/h)^p with
// p = (mu_i + mu_j)/rho'(s_alpha) set by the reduced closed-loop decay
// rates mu, so a forward pass can amplify the seed error arbitrarily;
// integrating toward the alpha endpoint contracts instead.  The alpha
// anchor is still enforced: the backward solution must land on the unique
// alpha-endpoint algebraic solution, which is also where the comparison
// against J^T R J starts.

struct ReducedCheckOptions {
  int grid = 400;              // comparison grid
  double tol = 1e-4;           // relative mismatch tolerance
  double rho_floor_rel = 1e-3; // |rho| >= floor * max rho on the ODE leg
  double hurwitz_tol = 1e-10;  // endpoint reduced spectral-abscissa bound
  double series_fd_step_rel = 1e-5;  // FD step (relative) for endpoint slopes
  AdaptiveOptions ode;         // integrator settings
  bool throw_on_failure = true;
};

struct ReducedCheckReport {
  std::vector<double> grid;        // points where the comparison ran
  VectorXd mismatch;               // relative mismatch per comparison point
  double max_rel_mismatch = 0.0;
  double abscissa_alpha = 0.0;     // reduced closed-loop spectra at the ends
  double abscissa_omega = 0.0;
  MatrixXd r_perp_alpha;           // algebraic anchor at s_alpha
  MatrixXd r_perp_alpha_target;    // J^T R J at s_alpha
  double landing_error = 0.0;      // backward solution vs the alpha anchor
  bool ok = false;
};

namespace detail {

struct ReducedFrame {
  MatrixXd J;      // n x (n-1)
  MatrixXd omega;  // (n-1) x n
  MatrixXd At;     // (n-1) x (n-1)
};

// Recovered transverse weight for the reduced equation; T is the same
// matrix used by the projected-identity check.
inline MatrixXd reduced_weight(const OrbitSample& smp, const MatrixXd& w,
                               const MatrixXd& wp, const MatrixXd& j_mat) {
  Eigen::PartialPivLU<MatrixXd> wlu(w);
  const Eigen::Index n = w.rows();
  const MatrixXd r = wlu.solve(MatrixXd::Identity(n, n));
  const MatrixXd rp = -r * wp * r;
  const MatrixXd t_mat =
      smp.A_cl.transpose() * smp.E_perp.transpose() * r +
      r * smp.E_perp * smp.A_cl +
      smp.rho * (rp - smp.P_prime.transpose() * smp.F.transpose() * r -
                 r * smp.F * smp.P_prime);
  return -(j_mat.transpose() * t_mat * j_mat);
}

inline ReducedFrame reduced_frame(const OrbitSample& smp,
                                  const MatrixXd& j_mat) {
  const Eigen::Index n = j_mat.rows();
  ReducedFrame f;
  f.J = j_mat;
  MatrixXd big(n, n);
  big.col(0) = smp.F;
  big.rightCols(n - 1) = j_mat;
  f.omega = big.inverse().bottomRows(n - 1);
  f.At = f.omega * smp.A_cl * f.J;
  return f;
}

}  // namespace detail

inline ReducedCheckReport reduced_uniqueness_check(
    const ControlAffineSystem& sys, const Maneuver& mv,
    const ProjectionOperator& op, const GainSchedule& gains,
    const MatrixCurve& r_curve, const ReducedCheckOptions& opt = {}) {
  const int n = mv.n();
  const int nr = n - 1;
  require(nr >= 1, Errc::dimension_mismatch,
          "reduced check needs at least two states");
  require(r_curve.rows() == n && r_curve.cols() == n, Errc::dimension_mismatch,
          "transverse weight curve shape");
  const GainMap gain = gains.exact_gain_map();
  ReducedCheckReport rep;

  auto sample = [&](double s) { return orbit_sample(sys, mv, op, gain, s); };
  auto j_rhs_mat = [&](double s, const MatrixXd& j_mat) {
    const RowVectorXd pp = op.hessian_term(s);
    return (-(mv.F(s)) * (pp * j_mat)).eval();
  };

  // Initial complement frame at s_alpha.
  const double sa = mv.domain.s_alpha;
  const double sw = mv.domain.s_omega;
  const OrbitSample smp_a = sample(sa);
  MatrixXd j_alpha = detail::orthogonal_complement(smp_a.P);

  // Propagate J forward once to obtain the frame at the omega endpoint.
  auto pack_j = [&](const MatrixXd& j_mat) {
    return VectorXd(Eigen::Map<const VectorXd>(j_mat.data(), n * nr));
  };
  auto unpack_j = [&](const VectorXd& v) {
    return MatrixXd(Eigen::Map<const MatrixXd>(v.data(), n, nr));
  };
  OdeRhs j_flow = [&](double s, const VectorXd& v) {
    return pack_j(j_rhs_mat(s, unpack_j(v)));
  };
  AdaptiveOptions ode_opt = opt.ode;
  MatrixXd j_omega = unpack_j(integrate_dopri(j_flow, sa, pack_j(j_alpha), sw,
                                              ode_opt));

  // Reduced frames and algebraic anchors at both endpoints.
  const OrbitSample smp_w = sample(sw);
  const detail::ReducedFrame frame_a = detail::reduced_frame(smp_a, j_alpha);
  const detail::ReducedFrame frame_w = detail::reduced_frame(smp_w, j_omega);
  rep.abscissa_alpha = detail::spectral_abscissa(frame_a.At);
  rep.abscissa_omega = detail::spectral_abscissa(frame_w.At);
  std::ostringstream problems;
  if (!(rep.abscissa_alpha < -opt.hurwitz_tol))
    problems << "reduced closed loop at s_alpha has spectral abscissa "
             << rep.abscissa_alpha << "; ";
  if (!(rep.abscissa_omega < -opt.hurwitz_tol))
    problems << "reduced closed loop at s_omega has spectral abscissa "
             << rep.abscissa_omega << "; ";
  if (problems.tellp() > 0)
    fail(Errc::reduced_not_hurwitz, problems.str());

  auto qt_at = [&](double s, const MatrixXd& j_mat) {
    const OrbitSample smp = sample(s);
    return detail::reduced_weight(smp, gains.W.eval(s),
                                  gains.W.derivative(s, 1), j_mat);
  };
  rep.r_perp_alpha = ale_solve(frame_a.At, qt_at(sa, j_alpha));
  const MatrixXd rt_omega = ale_solve(frame_w.At, qt_at(sw, j_omega));
  rep.r_perp_alpha_target =
      j_alpha.transpose() * r_curve.eval(sa) * j_alpha;

  // Comparison grid and the rho floor delimiting the regular ODE leg.
  rep.grid = linspace(mv.domain, opt.grid);
  double max_rho = 0.0;
  for (double s : rep.grid)
    max_rho = std::max(max_rho, std::abs(mv.rho.eval(s)));
  const double rho_floor = opt.rho_floor_rel * max_rho;

  // Series seed just inside the omega endpoint: Rt(sw - h) from the anchor
  // value and the slope given by the differentiated equation, a Lyapunov
  // system shifted by rho'(s_omega)/2.
  double s_end = sw;
  for (auto it = rep.grid.rbegin(); it != rep.grid.rend(); ++it)
    if (std::abs(mv.rho.eval(*it)) >= rho_floor) {
      s_end = *it;
      break;
    }
  require(s_end < sw && s_end > sa, Errc::assumption_violated,
          "speed profile never clears the endpoint floor");

  const double nu_w = mv.rho.derivative(sw, 1);
  MatrixXd rt_slope_omega;
  {
    const double h = opt.series_fd_step_rel * mv.domain.length();
    // One-sided difference of At and Qt toward the interior, with J moved
    // consistently along its own flow.
    MatrixXd j_h = unpack_j(
        integrate_dopri(j_flow, sw, pack_j(j_omega), sw - h, ode_opt));
    const detail::ReducedFrame frame_h =
        detail::reduced_frame(sample(sw - h), j_h);
    const MatrixXd at_prime = (frame_w.At - frame_h.At) / h;
    const MatrixXd qt_prime = (qt_at(sw, j_omega) - qt_at(sw - h, j_h)) / h;
    const MatrixXd shifted =
        frame_w.At + 0.5 * nu_w * MatrixXd::Identity(nr, nr);
    const MatrixXd rhs_mat = -(at_prime.transpose() * rt_omega +
                               rt_omega * at_prime + qt_prime);
    rt_slope_omega = detail::ale_kron(shifted, -rhs_mat);
  }
  const double h_end = sw - s_end;
  MatrixXd rt_seed = rt_omega - h_end * rt_slope_omega;

  // Backward leg: co-integrate J and Rt from s_end toward the alpha side.
  double s_begin = sa;
  for (double s : rep.grid)
    if (std::abs(mv.rho.eval(s)) >= rho_floor) {
      s_begin = s;
      break;
    }
  MatrixXd j_end = unpack_j(
      integrate_dopri(j_flow, sw, pack_j(j_omega), s_end, ode_opt));

  auto pack_state = [&](const MatrixXd& j_mat, const MatrixXd& rt) {
    VectorXd v(n * nr + nr * nr);
    v.head(n * nr) = Eigen::Map<const VectorXd>(j_mat.data(), n * nr);
    v.tail(nr * nr) = Eigen::Map<const VectorXd>(rt.data(), nr * nr);
    return v;
  };
  auto unpack_state = [&](const VectorXd& v) {
    return std::pair<MatrixXd, MatrixXd>(
        Eigen::Map<const MatrixXd>(v.data(), n, nr),
        Eigen::Map<const MatrixXd>(v.data() + n * nr, nr, nr));
  };
  OdeRhs coupled = [&](double s, const VectorXd& v) {
    const auto [j_mat, rt] = unpack_state(v);
    const OrbitSample smp = sample(s);
    const detail::ReducedFrame fr = detail::reduced_frame(smp, j_mat);
    const MatrixXd qt = detail::reduced_weight(
        smp, gains.W.eval(s), gains.W.derivative(s, 1), j_mat);
    const MatrixXd rt_prime =
        (-(fr.At.transpose() * rt) - rt * fr.At - qt) / smp.rho;
    VectorXd out(n * nr + nr * nr);
    const MatrixXd jp = j_rhs_mat(s, j_mat);
    out.head(n * nr) = Eigen::Map<const VectorXd>(jp.data(), n * nr);
    out.tail(nr * nr) = Eigen::Map<const VectorXd>(rt_prime.data(), nr * nr);
    return out;
  };

  // Walk the grid backward, comparing at each point inside the floor.
  std::vector<double> compare_points;
  std::vector<double> mismatches;
  auto relative_mismatch = [&](const MatrixXd& got, const MatrixXd& want) {
    return (got - want).norm() / std::max(1.0, want.norm());
  };

  // The iterate at s_end is the seed itself: its distance to the target only
  // measures the first-order series truncation, so the comparison starts one
  // step inside, after genuine integration has occurred.
  VectorXd state = pack_state(j_end, rt_seed);
  double s_cur = s_end;
  for (auto it = rep.grid.rbegin(); it != rep.grid.rend(); ++it) {
    const double s = *it;
    if (s >= s_end || s < s_begin) continue;
    if (s < s_cur)
      state = integrate_dopri(coupled, s_cur, state, s, ode_opt);
    s_cur = s;
    const auto [j_mat, rt] = unpack_state(state);
    const MatrixXd target = j_mat.transpose() * r_curve.eval(s) * j_mat;
    compare_points.push_back(s);
    mismatches.push_back(relative_mismatch(rt, target));
  }

  // Landing at the alpha side: continue the backward solution to a point a
  // short series step away from s_alpha (step sizes shrink with |rho|, so
  // this leg is cheap), then compare with the algebraic anchor extended by
  // its own first-order series (mirror of the omega seed). Comparing close
  // to the endpoint keeps the series truncation far below the tolerance.
  {
    const double h_land = opt.series_fd_step_rel * mv.domain.length();
    const double s_land = sa + h_land;
    if (s_land < s_cur) {
      state = integrate_dopri(coupled, s_cur, state, s_land, ode_opt);
      s_cur = s_land;
    }
    const auto [j_mat, rt] = unpack_state(state);
    const double h0 = s_cur - sa;
    const double nu_a = mv.rho.derivative(sa, 1);
    MatrixXd rt_slope_alpha;
    {
      const double h = opt.series_fd_step_rel * mv.domain.length();
      MatrixXd j_h = unpack_j(
          integrate_dopri(j_flow, sa, pack_j(j_alpha), sa + h, ode_opt));
      const detail::ReducedFrame frame_h =
          detail::reduced_frame(sample(sa + h), j_h);
      const MatrixXd at_prime = (frame_h.At - frame_a.At) / h;
      const MatrixXd qt_prime =
          (qt_at(sa + h, j_h) - qt_at(sa, j_alpha)) / h;
      const MatrixXd shifted =
          frame_a.At + 0.5 * nu_a * MatrixXd::Identity(nr, nr);
      const MatrixXd rhs_mat = -(at_prime.transpose() * rep.r_perp_alpha +
                                 rep.r_perp_alpha * at_prime + qt_prime);
      rt_slope_alpha = detail::ale_kron(shifted, -rhs_mat);
    }
    const MatrixXd anchor_extrap = rep.r_perp_alpha + h0 * rt_slope_alpha;
    rep.landing_error = relative_mismatch(rt, anchor_extrap);
  }

  // Also compare the alpha anchor itself against the provided curve.
  compare_points.push_back(sa);
  mismatches.push_back(
      relative_mismatch(rep.r_perp_alpha, rep.r_perp_alpha_target));

  rep.grid = compare_points;
  rep.mismatch = Eigen::Map<const VectorXd>(
      mismatches.data(), static_cast<Eigen::Index>(mismatches.size()));
  rep.max_rel_mismatch =
      std::max(rep.mismatch.maxCoeff(), rep.landing_error);
  rep.ok = rep.max_rel_mismatch <= opt.tol;
  if (!rep.ok && opt.throw_on_failure)
    fail(Errc::mismatch_beyond_tolerance,
         "reduced reconstruction deviates by " +
             std::to_string(rep.max_rel_mismatch) +
             " (tolerance " + std::to_string(opt.tol) + ")");
  return rep;
}

// ---------------------------------------------------------------------------
// Full-order Lyapunov differential equation residual (informational).

inline double hauser_lde_residual(
    const std::function<MatrixXd(double)>& a_cl_of,
    const std::function<double(double)>& rho_of, const MatrixCurve& r_curve,
    const MatrixCurve& q_curve, const std::vector<double>& grid) {
  require(!grid.empty(), Errc::config_error, "empty residual grid");
  double worst = 0.0;
  for (double s : grid) {
    const MatrixXd r = r_curve.eval(s);
    const MatrixXd rp = r_curve.derivative(s, 1);
    const MatrixXd a = a_cl_of(s);
    const MatrixXd q = q_curve.eval(s);
    worst = std::max(
        worst, (rho_of(s) * rp + a.transpose() * r + r * a + q).norm());
  }
  return worst;
}

inline double hauser_lde_residual(const ControlAffineSystem& sys,
                                  const Maneuver& mv,
                                  const ProjectionOperator& op,
                                  const GainSchedule& gains,
                                  const MatrixCurve& r_curve,
                                  const MatrixCurve& q_curve,
                                  int grid_size = 200) {
  const GainMap gain = gains.exact_gain_map();
  auto a_cl_of = [&](double s) {
    return orbit_sample(sys, mv, op, gain, s).A_cl;
  };
  auto rho_of = [&](double s) { return mv.rho.eval(s); };
  return hauser_lde_residual(a_cl_of, rho_of, r_curve, q_curve,
                             linspace(mv.domain, grid_size));
}

}  // namespace ptpstab
