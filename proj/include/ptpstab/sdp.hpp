#pragma once

// Minimal semidefinite-programming layer for small dense-block problems:
//
//   minimize    objective . x        (feasibility problem when omitted)
//   subject to  sum_i terms(e) x_i = rhs(e)          for each equality e,
//               G_b(x) := C_b + sum_i x_i M_{b,i}  positive semidefinite
//                                                    for each block b.
//
// Blocks are symmetric and stored sparsely: every entry lists an upper
// triangle position (row <= col) whose value is mirrored across the
// diagonal.  Listing the same position twice accumulates.
//
// The reference solver is a two-phase log-barrier interior-point method:
// equalities are eliminated through a rank-revealing QR (particular
// solution + nullspace basis), phase 1 path-follows the auxiliary problem
//   minimize t  subject to  G_b(y) + t I >= 0,
// stopping as soon as t clears a comfortable negative margin (or proving
// infeasibility, reporting the most violated block, when the auxiliary
// optimum stays nonnegative), and phase 2 follows the central path for the
// linear objective from the interior point so obtained.  It targets the
// problem sizes produced by the gain-synthesis transcription (a few
// hundred blocks of dimension <= 8 and around a hundred variables) and is
// not a general-purpose SDP code.
//
// Problems serialize to a documented line-oriented sparse text format (see
// write_sdp below) so external solvers can be used offline.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"

namespace ptpstab {

// One sparse entry of a symmetric matrix-valued affine map.  `var` selects
// the decision variable the entry multiplies; var = -1 marks the constant
// term.  Positions must satisfy row <= col; off-diagonal values are mirrored.
struct SdpEntry {
  int var = -1;
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct SdpBlock {
  int dim = 0;
  std::vector<SdpEntry> entries;  // constant (var=-1) and linear terms mixed
  std::string label;              // diagnostic tag, single token

  void add_constant(int r, int c, double v) { push(-1, r, c, v); }
  void add_linear(int var, int r, int c, double v) { push(var, r, c, v); }

  // Adds the upper triangle of a dense symmetric contribution, dropping
  // exact zeros.
  void add_constant_matrix(const MatrixXd& m) { scatter(-1, m); }
  void add_linear_matrix(int var, const MatrixXd& m) { scatter(var, m); }

  MatrixXd value(const VectorXd& x) const {
    MatrixXd g = MatrixXd::Zero(dim, dim);
    for (const auto& e : entries) {
      const double w = (e.var < 0) ? e.value : e.value * x(e.var);
      g(e.row, e.col) += w;
      if (e.row != e.col) g(e.col, e.row) += w;
    }
    return g;
  }

 private:
  void push(int var, int r, int c, double v) {
    require(r >= 0 && c >= 0 && r < dim && c < dim, Errc::dimension_mismatch,
            "block entry outside the block");
    if (r > c) std::swap(r, c);
    if (v != 0.0) entries.push_back({var, r, c, v});
  }
  void scatter(int var, const MatrixXd& m) {
    require(m.rows() == dim && m.cols() == dim, Errc::dimension_mismatch,
            "dense contribution does not match the block size");
    for (int r = 0; r < dim; ++r)
      for (int c = r; c < dim; ++c) {
        const double v = (r == c) ? m(r, c) : 0.5 * (m(r, c) + m(c, r));
        if (v != 0.0) entries.push_back({var, r, c, v});
      }
  }
};

struct SdpEqualityTerm {
  int var = 0;
  double value = 0.0;
};

struct SdpEquality {
  std::vector<SdpEqualityTerm> terms;
  double rhs = 0.0;
  std::string label;
};

struct SdpProblem {
  int n_vars = 0;
  VectorXd objective;  // size 0 or n_vars; all-zero means pure feasibility
  std::vector<SdpBlock> blocks;
  std::vector<SdpEquality> equalities;

  bool has_objective() const {
    return objective.size() != 0 && objective.cwiseAbs().maxCoeff() > 0.0;
  }

  void validate() const {
    require(n_vars >= 0, Errc::config_error, "negative variable count");
    require(objective.size() == 0 || objective.size() == n_vars,
            Errc::dimension_mismatch, "objective length");
    require(objective.size() == 0 || all_finite(objective),
            Errc::non_finite_entries, "objective");
    require(!blocks.empty(), Errc::config_error,
            "a problem needs at least one cone block");
    for (const auto& b : blocks) {
      require(b.dim >= 1, Errc::dimension_mismatch, "empty cone block");
      for (const auto& e : b.entries) {
        require(e.row >= 0 && e.col >= e.row && e.col < b.dim,
                Errc::dimension_mismatch, "block entry position");
        require(e.var >= -1 && e.var < n_vars, Errc::dimension_mismatch,
                "block entry variable index");
        require(std::isfinite(e.value), Errc::non_finite_entries,
                "block entry value");
      }
    }
    for (const auto& eq : equalities) {
      require(std::isfinite(eq.rhs), Errc::non_finite_entries, "equality rhs");
      for (const auto& t : eq.terms) {
        require(t.var >= 0 && t.var < n_vars, Errc::dimension_mismatch,
                "equality variable index");
        require(std::isfinite(t.value), Errc::non_finite_entries,
                "equality coefficient");
      }
    }
  }
};

struct SdpSolution {
  VectorXd x;
  double objective_value = 0.0;
  double min_block_eig = 0.0;  // over all blocks at the returned point
  int newton_steps = 0;
};

struct SdpOptions {
  double equality_tol = 1e-8;       // relative consistency of the equalities
  double feasibility_margin = 1e-9; // phase-1 margin below which => infeasible
  double phase1_target = 1e-3;      // stop phase 1 once the margin exceeds this
  double gap_tol = 1e-9;            // relative barrier-gap stopping criterion
  double mu = 10.0;                 // barrier parameter multiplier
  int max_newton = 4000;            // total Newton-step budget
  int inner_newton_cap = 80;        // per-centering step cap
  double t_cap = 1e6;               // bound on the phase-1 slack variable
  double pullback_threshold = 1e5;  // iterate norm that triggers a rescale
};

using SdpBackend = std::function<SdpSolution(const SdpProblem&)>;

namespace detail {

// Dense per-block data with the equality nullspace already composed in.
struct ReducedBlock {
  int dim = 0;
  MatrixXd base;                // value at the particular solution
  std::vector<MatrixXd> maps;   // one symmetric map per reduced variable
};

inline double min_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Barrier state for one Newton-centering problem over reduced variables y:
//   minimize  tau * (obj . y) - sum_b log det(base_b + sum_j y_j maps_bj)
// Maps may include an extra trailing variable (the phase-1 margin).
class BarrierProblem {
 public:
  BarrierProblem(const std::vector<ReducedBlock>* blocks, VectorXd obj)
      : blocks_(blocks), obj_(std::move(obj)) {}

  int dim() const { return static_cast<int>(obj_.size()); }

  bool feasible(const VectorXd& y) const {
    for (const auto& b : *blocks_) {
      Eigen::LLT<MatrixXd> llt(value(b, y));
      if (llt.info() != Eigen::Success) return false;
    }
    return true;
  }

  double barrier_value(const VectorXd& y, double tau) const {
    double f = tau * obj_.dot(y);
    for (const auto& b : *blocks_) {
      Eigen::LLT<MatrixXd> llt(value(b, y));
      if (llt.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
      const MatrixXd& l = llt.matrixLLT();
      double logdet = 0.0;
      for (int i = 0; i < b.dim; ++i) logdet += std::log(l(i, i));
      f -= 2.0 * logdet;
    }
    return f;
  }

  // One centering run; stops at the decrement tolerance, after inner_cap
  // steps, or when the optional predicate reports the iterate is good
  // enough for the caller.  Returns true when the iterate is as centered as
  // it is going to get at this barrier weight (decrement tolerance reached,
  // stop predicate fired, or line search stalled); false when it ran out of
  // steps first and the caller should keep centering before trusting gap
  // estimates.
  bool center(VectorXd& y, double tau, int& budget, int inner_cap,
              const std::function<bool(const VectorXd&)>& stop = {}) const {
    const int nv = dim();
    if (stop && stop(y)) return true;
    // Cap trial steps relative to the entry scale: a Newton step computed in
    // a nearly flat barrier valley can be many orders of magnitude too long
    // for the backtracking budget to rein in.
    const double step_cap = 30.0 * (1.0 + y.norm());
    int inner = 0;
    while (budget > 0 && inner < inner_cap) {
      VectorXd g = tau * obj_;
      MatrixXd h = MatrixXd::Zero(nv, nv);
      std::vector<MatrixXd> v(static_cast<size_t>(nv));
      for (const auto& b : *blocks_) {
        Eigen::LLT<MatrixXd> llt(value(b, y));
        require(llt.info() == Eigen::Success, Errc::backend_failure,
                "interior-point iterate left the cone");
        for (int j = 0; j < nv; ++j) {
          // v_j = L^-1 M_j L^-T, so grad = -tr v_j, hess = <v_j, v_k>.
          MatrixXd t = llt.matrixL().solve(b.maps[static_cast<size_t>(j)]);
          v[static_cast<size_t>(j)] =
              llt.matrixL().solve(t.transpose()).transpose();
          g(j) -= v[static_cast<size_t>(j)].trace();
        }
        for (int j = 0; j < nv; ++j)
          for (int k = j; k < nv; ++k) {
            const double hv = (v[static_cast<size_t>(j)].array() *
                               v[static_cast<size_t>(k)].array())
                                  .sum();
            h(j, k) += hv;
            if (j != k) h(k, j) += hv;
          }
      }
      // Relative per-coordinate ridge: an absolute shift would drown the
      // curvature of shallow directions whenever another direction is stiff,
      // crippling Newton exactly along the valleys it has to descend.
      h.diagonal() += (1e-12 * h.diagonal().cwiseAbs()).eval();
      h.diagonal().array() += 1e-300;
      Eigen::LDLT<MatrixXd> ldlt(h);
      require(ldlt.info() == Eigen::Success, Errc::backend_failure,
              "Newton system factorization failed");
      VectorXd step = ldlt.solve(-g);
      const double decrement_sq = -g.dot(step);
      if (!std::isfinite(decrement_sq))
        fail(Errc::backend_failure, "non-finite Newton decrement");
      if (decrement_sq <= 2e-9 * (1.0 + std::abs(tau))) return true;

      const double f0 = barrier_value(y, tau);
      double alpha = std::min(1.0, step_cap / std::max(step.norm(), 1e-300));
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        VectorXd trial = y + alpha * step;
        const double ft = barrier_value(trial, tau);
        if (ft < f0 - 1e-4 * alpha * decrement_sq) {
          y = std::move(trial);
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      --budget;
      ++inner;
#ifdef PTPSTAB_SDP_DEBUG
      if (std::getenv("PTPSTAB_SDP_TRACE") || budget % 25 == 0)
        std::fprintf(stderr,
                     "[sdp]   center tau=%g budget=%d dec2=%.3e alpha=%g "
                     "f0=%.6e moved=%d fnew=%.6e |step|=%.3e\n",
                     tau, budget, decrement_sq, alpha, f0, moved ? 1 : 0,
                     moved ? barrier_value(y, tau) : f0, step.norm());
#endif
      if (!moved) {
        // A stall near the decrement tolerance is an acceptable center; a
        // stall with a large decrement is a numerical dead end the caller
        // must not mistake for one.
        return decrement_sq <= 1.0;
      }
      if (stop && stop(y)) return true;
    }
    return false;
  }

 private:
  static MatrixXd value(const ReducedBlock& b, const VectorXd& y) {
    MatrixXd g = b.base;
    for (size_t j = 0; j < b.maps.size(); ++j) g += y(static_cast<Eigen::Index>(j)) * b.maps[j];
    return g;
  }

  const std::vector<ReducedBlock>* blocks_;
  VectorXd obj_;
};

}  // namespace detail

inline SdpSolution solve_sdp_reference(const SdpProblem& p,
                                       const SdpOptions& opt = {}) {
  p.validate();
  const int n = p.n_vars;

  // ---- eliminate the equality constraints -------------------------------
  const int n_eq = static_cast<int>(p.equalities.size());
  VectorXd x_part = VectorXd::Zero(n);
  MatrixXd z;  // nullspace basis, n x nv
  if (n_eq > 0 && n > 0) {
    MatrixXd e = MatrixXd::Zero(n_eq, n);
    VectorXd rhs(n_eq);
    for (int r = 0; r < n_eq; ++r) {
      const auto& eq = p.equalities[static_cast<size_t>(r)];
      for (const auto& t : eq.terms) e(r, t.var) += t.value;
      rhs(r) = eq.rhs;
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(e);
    x_part = cod.solve(rhs);
    const double mismatch = (e * x_part - rhs).cwiseAbs().maxCoeff();
    if (mismatch > opt.equality_tol * (1.0 + rhs.cwiseAbs().maxCoeff()))
      fail(Errc::infeasible, "equality constraints are inconsistent (residual " +
                                 std::to_string(mismatch) + ")");
    Eigen::ColPivHouseholderQR<MatrixXd> qrt(e.transpose());
    const int rank = static_cast<int>(qrt.rank());
    MatrixXd q = qrt.householderQ();
    z = q.rightCols(n - rank);
    if (z.cols() > 0) {
      const double leak = (e * z).cwiseAbs().maxCoeff();
      require(leak <= 1e-9 * (1.0 + e.cwiseAbs().maxCoeff()),
              Errc::backend_failure, "equality nullspace is inaccurate");
    }
  } else {
    z = MatrixXd::Identity(n, n);
  }
  const int nv = static_cast<int>(z.cols());

  // ---- compose per-block affine maps with the nullspace -----------------
  std::vector<detail::ReducedBlock> blocks(p.blocks.size());
  for (size_t bi = 0; bi < p.blocks.size(); ++bi) {
    const auto& src = p.blocks[bi];
    auto& dst = blocks[bi];
    const int d = src.dim;
    dst.dim = d;
    dst.base = MatrixXd::Zero(d, d);
    // Stack the per-original-variable maps as columns of (d*d) x n, then one
    // dense product composes the nullspace basis.
    MatrixXd stacked = MatrixXd::Zero(d * d, n);
    for (const auto& en : src.entries) {
      auto put = [&](int r, int c, double v) {
        if (en.var < 0)
          dst.base(r, c) += v;
        else
          stacked(r * d + c, en.var) += v;
      };
      put(en.row, en.col, en.value);
      if (en.row != en.col) put(en.col, en.row, en.value);
    }
    // Shift the base to the particular solution of the equalities.
    if (n > 0) {
      VectorXd at_part = stacked * x_part;
      dst.base += Eigen::Map<MatrixXd>(at_part.data(), d, d);
      MatrixXd reduced = stacked * z;  // (d*d) x nv
      dst.maps.resize(static_cast<size_t>(nv));
      for (int j = 0; j < nv; ++j) {
        MatrixXd m = Eigen::Map<MatrixXd>(reduced.col(j).data(), d, d);
        dst.maps[static_cast<size_t>(j)] = 0.5 * (m + m.transpose());
      }
    } else {
      dst.maps.clear();
    }
    dst.base = 0.5 * (dst.base + dst.base.transpose()).eval();
  }

  auto assemble_solution = [&](const VectorXd& y, int steps) {
    SdpSolution sol;
    sol.x = x_part + z * y;
    sol.objective_value =
        p.objective.size() ? p.objective.dot(sol.x) : 0.0;
    sol.min_block_eig = std::numeric_limits<double>::infinity();
    for (const auto& b : p.blocks)
      sol.min_block_eig = std::min(sol.min_block_eig,
                                   detail::min_eig(b.value(sol.x)));
    sol.newton_steps = steps;
    return sol;
  };

  auto most_violated = [&](const VectorXd& y) {
    const VectorXd x = x_part + z * y;
    int worst = 0;
    double worst_eig = std::numeric_limits<double>::infinity();
    for (size_t bi = 0; bi < p.blocks.size(); ++bi) {
      const double ev = detail::min_eig(p.blocks[bi].value(x));
      if (ev < worst_eig) {
        worst_eig = ev;
        worst = static_cast<int>(bi);
      }
    }
    std::ostringstream msg;
    msg << "no strictly feasible point found; most violated block " << worst;
    if (!p.blocks[static_cast<size_t>(worst)].label.empty())
      msg << " (" << p.blocks[static_cast<size_t>(worst)].label << ")";
    msg << " has minimum eigenvalue " << worst_eig;
    fail(Errc::infeasible, msg.str());
  };

  int budget = opt.max_newton;
  int used = 0;

  // Degenerate case: the equalities pin every variable.
  if (nv == 0) {
    SdpSolution sol = assemble_solution(VectorXd::Zero(0), 0);
    if (sol.min_block_eig < -opt.feasibility_margin)
      most_violated(VectorXd::Zero(0));
    return sol;
  }

  // Shared path-following driver: minimizes obj over the given blocks from
  // a strictly feasible start.  Returns true when `stop` fired (early
  // success), false when the barrier gap converged instead.
  // hold_tau_until_centered keeps the barrier weight fixed while centering
  // is still making progress; phase 1 must not use it (its slack variable
  // sits in a log-flat valley at small weights, where exact centering is
  // hopeless and pointless), while phase 2 needs it so the iterate cannot
  // fall behind an escalating schedule.  Termination through the gap bound
  // always requires a centered iterate.
  // The barrier prefers arbitrarily large iterates whenever growing the
  // design helps every cone block, so between centering rounds an inflated
  // iterate is pulled back along its own ray to the smallest scale that
  // still clears the blocks comfortably (the minimum block eigenvalue is
  // concave along the ray, so bisection is sound).
  auto pull_back = [&](const std::vector<detail::ReducedBlock>& blks,
                       VectorXd& y) {
    if (y.norm() <= opt.pullback_threshold) return;
    const auto margin = [&](double c) {
      double worst = std::numeric_limits<double>::infinity();
      for (const auto& b : blks) {
        MatrixXd g = b.base;
        for (size_t j = 0; j < b.maps.size(); ++j)
          g += (c * y(static_cast<Eigen::Index>(j))) * b.maps[j];
        worst = std::min(worst, detail::min_eig(g));
      }
      return worst;
    };
    const double have = margin(1.0);
    const double want = std::min(0.5 * have, opt.phase1_target);
    if (!(have > 0.0)) return;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60 && hi - lo > 0.01 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (margin(mid) >= want ? hi : lo) = mid;
    }
#ifdef PTPSTAB_SDP_DEBUG
    std::fprintf(stderr, "[sdp] pull-back |y|=%.3e -> %.3e (margin %.3e)\n",
                 y.norm(), hi * y.norm(), margin(hi));
#endif
    y *= hi;
  };

  auto follow_path = [&](const detail::BarrierProblem& prob,
                         const std::vector<detail::ReducedBlock>& blks,
                         VectorXd& y, double obj_offset,
                         const std::function<bool(const VectorXd&)>& stop,
                         const VectorXd& obj_vec, bool hold_tau_until_centered,
                         const char* phase_name) -> bool {
    double total_dim = 0.0;
    for (const auto& b : blks) total_dim += b.dim;
    double tau = 1.0;
    while (budget > 0) {
      pull_back(blks, y);
      const int before = budget;
      const bool centered =
          prob.center(y, tau, budget, opt.inner_newton_cap, stop);
      used += before - budget;
#ifdef PTPSTAB_SDP_DEBUG
      std::fprintf(stderr, "[sdp] %s tau=%g steps=%d centered=%d obj=%g gap=%g\n",
                   phase_name, tau, before - budget, centered ? 1 : 0,
                   obj_vec.dot(y) + obj_offset, total_dim / tau);
#endif
      if (stop && stop(y)) return true;
      if (centered) {
        const double obj_now = std::abs(obj_vec.dot(y) + obj_offset);
        if (total_dim / tau <= opt.gap_tol * (1.0 + obj_now)) return false;
      }
      if (centered || !hold_tau_until_centered) tau *= opt.mu;
    }
    fail(Errc::backend_failure,
         std::string(phase_name) + " iteration budget exhausted");
  };

  // ---- phase 1: auxiliary problem  min t  s.t.  G_b(y) + t I >= 0 -------
  // The extra scalar block keeps t bounded below so the auxiliary problem
  // always has a finite central path.
  std::vector<detail::ReducedBlock> aux = blocks;
  for (auto& b : aux) b.maps.push_back(MatrixXd::Identity(b.dim, b.dim));
  {
    detail::ReducedBlock floor_block;
    floor_block.dim = 1;
    floor_block.base = MatrixXd::Constant(1, 1, opt.t_cap);
    floor_block.maps.assign(static_cast<size_t>(nv), MatrixXd::Zero(1, 1));
    floor_block.maps.push_back(MatrixXd::Constant(1, 1, 1.0));
    aux.push_back(std::move(floor_block));
  }
  VectorXd obj1 = VectorXd::Zero(nv + 1);
  obj1(nv) = 1.0;  // minimize the slack
  detail::BarrierProblem phase1(&aux, obj1);

  VectorXd y1 = VectorXd::Zero(nv + 1);
  {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks)
      worst = std::min(worst, detail::min_eig(b.base));
    y1(nv) = -worst + std::max(1.0, 0.1 * std::abs(worst));
  }
  require(phase1.feasible(y1), Errc::backend_failure,
          "phase-1 initialization is not strictly feasible");

  const auto slack_cleared = [&](const VectorXd& yy) {
    return yy(nv) <= -opt.phase1_target;
  };
  const bool interior_found =
      follow_path(phase1, aux, y1, 0.0, slack_cleared, obj1, false, "phase1");
  if (!interior_found && -y1(nv) <= opt.feasibility_margin)
    most_violated(y1.head(nv));

  VectorXd y = y1.head(nv);
  if (!p.has_objective()) return assemble_solution(y, used);

  // ---- phase 2: follow the central path for the linear objective --------
  VectorXd cz = z.transpose() * p.objective;
  detail::BarrierProblem phase2(&blocks, cz);
  require(phase2.feasible(y), Errc::backend_failure,
          "phase-2 start lost strict feasibility");
  follow_path(phase2, blocks, y, p.objective.dot(x_part), {}, cz, true,
              "phase2");
  return assemble_solution(y, used);
}

inline SdpBackend reference_backend(SdpOptions opt = {}) {
  return [opt](const SdpProblem& p) { return solve_sdp_reference(p, opt); };
}

// Runs the backend (reference one when empty), translating unexpected
// backend exceptions into BackendFailure.
inline SdpSolution solve_sdp(const SdpProblem& p, const SdpBackend& backend = {}) {
  try {
    return backend ? backend(p) : solve_sdp_reference(p);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::backend_failure, std::string("backend threw: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sparse text serialization.
//
// Line-oriented, whitespace-separated, 0-based indices, '#' starts a comment:
//
//   ptpstab-sdp 1                   header with format version
//   vars <n>                        variable count
//   objective <nnz>                 then nnz lines: <var> <value>
//   equality <nnz> <rhs> <label>    then nnz lines: <var> <coeff>
//   block <dim> <nc> <nl> <label>   then nc lines:  <row> <col> <value>
//                                   and  nl lines:  <var> <row> <col> <value>
//
// Block entries describe the upper triangle (row <= col) of symmetric
// matrices; off-diagonal values are mirrored.  Labels are single tokens.

namespace detail {
inline std::string sanitize_label(const std::string& s) {
  if (s.empty()) return "_";
  std::string out = s;
  for (char& c : out)
    if (std::isspace(static_cast<unsigned char>(c))) c = '_';
  return out;
}
}  // namespace detail

inline void write_sdp(const SdpProblem& p, std::ostream& os) {
  p.validate();
  os.precision(17);
  os << "ptpstab-sdp 1\n";
  os << "vars " << p.n_vars << "\n";
  std::vector<std::pair<int, double>> obj;
  for (Eigen::Index i = 0; i < p.objective.size(); ++i)
    if (p.objective(i) != 0.0)
      obj.emplace_back(static_cast<int>(i), p.objective(i));
  os << "objective " << obj.size() << "\n";
  for (const auto& [i, v] : obj) os << i << " " << v << "\n";
  for (const auto& eq : p.equalities) {
    os << "equality " << eq.terms.size() << " " << eq.rhs << " "
       << detail::sanitize_label(eq.label) << "\n";
    for (const auto& t : eq.terms) os << t.var << " " << t.value << "\n";
  }
  for (const auto& b : p.blocks) {
    size_t nc = 0;
    for (const auto& e : b.entries) nc += (e.var < 0) ? 1 : 0;
    os << "block " << b.dim << " " << nc << " " << (b.entries.size() - nc)
       << " " << detail::sanitize_label(b.label) << "\n";
    for (const auto& e : b.entries)
      if (e.var < 0) os << e.row << " " << e.col << " " << e.value << "\n";
    for (const auto& e : b.entries)
      if (e.var >= 0)
        os << e.var << " " << e.row << " " << e.col << " " << e.value << "\n";
  }
}

inline SdpProblem read_sdp(std::istream& is) {
  auto next_line = [&is](std::istringstream& line) {
    std::string raw;
    while (std::getline(is, raw)) {
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      std::istringstream probe(raw);
      std::string first;
      if (probe >> first) {
        line = std::istringstream(raw);
        return true;
      }
    }
    return false;
  };

  SdpProblem p;
  std::istringstream line;
  require(next_line(line), Errc::io_error, "empty sdp document");
  {
    std::string magic;
    int version = 0;
    line >> magic >> version;
    require(magic == "ptpstab-sdp" && version == 1, Errc::io_error,
            "unrecognized sdp document header");
  }
  bool saw_vars = false;
  while (next_line(line)) {
    std::string kind;
    line >> kind;
    if (kind == "vars") {
      require(line >> p.n_vars && p.n_vars >= 0, Errc::io_error, "vars line");
      saw_vars = true;
    } else if (kind == "objective") {
      size_t nnz = 0;
      require(static_cast<bool>(line >> nnz), Errc::io_error, "objective line");
      p.objective = VectorXd::Zero(p.n_vars);
      for (size_t i = 0; i < nnz; ++i) {
        require(next_line(line), Errc::io_error, "truncated objective");
        int var = 0;
        double v = 0;
        require(static_cast<bool>(line >> var >> v), Errc::io_error,
                "objective entry");
        require(var >= 0 && var < p.n_vars, Errc::io_error,
                "objective index out of range");
        p.objective(var) += v;
      }
    } else if (kind == "equality") {
      SdpEquality eq;
      size_t nnz = 0;
      require(static_cast<bool>(line >> nnz >> eq.rhs), Errc::io_error,
              "equality line");
      line >> eq.label;
      for (size_t i = 0; i < nnz; ++i) {
        require(next_line(line), Errc::io_error, "truncated equality");
        SdpEqualityTerm t;
        require(static_cast<bool>(line >> t.var >> t.value), Errc::io_error,
                "equality entry");
        eq.terms.push_back(t);
      }
      p.equalities.push_back(std::move(eq));
    } else if (kind == "block") {
      SdpBlock b;
      size_t nc = 0, nl = 0;
      require(static_cast<bool>(line >> b.dim >> nc >> nl), Errc::io_error,
              "block line");
      line >> b.label;
      for (size_t i = 0; i < nc; ++i) {
        require(next_line(line), Errc::io_error, "truncated block constants");
        int r = 0, c = 0;
        double v = 0;
        require(static_cast<bool>(line >> r >> c >> v), Errc::io_error,
                "block constant entry");
        b.add_constant(r, c, v);
      }
      for (size_t i = 0; i < nl; ++i) {
        require(next_line(line), Errc::io_error, "truncated block entries");
        SdpEntry e;
        require(static_cast<bool>(line >> e.var >> e.row >> e.col >> e.value),
                Errc::io_error, "block linear entry");
        require(e.var >= 0, Errc::io_error, "block linear entry variable");
        b.add_linear(e.var, e.row, e.col, e.value);
      }
      p.blocks.push_back(std::move(b));
    } else {
      fail(Errc::io_error, "unknown sdp document record '" + kind + "'");
    }
  }
  require(saw_vars, Errc::io_error, "sdp document missing the vars record");
  p.validate();
  return p;
}

}  // namespace ptpstab
