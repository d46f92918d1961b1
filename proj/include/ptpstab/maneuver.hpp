#pragma once

// Point-to-point maneuver: a state curve x_star, input curve u_star and
// speed profile rho over one parameter interval, connecting two forced
// equilibria.  The defining consistency property is
//   x_star'(s) rho(s) = f(x_star(s)) + B(x_star(s)) u_star(s),
// so that x(t) = x_star(s(t)) with sdot = rho(s) solves the dynamics.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"
#include "ptpstab/curves.hpp"
#include "ptpstab/mechanics.hpp"
#include "ptpstab/quadrature.hpp"
#include "ptpstab/system.hpp"

namespace ptpstab {

struct Maneuver {
  VectorCurve x_star;
  VectorCurve u_star;
  ScalarCurve rho;
  Interval domain{0.0, 1.0};
  VectorXd x_alpha, x_omega;
  VectorXd u_alpha, u_omega;

  int n() const { return x_star.size(); }
  int m() const { return u_star.size(); }

  // Tangent of the state curve, F(s) = x_star'(s).
  VectorXd F(double s) const { return x_star.derivative(s, 1); }
};

// Parameter speed sdot = rho(s).
inline double s_dynamics(const Maneuver& mv, double s) {
  return mv.rho.eval(mv.domain.clamp_inside(s));
}

// Length of the state curve by adaptive quadrature of ||F||.
inline double arc_length(const Maneuver& mv, double rel_tol = 1e-8) {
  return integrate_adaptive([&](double s) { return mv.F(s).norm(); },
                            mv.domain.s_alpha, mv.domain.s_omega, rel_tol);
}

struct ValidationReport {
  bool p2_boundary_match = false;
  bool p3_speed_profile = false;
  bool p4_regular_curve = false;
  bool p5_no_self_intersection = false;
  double p6_max_residual = 0.0;
  double p2_gap = 0.0;
  double min_interior_rho = 0.0;
  double min_tangent_norm = 0.0;
  double tube_radius = 0.0;

  bool ok(double p6_tol = 1e-6) const {
    return p2_boundary_match && p3_speed_profile && p4_regular_curve &&
           p5_no_self_intersection && p6_max_residual < p6_tol;
  }
};

// Row weighting applied to the consistency residual before taking norms.
// For mechanical systems this converts the acceleration rows to force units
// (pre-multiplication by the inertia matrix), making tolerances meaningful
// across models whose parameter scales differ by orders of magnitude.
using ResidualWeight = std::function<MatrixXd(const VectorXd&)>;

inline ResidualWeight force_unit_weight(const MechanicalSystem& mech) {
  return [mech](const VectorXd& x) {
    const int nq = mech.n_q;
    MatrixXd W = MatrixXd::Identity(2 * nq, 2 * nq);
    W.bottomRightCorner(nq, nq) = mech.M(x.head(nq));
    return W;
  };
}

inline ValidationReport validate(const Maneuver& mv,
                                 const ControlAffineSystem& sys,
                                 int grid_size = 200,
                                 const ResidualWeight& weight = {},
                                 double boundary_tol = 1e-8,
                                 double tube_radius_scale = 1e-3) {
  require(grid_size >= 10, Errc::config_error,
          "validation grid must have at least 10 points");
  require(mv.n() == sys.n && mv.m() == sys.m, Errc::dimension_mismatch,
          "maneuver dimensions do not match the system");

  ValidationReport rep;

  // P2: curve endpoints hit the boundary states.
  rep.p2_gap = std::max(
      (mv.x_star.eval(mv.domain.s_alpha) - mv.x_alpha).norm(),
      (mv.x_star.eval(mv.domain.s_omega) - mv.x_omega).norm());
  rep.p2_boundary_match = rep.p2_gap < boundary_tol;

  // Chebyshev-distributed validation grid resolves the boundary regions
  // where rho vanishes.
  std::vector<double> grid = chebyshev_lobatto(mv.domain, grid_size);

  // P3: rho vanishes at the ends and is positive on the interior.
  rep.min_interior_rho = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < grid.size(); ++i)
    rep.min_interior_rho = std::min(rep.min_interior_rho, mv.rho.eval(grid[i]));
  rep.p3_speed_profile = std::abs(mv.rho.eval(mv.domain.s_alpha)) < boundary_tol &&
                         std::abs(mv.rho.eval(mv.domain.s_omega)) < boundary_tol &&
                         rep.min_interior_rho > 0.0;

  // P4: the state curve is regular.
  rep.min_tangent_norm = std::numeric_limits<double>::infinity();
  for (double s : grid)
    rep.min_tangent_norm = std::min(rep.min_tangent_norm, mv.F(s).norm());
  rep.p4_regular_curve = rep.min_tangent_norm > 0.0;

  // P6: dynamics consistency residual, row-weighted if requested.
  rep.p6_max_residual = 0.0;
  for (double s : grid) {
    VectorXd x = mv.x_star.eval(s);
    VectorXd u = mv.u_star.eval(s);
    VectorXd residual = mv.F(s) * mv.rho.eval(s) - sys.rhs(x, u);
    if (weight) residual = (weight(x) * residual).eval();
    rep.p6_max_residual = std::max(rep.p6_max_residual, residual.norm());
  }

  // P5 heuristic: sample pairs that are far apart along the curve must be
  // far apart in space.  "Far along the curve" uses the accumulated chord
  // length; the spatial threshold is twice a nominal tube radius.
  const double total_len = arc_length(mv, 1e-6);
  rep.tube_radius = tube_radius_scale * total_len;
  std::vector<VectorXd> samples;
  samples.reserve(grid.size());
  for (double s : grid) samples.push_back(mv.x_star.eval(s));
  std::vector<double> cum(grid.size(), 0.0);
  for (std::size_t i = 1; i < grid.size(); ++i)
    cum[i] = cum[i - 1] + (samples[i] - samples[i - 1]).norm();
  double max_cell = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    max_cell = std::max(max_cell, cum[i] - cum[i - 1]);
  const double arc_gap_floor = std::max(10.0 * rep.tube_radius, 5.0 * max_cell);
  rep.p5_no_self_intersection = true;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      if (cum[j] - cum[i] <= arc_gap_floor) continue;
      if ((samples[j] - samples[i]).norm() <= 2.0 * rep.tube_radius) {
        rep.p5_no_self_intersection = false;
        break;
      }
    }
    if (!rep.p5_no_self_intersection) break;
  }

  return rep;
}

inline json to_json(const Maneuver& mv) {
  json j;
  j["kind"] = "maneuver";
  j["n"] = mv.n();
  j["m"] = mv.m();
  j["domain"] = {mv.domain.s_alpha, mv.domain.s_omega};
  j["x_alpha"] = std::vector<double>(mv.x_alpha.data(),
                                     mv.x_alpha.data() + mv.x_alpha.size());
  j["x_omega"] = std::vector<double>(mv.x_omega.data(),
                                     mv.x_omega.data() + mv.x_omega.size());
  j["u_alpha"] = std::vector<double>(mv.u_alpha.data(),
                                     mv.u_alpha.data() + mv.u_alpha.size());
  j["u_omega"] = std::vector<double>(mv.u_omega.data(),
                                     mv.u_omega.data() + mv.u_omega.size());
  j["x_star"] = to_json(mv.x_star);
  j["u_star"] = to_json(mv.u_star);
  j["rho"] = to_json(mv.rho);
  return j;
}

inline Maneuver maneuver_from_json(const json& j) {
  require(j.value("kind", "") == std::string("maneuver"), Errc::io_error,
          "document is not a maneuver");
  Maneuver mv;
  mv.domain = Interval{j.at("domain").at(0).get<double>(),
                       j.at("domain").at(1).get<double>()};
  mv.x_star = vector_curve_from_json(j.at("x_star"));
  mv.u_star = vector_curve_from_json(j.at("u_star"));
  mv.rho = scalar_curve_from_json(j.at("rho"));
  auto vec = [](const json& a) {
    VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(i) = a.at(i).get<double>();
    return v;
  };
  mv.x_alpha = vec(j.at("x_alpha"));
  mv.x_omega = vec(j.at("x_omega"));
  mv.u_alpha = vec(j.at("u_alpha"));
  mv.u_omega = vec(j.at("u_omega"));
  require(mv.n() == j.at("n").get<int>() && mv.m() == j.at("m").get<int>(),
          Errc::io_error, "maneuver dimensions inconsistent with its curves");
  return mv;
}

}  // namespace ptpstab
