#pragma once

// Projection operators p mapping states near the maneuver's orbit to the
// curve parameter, together with the associated transverse machinery:
// the Jacobian row P(s) = Dp(x_star(s)), the annihilator
// E_perp(s) = I - F(s) P(s) and the curvature row P'(s).
//
// Two families:
//   * lambda_based:  p(x) = argmin_s (x - x_star(s))' Lambda(s) (x - x_star(s)),
//     solved by a coarse scan plus a local root solve of the stationarity
//     function z(x,s) = (x - x_star)'[Lambda'(x - x_star) - 2 Lambda F].
//   * coordinate_saturation:  p(x) = clamp of an affine map of one state
//     coordinate (the map is calibrated from the curve itself).
//
// Both label the state by where p saturates: the lower cap, the upper cap,
// or the open tube in between.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"
#include "ptpstab/curves.hpp"
#include "ptpstab/maneuver.hpp"
#include "ptpstab/rootfind.hpp"

namespace ptpstab {

enum class RegionLabel { h_alpha, tube, h_omega };

inline const char* region_name(RegionLabel r) {
  switch (r) {
    case RegionLabel::h_alpha: return "h_alpha";
    case RegionLabel::tube: return "tube";
    case RegionLabel::h_omega: return "h_omega";
  }
  return "?";
}

// Dynamic lower-cap offset keeping trajectories from settling at the start
// point: eps grows toward eps_max while the state is within delta of
// x_alpha and decays to zero otherwise, clamped to [0, eps_max].
struct EpsilonGuard {
  double eps = 0.0;
  double eps_max = 1e-3;
  double delta = 1e-3;
  double rate = 1e-3;

  void update(double dt, double dist_to_x_alpha) {
    double drive = delta - dist_to_x_alpha;
    double sgn = (drive > 0.0) ? 1.0 : (drive < 0.0 ? -1.0 : 0.0);
    eps = std::clamp(eps + dt * rate * sgn, 0.0, eps_max);
  }
};

struct ProjectionResult {
  double s = 0.0;
  RegionLabel region = RegionLabel::tube;
};

struct ProjectionOptions {
  int coarse_cells = 200;        // global scan resolution
  double root_tol = 1e-10;       // parameter tolerance of the local solve
  double working_distance = -1.0;  // gate on distance to the orbit;
                                   // negative means 0.5 * arc length
  double ambiguity_tol = 1e-9;   // tie threshold between distinct minima
  double identity_tol = 1e-8;    // construction check p(x_star(s)) = s
};

class ProjectionOperator {
 public:
  enum class Kind { lambda_based, coordinate_saturation };

  using Options = ProjectionOptions;

  static ProjectionOperator lambda_based(const Maneuver& mv,
                                         const MatrixCurve& lambda,
                                         Options opt = {}) {
    ProjectionOperator op(mv, opt);
    op.kind_ = Kind::lambda_based;
    require(lambda.rows() == mv.n() && lambda.cols() == mv.n(),
            Errc::dimension_mismatch,
            "weight curve dimensions do not match the state");
    op.lambda_ = lambda;
    // Positivity of F' Lambda F underpins both the count-one stationarity
    // and the Jacobian formula.
    for (double s : linspace(mv.domain, 50)) {
      VectorXd F = mv.F(s);
      double q = F.dot(lambda.eval(s) * F);
      require(q > 0.0, Errc::assumption_violated,
              "F' Lambda F must be positive along the curve");
    }
    op.check_identity();
    return op;
  }

  static ProjectionOperator coordinate_saturation(const Maneuver& mv,
                                                  int coordinate,
                                                  Options opt = {}) {
    ProjectionOperator op(mv, opt);
    op.kind_ = Kind::coordinate_saturation;
    require(coordinate >= 0 && coordinate < mv.n(), Errc::dimension_mismatch,
            "coordinate index out of range");
    op.coordinate_ = coordinate;
    // Calibrate the affine coordinate->parameter map from the curve and
    // verify the coordinate is strictly monotone along it.
    std::vector<double> grid = linspace(mv.domain, 50);
    double n_pts = static_cast<double>(grid.size());
    double sum_s = 0, sum_c = 0, sum_sc = 0, sum_ss = 0;
    std::vector<double> coords;
    for (double s : grid) {
      double c = mv.x_star.eval(s)(coordinate);
      coords.push_back(c);
      sum_s += s;
      sum_c += c;
      sum_sc += s * c;
      sum_ss += s * s;
    }
    for (std::size_t i = 1; i < coords.size(); ++i)
      require((coords[i] - coords[i - 1]) * (coords[1] - coords[0]) > 0.0,
              Errc::assumption_violated,
              "selected coordinate is not strictly monotone along the curve");
    double slope = (n_pts * sum_sc - sum_s * sum_c) /
                   (n_pts * sum_ss - sum_s * sum_s);
    double intercept = (sum_c - slope * sum_s) / n_pts;
    op.coord_slope_ = slope;          // x_coord ~= intercept + slope * s
    op.coord_intercept_ = intercept;
    op.check_identity();
    return op;
  }

  Kind kind() const { return kind_; }
  const Maneuver& maneuver() const { return mv_; }
  double working_distance() const { return working_distance_; }
  const Interval& domain() const { return mv_.domain; }

  // Euclidean distance from x to the state curve (coarse scan plus local
  // parabolic refinement); used for the working-distance gate.
  double distance_to_orbit(const VectorXd& x) const {
    int cells = opt_.coarse_cells;
    std::vector<double> grid = linspace(mv_.domain, cells + 1);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double d = (x - mv_.x_star.eval(grid[i])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    auto dist2 = [&](double s) {
      return (x - mv_.x_star.eval(s)).squaredNorm();
    };
    double lo = grid[static_cast<std::size_t>(std::max(0, best - 1))];
    double hi = grid[static_cast<std::size_t>(
        std::min<int>(static_cast<int>(grid.size()) - 1, best + 1))];
    // Golden-section shrink of the bracketing cells.
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = dist2(c), fd = dist2(d);
    for (int it = 0; it < 80 && (b - a) > 1e-12 * mv_.domain.length(); ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = dist2(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = dist2(d);
      }
    }
    return std::sqrt(std::min({best_d, fc, fd}));
  }

  // Evaluate the operator.  eps_lower shifts the lower saturation cap to
  // s_alpha + eps_lower (the anti-trapping guard).
  ProjectionResult project(const VectorXd& x, double eps_lower = 0.0) const {
    require(x.size() == mv_.n(), Errc::dimension_mismatch,
            "state dimension mismatch");
    const double lo = std::min(mv_.domain.s_alpha + std::max(eps_lower, 0.0),
                               mv_.domain.s_omega);
    const double hi = mv_.domain.s_omega;

    double s = 0.0;
    if (kind_ == Kind::coordinate_saturation) {
      double raw = (x(coordinate_) - coord_intercept_) / coord_slope_;
      s = std::clamp(raw, lo, hi);
    } else {
      s = argmin_weighted_distance(x, lo, hi);
    }

    ProjectionResult out;
    out.s = s;
    if (s <= lo) {
      out.s = lo;
      out.region = RegionLabel::h_alpha;
    } else if (s >= hi) {
      out.s = hi;
      out.region = RegionLabel::h_omega;
    } else {
      out.region = RegionLabel::tube;
    }

    // Working-distance gate on tube states.  The distance to the projected
    // point bounds the distance to the orbit from above, so this rejects
    // every state the exact gate would reject and costs one curve
    // evaluation.  The two saturation regions are the operator's end caps
    // and carry no transverse bound: a state there regulates toward the
    // corresponding boundary point.
    if (out.region == RegionLabel::tube) {
      require((x - mv_.x_star.eval(out.s)).norm() <= working_distance_,
              Errc::not_in_domain,
              "state is outside the operator's working distance");
    }
    return out;
  }

  // Jacobian row P(s) on the open interior; the closed-boundary value is a
  // one-sided limit and must be requested explicitly.
  RowVectorXd jacobian(double s) const {
    require(s > mv_.domain.s_alpha + kDomainTol &&
                s < mv_.domain.s_omega - kDomainTol,
            Errc::out_of_domain,
            "Jacobian row is defined on the open interior; use the limit "
            "variant at the caps");
    return jacobian_limit(s);
  }

  // One-sided limit of the Jacobian row, valid on the closed domain.
  RowVectorXd jacobian_limit(double s) const {
    s = mv_.domain.clamp_inside(s);
    if (kind_ == Kind::coordinate_saturation) {
      RowVectorXd P = RowVectorXd::Zero(mv_.n());
      P(coordinate_) = 1.0 / coord_slope_;
      return P;
    }
    VectorXd F = mv_.F(s);
    RowVectorXd num = (lambda_.eval(s) * F).transpose();
    return num / num.dot(F);
  }

  MatrixXd e_perp(double s) const {
    VectorXd F = mv_.F(s);
    return MatrixXd::Identity(mv_.n(), mv_.n()) - F * jacobian(s);
  }

  MatrixXd e_perp_limit(double s) const {
    VectorXd F = mv_.F(mv_.domain.clamp_inside(s));
    return MatrixXd::Identity(mv_.n(), mv_.n()) - F * jacobian_limit(s);
  }

  // P'(s), the parameter derivative of the Jacobian row along the curve
  // (equivalently F' Hess p at the curve).  Exactly zero for the affine
  // coordinate-saturation family.
  RowVectorXd hessian_term(double s) const {
    s = mv_.domain.clamp_inside(s);
    if (kind_ == Kind::coordinate_saturation)
      return RowVectorXd::Zero(mv_.n());
    VectorXd F = mv_.F(s);
    VectorXd Fp = mv_.x_star.derivative(s, 2);
    MatrixXd L = lambda_.eval(s);
    MatrixXd Lp = lambda_.derivative(s, 1);
    RowVectorXd num = (L * F).transpose();
    RowVectorXd num_p = (L * Fp + Lp * F).transpose();
    double den = num.dot(F);
    double den_p = 2.0 * Fp.dot(L * F) + F.dot(Lp * F);
    return num_p / den - num * (den_p / (den * den));
  }

  VectorXd transverse_error(const VectorXd& x, double eps_lower = 0.0) const {
    return x - mv_.x_star.eval(project(x, eps_lower).s);
  }

 private:
  ProjectionOperator(const Maneuver& mv, Options opt) : mv_(mv), opt_(opt) {
    working_distance_ = opt.working_distance > 0.0
                            ? opt.working_distance
                            : 0.5 * arc_length(mv_, 1e-6);
  }

  void check_identity() const {
    for (double s : linspace(mv_.domain, 50)) {
      double p = project_ungated(mv_.x_star.eval(s));
      require(std::abs(p - s) < opt_.identity_tol, Errc::assumption_violated,
              "operator does not reproduce the parameter along the curve");
    }
  }

  // Projection without the working-distance gate (construction-time check).
  double project_ungated(const VectorXd& x) const {
    if (kind_ == Kind::coordinate_saturation) {
      double raw = (x(coordinate_) - coord_intercept_) / coord_slope_;
      return std::clamp(raw, mv_.domain.s_alpha, mv_.domain.s_omega);
    }
    return argmin_weighted_distance(x, mv_.domain.s_alpha,
                                    mv_.domain.s_omega);
  }

  double weighted_dist(const VectorXd& x, double s) const {
    VectorXd e = x - mv_.x_star.eval(s);
    return e.dot(lambda_.eval(s) * e);
  }

  // Stationarity function: the s-derivative of the weighted distance.
  double z_of(const VectorXd& x, double s) const {
    VectorXd e = x - mv_.x_star.eval(s);
    return e.dot(lambda_.derivative(s, 1) * e -
                 2.0 * (lambda_.eval(s) * mv_.F(s)));
  }

  double argmin_weighted_distance(const VectorXd& x, double lo,
                                  double hi) const {
    const int cells = opt_.coarse_cells;
    std::vector<double> grid = linspace(Interval{lo, hi}, cells + 1);
    std::vector<double> J(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      J[i] = weighted_dist(x, grid[i]);
    std::size_t best =
        static_cast<std::size_t>(std::min_element(J.begin(), J.end()) -
                                 J.begin());

    // Distinct coarse minima within the tie tolerance are ambiguous: the
    // operator is only well defined where the minimizer is unique.
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (i + 1 >= best && i <= best + 1) continue;
      bool local_min = (i == 0 || J[i] <= J[i - 1]) &&
                       (i + 1 == grid.size() || J[i] <= J[i + 1]);
      if (local_min &&
          J[i] - J[best] <= opt_.ambiguity_tol * (1.0 + std::abs(J[best])))
        fail(Errc::ambiguous_projection,
             "weighted distance has two tied minima along the curve");
    }

    auto zf = [&](double s) { return z_of(x, s); };
    if (best == 0) {
      if (zf(lo) >= 0.0) return lo;  // saturated at the lower cap
      // Minimum sits inside the first cell.
      if (zf(grid[1]) >= 0.0)
        return brent(zf, lo, grid[1], opt_.root_tol);
      return lo;
    }
    if (best + 1 == grid.size()) {
      if (zf(hi) <= 0.0) return hi;  // saturated at the upper cap
      if (zf(grid[grid.size() - 2]) <= 0.0)
        return brent(zf, grid[grid.size() - 2], hi, opt_.root_tol);
      return hi;
    }
    double a = grid[best - 1], b = grid[best + 1];
    if (zf(a) < 0.0 && zf(b) > 0.0) return brent(zf, a, b, opt_.root_tol);
    // Degenerate bracket: fall back to the parabola through the three
    // closest samples.
    double ja = J[best - 1], jb = J[best], jc = J[best + 1];
    double denom = ja - 2.0 * jb + jc;
    if (std::abs(denom) < 1e-300) return grid[best];
    double shift = 0.5 * (ja - jc) / denom;
    double h = grid[best] - grid[best - 1];
    return std::clamp(grid[best] + shift * h, a, b);
  }

  Maneuver mv_;
  Options opt_;
  Kind kind_ = Kind::lambda_based;
  MatrixCurve lambda_;
  int coordinate_ = 0;
  double coord_slope_ = 1.0;
  double coord_intercept_ = 0.0;
  double working_distance_ = 0.0;
};

}  // namespace ptpstab
