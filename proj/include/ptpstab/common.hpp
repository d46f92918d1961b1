#pragma once

// Shared basics: typed errors, the curve-parameter interval, grid builders and
// finite-difference helpers used throughout the library.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptpstab {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class Errc {
  out_of_domain,
  unsupported_order,
  rank_deficient,
  dimension_mismatch,
  not_in_domain,
  ambiguous_projection,
  non_finite_entries,
  not_an_equilibrium,
  not_stabilizable,
  riccati_divergence,
  not_hurwitz,
  grid_too_coarse,
  backend_failure,
  infeasible,
  certification_failed,
  alpha_vanishes,
  not_hyperbolic,
  existence_check_failed,
  negative_rho_squared,
  singular_inertia,
  assumption_violated,
  constraint_violated,
  integration_failure,
  left_domain,
  reduced_not_hurwitz,
  mismatch_beyond_tolerance,
  config_error,
  io_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::out_of_domain: return "OutOfDomain";
    case Errc::unsupported_order: return "UnsupportedOrder";
    case Errc::rank_deficient: return "RankDeficient";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::not_in_domain: return "NotInDomain";
    case Errc::ambiguous_projection: return "AmbiguousProjection";
    case Errc::non_finite_entries: return "NonFiniteEntries";
    case Errc::not_an_equilibrium: return "NotAnEquilibrium";
    case Errc::not_stabilizable: return "NotStabilizable";
    case Errc::riccati_divergence: return "RiccatiDivergence";
    case Errc::not_hurwitz: return "NotHurwitz";
    case Errc::grid_too_coarse: return "GridTooCoarse";
    case Errc::backend_failure: return "BackendFailure";
    case Errc::infeasible: return "Infeasible";
    case Errc::certification_failed: return "CertificationFailed";
    case Errc::alpha_vanishes: return "AlphaVanishes";
    case Errc::not_hyperbolic: return "NotHyperbolic";
    case Errc::existence_check_failed: return "ExistenceCheckFailed";
    case Errc::negative_rho_squared: return "NegativeRhoSquared";
    case Errc::singular_inertia: return "SingularInertia";
    case Errc::assumption_violated: return "AssumptionViolated";
    case Errc::constraint_violated: return "ConstraintViolated";
    case Errc::integration_failure: return "IntegrationFailure";
    case Errc::left_domain: return "LeftDomain";
    case Errc::reduced_not_hurwitz: return "ReducedNotHurwitz";
    case Errc::mismatch_beyond_tolerance: return "MismatchBeyondTolerance";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

// Absolute slack applied when clamping curve arguments onto the closed domain.
inline constexpr double kDomainTol = 1e-12;

// Closed parameter interval [s_alpha, s_omega] of a maneuver or curve.
struct Interval {
  double s_alpha{0.0};
  double s_omega{1.0};

  Interval() = default;
  Interval(double a, double b) : s_alpha(a), s_omega(b) {
    require(std::isfinite(a) && std::isfinite(b) && a < b, Errc::config_error,
            "interval requires s_alpha < s_omega");
  }

  double length() const { return s_omega - s_alpha; }
  double to_unit(double s) const { return (s - s_alpha) / length(); }
  double from_unit(double t) const { return s_alpha + t * length(); }
  double midpoint() const { return 0.5 * (s_alpha + s_omega); }

  bool contains(double s) const { return s >= s_alpha && s <= s_omega; }

  // Clamps arguments within kDomainTol of an endpoint onto it; anything
  // further outside is a domain error.
  double clamp_inside(double s) const {
    require(std::isfinite(s), Errc::out_of_domain, "non-finite parameter");
    if (s < s_alpha) {
      require(s_alpha - s <= kDomainTol, Errc::out_of_domain,
              "parameter " + std::to_string(s) + " below domain start " +
                  std::to_string(s_alpha));
      return s_alpha;
    }
    if (s > s_omega) {
      require(s - s_omega <= kDomainTol, Errc::out_of_domain,
              "parameter " + std::to_string(s) + " above domain end " +
                  std::to_string(s_omega));
      return s_omega;
    }
    return s;
  }

  double saturate(double s) const {
    return s < s_alpha ? s_alpha : (s > s_omega ? s_omega : s);
  }

  bool operator==(const Interval& o) const {
    return s_alpha == o.s_alpha && s_omega == o.s_omega;
  }
};

inline std::vector<double> linspace(double a, double b, int n) {
  require(n >= 2, Errc::config_error, "linspace needs n >= 2");
  std::vector<double> g(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    g[static_cast<size_t>(i)] = a + (b - a) * static_cast<double>(i) / (n - 1);
  g.front() = a;
  g.back() = b;
  return g;
}

inline std::vector<double> linspace(const Interval& dom, int n) {
  return linspace(dom.s_alpha, dom.s_omega, n);
}

// Chebyshev-Lobatto points (endpoints included), packed toward the boundary.
inline std::vector<double> chebyshev_lobatto(const Interval& dom, int n) {
  require(n >= 2, Errc::config_error, "chebyshev_lobatto needs n >= 2");
  std::vector<double> g(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = 0.5 * (1.0 - std::cos(M_PI * i / (n - 1)));
    g[static_cast<size_t>(i)] = dom.from_unit(t);
  }
  g.front() = dom.s_alpha;
  g.back() = dom.s_omega;
  return g;
}

// Chebyshev-Gauss points (strictly interior).
inline std::vector<double> chebyshev_interior(const Interval& dom, int n) {
  require(n >= 1, Errc::config_error, "chebyshev_interior needs n >= 1");
  std::vector<double> g(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = 0.5 * (1.0 - std::cos(M_PI * (2.0 * i + 1.0) / (2.0 * n)));
    g[static_cast<size_t>(i)] = dom.from_unit(t);
  }
  return g;
}

inline double fd_step(double scale) { return 1e-6 * (1.0 + std::abs(scale)); }
inline double fd_step(const VectorXd& x) { return 1e-6 * (1.0 + x.norm()); }

// Five-point central difference; exact for quartics.
template <typename F>
auto central_difference(F&& f, double x, double h) -> decltype(f(x)) {
  return (-f(x + 2 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2 * h)) /
         (12.0 * h);
}

// Five-point central second difference.
template <typename F>
auto central_second_difference(F&& f, double x, double h) -> decltype(f(x)) {
  return (-f(x + 2 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) -
          f(x - 2 * h)) /
         (12.0 * h * h);
}

// Column-wise five-point Jacobian of a vector field.
template <typename F>
MatrixXd fd_jacobian(F&& f, const VectorXd& x) {
  const VectorXd f0 = f(x);
  MatrixXd J(f0.size(), x.size());
  const double h = fd_step(x);
  for (int j = 0; j < x.size(); ++j) {
    VectorXd xp = x;
    auto eval = [&](double xj) {
      xp(j) = xj;
      return f(xp);
    };
    J.col(j) = central_difference(eval, x(j), h);
    xp(j) = x(j);
  }
  return J;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline double relative_gap(double a, double b, double floor_scale = 1.0) {
  return std::abs(a - b) / std::max(floor_scale, std::max(std::abs(a), std::abs(b)));
}

}  // namespace ptpstab
