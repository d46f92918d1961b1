#pragma once

// Parameterized scalar/vector/matrix curves over a closed interval.
//
// Three bases are supported:
//   * polynomial  - coefficients in ascending powers of (s - s_alpha)
//   * bezier      - Bernstein control points on the interval
//   * hermite     - C1 cubic Hermite spline over a strictly increasing knot
//                   grid, storing a value and a first derivative per knot
//
// Evaluation clamps arguments within kDomainTol of an endpoint onto it and
// rejects anything further outside. Derivatives of order 1 and 2 are analytic
// in all bases (the Hermite second derivative is the piecewise one, evaluated
// from the left at interior knots).

#include <json.hpp>

#include <algorithm>
#include <optional>
#include <utility>

#include "ptpstab/common.hpp"

namespace ptpstab {

enum class CurveBasis { polynomial, bezier, hermite };

inline const char* basis_name(CurveBasis b) {
  switch (b) {
    case CurveBasis::polynomial: return "polynomial";
    case CurveBasis::bezier: return "bezier";
    case CurveBasis::hermite: return "hermite";
  }
  return "?";
}

inline CurveBasis basis_from_name(const std::string& name) {
  if (name == "polynomial") return CurveBasis::polynomial;
  if (name == "bezier") return CurveBasis::bezier;
  if (name == "hermite") return CurveBasis::hermite;
  fail(Errc::io_error, "unknown curve basis '" + name + "'");
}

class ScalarCurve {
 public:
  ScalarCurve() = default;

  static ScalarCurve polynomial(VectorXd coefficients, Interval dom) {
    require(coefficients.size() >= 1, Errc::config_error, "empty polynomial");
    require(all_finite(coefficients), Errc::non_finite_entries,
            "polynomial coefficients");
    ScalarCurve c;
    c.basis_ = CurveBasis::polynomial;
    c.dom_ = dom;
    c.coef_ = std::move(coefficients);
    return c;
  }

  static ScalarCurve bezier(VectorXd control_points, Interval dom) {
    require(control_points.size() >= 2, Errc::config_error,
            "bezier needs at least two control points");
    require(all_finite(control_points), Errc::non_finite_entries,
            "bezier control points");
    ScalarCurve c;
    c.basis_ = CurveBasis::bezier;
    c.dom_ = dom;
    c.coef_ = std::move(control_points);
    return c;
  }

  static ScalarCurve constant(double value, Interval dom) {
    return polynomial(VectorXd::Constant(1, value), dom);
  }

  // Hermite spline with explicit per-knot first derivatives.
  static ScalarCurve hermite(std::vector<double> knots, VectorXd values,
                             VectorXd slopes) {
    const auto n = static_cast<Eigen::Index>(knots.size());
    require(n >= 2, Errc::config_error, "hermite needs at least two knots");
    require(values.size() == n && slopes.size() == n, Errc::dimension_mismatch,
            "hermite knots/values/slopes size mismatch");
    require(all_finite(values) && all_finite(slopes), Errc::non_finite_entries,
            "hermite data");
    for (size_t i = 0; i + 1 < knots.size(); ++i)
      require(knots[i] < knots[i + 1], Errc::config_error,
              "hermite knots must be strictly increasing");
    ScalarCurve c;
    c.basis_ = CurveBasis::hermite;
    c.dom_ = Interval(knots.front(), knots.back());
    c.knots_ = std::move(knots);
    c.coef_ = std::move(values);
    c.slopes_ = std::move(slopes);
    return c;
  }

  // Hermite spline with slopes from three-point stencils (one-sided at the
  // ends); exact for quadratics.
  static ScalarCurve hermite(std::vector<double> knots, VectorXd values) {
    VectorXd slopes = stencil_slopes(knots, values);
    return hermite(std::move(knots), std::move(values), std::move(slopes));
  }

  CurveBasis basis() const { return basis_; }
  const Interval& domain() const { return dom_; }
  const VectorXd& coefficients() const { return coef_; }
  const VectorXd& slopes() const { return slopes_; }
  const std::vector<double>& knots() const { return knots_; }

  // Polynomial degree / Bezier order / Hermite segment count.
  int order() const {
    switch (basis_) {
      case CurveBasis::polynomial:
      case CurveBasis::bezier:
        return static_cast<int>(coef_.size()) - 1;
      case CurveBasis::hermite:
        return static_cast<int>(knots_.size()) - 1;
    }
    return 0;
  }

  double eval(double s) const { return eval_impl(dom_.clamp_inside(s), 0); }

  double derivative(double s, int order = 1) const {
    require(order == 1 || order == 2, Errc::unsupported_order,
            "curve derivative order must be 1 or 2");
    return eval_impl(dom_.clamp_inside(s), order);
  }

  double operator()(double s) const { return eval(s); }

 private:
  double eval_impl(double s, int deriv) const {
    switch (basis_) {
      case CurveBasis::polynomial: return eval_poly(s, deriv);
      case CurveBasis::bezier: return eval_bezier(s, deriv);
      case CurveBasis::hermite: return eval_hermite(s, deriv);
    }
    fail(Errc::config_error, "uninitialized curve");
  }

  double eval_poly(double s, int deriv) const {
    const double u = s - dom_.s_alpha;
    const auto n = coef_.size();
    double acc = 0.0;
    // Horner on the analytically differentiated coefficient sequence.
    for (Eigen::Index i = n - 1; i >= deriv; --i) {
      double c = coef_(i);
      for (int k = 0; k < deriv; ++k) c *= static_cast<double>(i - k);
      acc = acc * u + c;
    }
    return acc;
  }

  double eval_bezier(double s, int deriv) const {
    const double t = dom_.to_unit(s);
    const double L = dom_.length();
    if (deriv == 0) return de_casteljau(coef_, t);
    const int n = static_cast<int>(coef_.size()) - 1;
    if (deriv == 1) {
      if (n < 1) return 0.0;
      VectorXd d = (coef_.tail(n) - coef_.head(n)) * static_cast<double>(n);
      return de_casteljau(d, t) / L;
    }
    if (n < 2) return 0.0;
    VectorXd d1 = (coef_.tail(n) - coef_.head(n)) * static_cast<double>(n);
    VectorXd d2 =
        (d1.tail(n - 1) - d1.head(n - 1)) * static_cast<double>(n - 1);
    return de_casteljau(d2, t) / (L * L);
  }

  static double de_casteljau(VectorXd pts, double t) {
    const auto n = pts.size();
    if (n == 1) return pts(0);
    for (Eigen::Index level = n - 1; level >= 1; --level)
      for (Eigen::Index i = 0; i < level; ++i)
        pts(i) = (1.0 - t) * pts(i) + t * pts(i + 1);
    return pts(0);
  }

  double eval_hermite(double s, int deriv) const {
    // Left-closed segment lookup; the last knot maps into the final segment.
    auto it = std::upper_bound(knots_.begin(), knots_.end(), s);
    size_t seg = (it == knots_.begin())
                     ? 0
                     : static_cast<size_t>(it - knots_.begin()) - 1;
    seg = std::min(seg, knots_.size() - 2);
    const double h = knots_[seg + 1] - knots_[seg];
    const double u = (s - knots_[seg]) / h;
    const double y0 = coef_(static_cast<Eigen::Index>(seg));
    const double y1 = coef_(static_cast<Eigen::Index>(seg) + 1);
    const double m0 = slopes_(static_cast<Eigen::Index>(seg)) * h;
    const double m1 = slopes_(static_cast<Eigen::Index>(seg) + 1) * h;
    if (deriv == 0) {
      const double h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
      const double h10 = u * (1.0 - u) * (1.0 - u);
      const double h01 = u * u * (3.0 - 2.0 * u);
      const double h11 = u * u * (u - 1.0);
      return h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
    }
    if (deriv == 1) {
      const double g00 = 6.0 * u * (u - 1.0);
      const double g10 = (1.0 - u) * (1.0 - 3.0 * u);
      const double g01 = -g00;
      const double g11 = u * (3.0 * u - 2.0);
      return (g00 * y0 + g10 * m0 + g01 * y1 + g11 * m1) / h;
    }
    const double k00 = 12.0 * u - 6.0;
    const double k10 = 6.0 * u - 4.0;
    const double k01 = -k00;
    const double k11 = 6.0 * u - 2.0;
    return (k00 * y0 + k10 * m0 + k01 * y1 + k11 * m1) / (h * h);
  }

  static VectorXd stencil_slopes(const std::vector<double>& knots,
                                 const VectorXd& values) {
    const auto n = static_cast<Eigen::Index>(knots.size());
    require(n >= 3, Errc::grid_too_coarse,
            "stencil slopes need at least three knots");
    VectorXd m(n);
    auto lagrange_deriv = [&](Eigen::Index i0, Eigen::Index i1, Eigen::Index i2,
                              double at) {
      const double t0 = knots[static_cast<size_t>(i0)];
      const double t1 = knots[static_cast<size_t>(i1)];
      const double t2 = knots[static_cast<size_t>(i2)];
      const double y0 = values(i0), y1 = values(i1), y2 = values(i2);
      return y0 * (2 * at - t1 - t2) / ((t0 - t1) * (t0 - t2)) +
             y1 * (2 * at - t0 - t2) / ((t1 - t0) * (t1 - t2)) +
             y2 * (2 * at - t0 - t1) / ((t2 - t0) * (t2 - t1));
    };
    m(0) = lagrange_deriv(0, 1, 2, knots.front());
    for (Eigen::Index i = 1; i + 1 < n; ++i)
      m(i) = lagrange_deriv(i - 1, i, i + 1, knots[static_cast<size_t>(i)]);
    m(n - 1) = lagrange_deriv(n - 3, n - 2, n - 1, knots.back());
    return m;
  }

  CurveBasis basis_{CurveBasis::polynomial};
  Interval dom_{};
  VectorXd coef_{VectorXd::Zero(1)};  // poly coeffs / control points / values
  VectorXd slopes_;                   // hermite only
  std::vector<double> knots_;         // hermite only
};

struct FitResult {
  ScalarCurve curve;
  double max_residual{0.0};
};

// Least-squares fit in the polynomial or Bezier basis; interpolation for the
// Hermite basis (which uses the sample abscissae as knots).
inline FitResult fit_scalar_curve(const std::vector<double>& s,
                                  const VectorXd& values, CurveBasis basis,
                                  int order, const Interval& dom) {
  const auto ns = static_cast<Eigen::Index>(s.size());
  require(values.size() == ns, Errc::dimension_mismatch, "fit sample sizes");
  for (double si : s)
    require(dom.contains(dom.clamp_inside(si)), Errc::out_of_domain,
            "fit sample outside domain");

  if (basis == CurveBasis::hermite) {
    return {ScalarCurve::hermite(s, values), 0.0};
  }

  const int cols = order + 1;
  require(ns >= cols, Errc::rank_deficient,
          "fewer samples than coefficients");
  MatrixXd A(ns, cols);
  for (Eigen::Index r = 0; r < ns; ++r) {
    if (basis == CurveBasis::polynomial) {
      const double u = s[static_cast<size_t>(r)] - dom.s_alpha;
      double p = 1.0;
      for (int c = 0; c < cols; ++c) {
        A(r, c) = p;
        p *= u;
      }
    } else {
      const double t = dom.to_unit(s[static_cast<size_t>(r)]);
      // Bernstein row by the recurrence; stable for moderate orders.
      VectorXd b = VectorXd::Zero(cols);
      b(0) = 1.0;
      for (int j = 1; j < cols; ++j) {
        for (int k = j; k >= 1; --k) b(k) = t * b(k - 1) + (1.0 - t) * b(k);
        b(0) *= (1.0 - t);
      }
      A.row(r) = b.transpose();
    }
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  require(qr.rank() == cols, Errc::rank_deficient,
          "fit design matrix is rank deficient");
  VectorXd coef = qr.solve(values);
  ScalarCurve curve = (basis == CurveBasis::polynomial)
                          ? ScalarCurve::polynomial(coef, dom)
                          : ScalarCurve::bezier(coef, dom);
  const double resid = (A * coef - values).cwiseAbs().maxCoeff();
  return {std::move(curve), resid};
}

class VectorCurve {
 public:
  VectorCurve() = default;
  explicit VectorCurve(std::vector<ScalarCurve> components)
      : comps_(std::move(components)) {
    require(!comps_.empty(), Errc::config_error, "empty vector curve");
    for (const auto& c : comps_)
      require(c.domain() == comps_.front().domain(), Errc::dimension_mismatch,
              "vector curve components must share a domain");
  }

  int size() const { return static_cast<int>(comps_.size()); }
  const Interval& domain() const { return comps_.front().domain(); }
  const ScalarCurve& component(int i) const {
    return comps_[static_cast<size_t>(i)];
  }

  VectorXd eval(double s) const {
    VectorXd v(size());
    for (int i = 0; i < size(); ++i) v(i) = comps_[static_cast<size_t>(i)].eval(s);
    return v;
  }

  VectorXd derivative(double s, int order = 1) const {
    VectorXd v(size());
    for (int i = 0; i < size(); ++i)
      v(i) = comps_[static_cast<size_t>(i)].derivative(s, order);
    return v;
  }

  VectorXd operator()(double s) const { return eval(s); }

 private:
  std::vector<ScalarCurve> comps_;
};

class MatrixCurve {
 public:
  MatrixCurve() = default;
  // Components in row-major order.
  MatrixCurve(int rows, int cols, std::vector<ScalarCurve> components)
      : rows_(rows), cols_(cols), comps_(std::move(components)) {
    require(rows >= 1 && cols >= 1, Errc::config_error, "matrix curve shape");
    require(static_cast<int>(comps_.size()) == rows * cols,
            Errc::dimension_mismatch, "matrix curve component count");
    for (const auto& c : comps_)
      require(c.domain() == comps_.front().domain(), Errc::dimension_mismatch,
              "matrix curve components must share a domain");
  }

  static MatrixCurve constant(const MatrixXd& value, Interval dom) {
    std::vector<ScalarCurve> comps;
    comps.reserve(static_cast<size_t>(value.size()));
    for (Eigen::Index r = 0; r < value.rows(); ++r)
      for (Eigen::Index c = 0; c < value.cols(); ++c)
        comps.push_back(ScalarCurve::constant(value(r, c), dom));
    return MatrixCurve(static_cast<int>(value.rows()),
                       static_cast<int>(value.cols()), std::move(comps));
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Interval& domain() const { return comps_.front().domain(); }
  const ScalarCurve& component(int r, int c) const {
    return comps_[static_cast<size_t>(r * cols_ + c)];
  }

  MatrixXd eval(double s) const {
    MatrixXd m(rows_, cols_);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c)
        m(r, c) = comps_[static_cast<size_t>(r * cols_ + c)].eval(s);
    return m;
  }

  MatrixXd derivative(double s, int order = 1) const {
    MatrixXd m(rows_, cols_);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c)
        m(r, c) = comps_[static_cast<size_t>(r * cols_ + c)].derivative(s, order);
    return m;
  }

  MatrixXd operator()(double s) const { return eval(s); }

 private:
  int rows_{0};
  int cols_{0};
  std::vector<ScalarCurve> comps_;
};

// Convenience builders: sample a callable on a grid and fit per component.

template <typename F>
VectorCurve fit_vector_curve(F&& f, const std::vector<double>& grid,
                             CurveBasis basis, int order, const Interval& dom) {
  const VectorXd probe = f(grid.front());
  const int n = static_cast<int>(probe.size());
  std::vector<VectorXd> samples;
  samples.reserve(grid.size());
  samples.push_back(probe);
  for (size_t k = 1; k < grid.size(); ++k) samples.push_back(f(grid[k]));
  std::vector<ScalarCurve> comps;
  comps.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    VectorXd vals(static_cast<Eigen::Index>(grid.size()));
    for (size_t k = 0; k < grid.size(); ++k)
      vals(static_cast<Eigen::Index>(k)) = samples[k](i);
    comps.push_back(fit_scalar_curve(grid, vals, basis, order, dom).curve);
  }
  return VectorCurve(std::move(comps));
}

template <typename F>
MatrixCurve fit_matrix_curve(F&& f, const std::vector<double>& grid,
                             CurveBasis basis, int order, const Interval& dom) {
  const MatrixXd probe = f(grid.front());
  const int rows = static_cast<int>(probe.rows());
  const int cols = static_cast<int>(probe.cols());
  std::vector<MatrixXd> samples;
  samples.reserve(grid.size());
  samples.push_back(probe);
  for (size_t k = 1; k < grid.size(); ++k) samples.push_back(f(grid[k]));
  std::vector<ScalarCurve> comps;
  comps.reserve(static_cast<size_t>(rows * cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      VectorXd vals(static_cast<Eigen::Index>(grid.size()));
      for (size_t k = 0; k < grid.size(); ++k)
        vals(static_cast<Eigen::Index>(k)) = samples[k](r, c);
      comps.push_back(fit_scalar_curve(grid, vals, basis, order, dom).curve);
    }
  return MatrixCurve(rows, cols, std::move(comps));
}

// ---------------------------------------------------------------------------
// Serialization to structured text documents (JSON).

using json = nlohmann::json;

inline json to_json(const ScalarCurve& c) {
  json j;
  j["basis"] = basis_name(c.basis());
  j["domain"] = {c.domain().s_alpha, c.domain().s_omega};
  if (c.basis() == CurveBasis::hermite) {
    j["knots"] = c.knots();
    j["values"] = std::vector<double>(c.coefficients().begin(),
                                      c.coefficients().end());
    j["slopes"] = std::vector<double>(c.slopes().begin(), c.slopes().end());
  } else {
    j["order"] = c.order();
    j["coefficients"] = std::vector<double>(c.coefficients().begin(),
                                            c.coefficients().end());
  }
  return j;
}

inline ScalarCurve scalar_curve_from_json(const json& j) {
  try {
    const CurveBasis basis = basis_from_name(j.at("basis").get<std::string>());
    if (basis == CurveBasis::hermite) {
      auto knots = j.at("knots").get<std::vector<double>>();
      auto values = j.at("values").get<std::vector<double>>();
      auto slopes = j.at("slopes").get<std::vector<double>>();
      return ScalarCurve::hermite(
          knots, Eigen::Map<VectorXd>(values.data(),
                                      static_cast<Eigen::Index>(values.size())),
          Eigen::Map<VectorXd>(slopes.data(),
                               static_cast<Eigen::Index>(slopes.size())));
    }
    auto domain = j.at("domain").get<std::vector<double>>();
    require(domain.size() == 2, Errc::io_error, "curve domain needs 2 entries");
    auto coef = j.at("coefficients").get<std::vector<double>>();
    VectorXd v = Eigen::Map<VectorXd>(coef.data(),
                                      static_cast<Eigen::Index>(coef.size()));
    const Interval dom(domain[0], domain[1]);
    if (j.contains("order"))
      require(j.at("order").get<int>() == static_cast<int>(coef.size()) - 1,
              Errc::io_error, "curve order/coefficient count mismatch");
    return basis == CurveBasis::polynomial ? ScalarCurve::polynomial(v, dom)
                                           : ScalarCurve::bezier(v, dom);
  } catch (const json::exception& e) {
    fail(Errc::io_error, std::string("bad curve document: ") + e.what());
  }
}

inline json to_json(const VectorCurve& c) {
  json j;
  j["size"] = c.size();
  json comps = json::array();
  for (int i = 0; i < c.size(); ++i) comps.push_back(to_json(c.component(i)));
  j["components"] = comps;
  return j;
}

inline VectorCurve vector_curve_from_json(const json& j) {
  try {
    std::vector<ScalarCurve> comps;
    for (const auto& cj : j.at("components"))
      comps.push_back(scalar_curve_from_json(cj));
    require(!j.contains("size") ||
                j.at("size").get<int>() == static_cast<int>(comps.size()),
            Errc::io_error, "vector curve size mismatch");
    return VectorCurve(std::move(comps));
  } catch (const json::exception& e) {
    fail(Errc::io_error, std::string("bad vector curve document: ") + e.what());
  }
}

inline json to_json(const MatrixCurve& c) {
  json j;
  j["rows"] = c.rows();
  j["cols"] = c.cols();
  json comps = json::array();
  for (int r = 0; r < c.rows(); ++r)
    for (int cc = 0; cc < c.cols(); ++cc)
      comps.push_back(to_json(c.component(r, cc)));
  j["components"] = comps;
  return j;
}

inline MatrixCurve matrix_curve_from_json(const json& j) {
  try {
    std::vector<ScalarCurve> comps;
    for (const auto& cj : j.at("components"))
      comps.push_back(scalar_curve_from_json(cj));
    return MatrixCurve(j.at("rows").get<int>(), j.at("cols").get<int>(),
                       std::move(comps));
  } catch (const json::exception& e) {
    fail(Errc::io_error, std::string("bad matrix curve document: ") + e.what());
  }
}

}  // namespace ptpstab
