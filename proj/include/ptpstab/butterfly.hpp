#pragma once

// Planar ball-rolling-on-frame model: a ball of effective radius r_b rolls
// without slipping along the boundary of a rotating frame whose edge is the
// polar curve r(phi) = a - b cos(2 phi).  Coordinates q = col(theta, phi)
// with theta the frame rotation angle and phi the contact angle measured in
// the frame, clockwise from the frame's +y axis.
//
// Geometry conventions (all phi-parameterized, derived from r analytically):
//   e_r = (sin phi, cos phi), e_t = (cos phi, -sin phi); e_r' = e_t,
//   e_t' = -e_r.  The traversal is clockwise, so the frame curve's signed
//   curvature is kappa_f = -(r^2 + 2 r'^2 - r r'') / ell'^3 with
//   ell' = sqrt(r^2 + r'^2), and the unit normal n = J tau (J = rotation by
//   +90 degrees) points away from the frame material.  The ball center
//   traces the offset curve sigma = p + r_b n, which is regular iff
//   r_b kappa_f < 1 (contact/rolling assumption); its arc-length rate is
//   zeta' = ell' (1 - r_b kappa_f) and its curvature kappa =
//   kappa_f / (1 - r_b kappa_f).  psi is the tangential angle of tau
//   (tau = (cos psi, sin psi)), with dpsi/dphi = kappa zeta'.

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ptpstab/common.hpp"
#include "ptpstab/curves.hpp"
#include "ptpstab/mechanics.hpp"

namespace ptpstab {

struct ButterflyParams {
  double a = 1.14e-1;    // frame shape offset [m]
  double b = 3.9e-2;     // frame shape modulation [m]
  double mass = 3.0e-3;  // ball mass [kg]
  double r_b = 1.09e-2;  // ball effective radius [m]
  double J_b = 5.8e-7;   // ball inertia [kg m^2]
  double J_f = 8.9e-4;   // frame inertia [kg m^2]
  double g = 9.81;       // gravity [m/s^2]
  Interval working_arc{-0.5, 2.5};
};

struct ButterflyGeometry {
  double r = 0, r_p = 0, r_pp = 0;        // polar radius and phi-derivatives
  Eigen::Vector2d contact;                // frame boundary point
  Eigen::Vector2d tau, n;                 // unit tangent / outward normal
  double ell_p = 0, ell_pp = 0;           // frame arc-length derivatives
  double kappa_f = 0, kappa_f_p = 0;      // frame signed curvature
  Eigen::Vector2d sigma, sigma_p, sigma_pp;  // ball-center curve
  double zeta_p = 0, zeta_pp = 0;         // ball-center arc-length derivatives
  double kappa = 0, kappa_p = 0;          // ball-center signed curvature
  double psi = 0, psi_p = 0, psi_pp = 0;  // tangential angle of tau
};

// Polar radius of the frame edge at one angle, with derivatives through
// order 3.
struct PolarProfile {
  double r = 0, r_p = 0, r_pp = 0, r_ppp = 0;
};

// Full offset-curve geometry for a ball of radius r_b rolling on the inside
// of a polar frame edge, under the conventions documented above.
inline ButterflyGeometry offset_curve_geometry(double phi,
                                               const PolarProfile& prof,
                                               double r_b) {
  ButterflyGeometry g;
  g.r = prof.r;
  g.r_p = prof.r_p;
  g.r_pp = prof.r_pp;

  const Eigen::Vector2d e_r(std::sin(phi), std::cos(phi));
  const Eigen::Vector2d e_t(std::cos(phi), -std::sin(phi));
  g.contact = g.r * e_r;

  g.ell_p = std::hypot(g.r, g.r_p);
  g.ell_pp = (g.r * g.r_p + g.r_p * g.r_pp) / g.ell_p;

  const double N = g.r * g.r + 2.0 * g.r_p * g.r_p - g.r * g.r_pp;
  const double N_p =
      2.0 * g.r * g.r_p + 3.0 * g.r_p * g.r_pp - g.r * prof.r_ppp;
  const double lp3 = g.ell_p * g.ell_p * g.ell_p;
  g.kappa_f = -N / lp3;
  g.kappa_f_p = -N_p / lp3 - 3.0 * g.kappa_f * g.ell_pp / g.ell_p;

  g.tau = (g.r_p * e_r + g.r * e_t) / g.ell_p;
  g.n = (g.r * e_r - g.r_p * e_t) / g.ell_p;

  const double den = 1.0 - r_b * g.kappa_f;
  require(den > 0.0, Errc::assumption_violated,
          "ball-center curve is singular: r_b * kappa_f >= 1");

  g.zeta_p = g.ell_p * den;
  g.zeta_pp = g.ell_pp * den - g.ell_p * r_b * g.kappa_f_p;
  g.kappa = g.kappa_f / den;
  g.kappa_p = g.kappa_f_p / (den * den);

  g.sigma = g.contact + r_b * g.n;
  g.sigma_p = g.zeta_p * g.tau;
  g.sigma_pp = g.zeta_pp * g.tau + g.zeta_p * (g.kappa_f * g.ell_p) * g.n;

  g.psi = -phi + std::atan2(g.r_p, g.r);
  g.psi_p = g.kappa * g.zeta_p;
  g.psi_pp = g.kappa_p * g.zeta_p + g.kappa * g.zeta_pp;
  return g;
}

class ButterflyModel {
 public:
  explicit ButterflyModel(const ButterflyParams& params = {}) : p_(params) {
    // The whole working arc must have a positive radius and a regular
    // offset curve; a failure here means the parameter set is unusable.
    const int n_check = 601;
    for (int i = 0; i < n_check; ++i) {
      double phi = p_.working_arc.s_alpha +
                   p_.working_arc.length() * i / (n_check - 1);
      ButterflyGeometry geo = geometry(phi);
      require(geo.r > 0.0, Errc::assumption_violated,
              "frame polar radius is not positive on the working arc");
    }
  }

  const ButterflyParams& params() const { return p_; }

  PolarProfile polar_profile(double phi) const {
    const double c2 = std::cos(2.0 * phi), s2 = std::sin(2.0 * phi);
    PolarProfile prof;
    prof.r = p_.a - p_.b * c2;
    prof.r_p = 2.0 * p_.b * s2;
    prof.r_pp = 4.0 * p_.b * c2;
    prof.r_ppp = -8.0 * p_.b * s2;
    return prof;
  }

  ButterflyGeometry geometry(double phi) const {
    return offset_curve_geometry(phi, polar_profile(phi), p_.r_b);
  }

  // A1-style regularity margin: min over the arc of 1 - r_b kappa_f.
  double contact_regularity_margin(int grid_size = 601) const {
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_size; ++i) {
      double phi = p_.working_arc.s_alpha +
                   p_.working_arc.length() * i / (grid_size - 1);
      margin = std::min(margin, 1.0 - p_.r_b * geometry(phi).kappa_f);
    }
    return margin;
  }

  Eigen::Matrix2d mass_matrix(double phi) const {
    const ButterflyGeometry g = geometry(phi);
    Eigen::Matrix2d M;
    const double coupling = p_.mass * g.sigma.dot(g.n) + p_.J_b / p_.r_b;
    M(0, 0) = p_.J_f + p_.J_b + p_.mass * g.sigma.squaredNorm();
    M(0, 1) = -coupling * g.zeta_p;
    M(1, 0) = M(0, 1);
    M(1, 1) = (p_.J_b / (p_.r_b * p_.r_b) + p_.mass) * g.zeta_p * g.zeta_p;
    return M;
  }

  Eigen::Matrix2d mass_matrix_dphi(double phi) const {
    const ButterflyGeometry g = geometry(phi);
    const double st = g.sigma.dot(g.tau);
    const double coupling = p_.mass * g.sigma.dot(g.n) + p_.J_b / p_.r_b;
    Eigen::Matrix2d D;
    D(0, 0) = 2.0 * p_.mass * g.zeta_p * st;
    D(0, 1) = p_.mass * g.kappa * g.zeta_p * g.zeta_p * st -
              coupling * g.zeta_pp;
    D(1, 0) = D(0, 1);
    D(1, 1) = 2.0 * (p_.J_b / (p_.r_b * p_.r_b) + p_.mass) * g.zeta_p *
              g.zeta_pp;
    return D;
  }

  // Closed-form Coriolis matrix.  Under the curvature/normal orientation
  // fixed above, the curvature correction in c12 enters with a minus sign;
  // the generic C1+C2 construction pins this via the force-vector identity
  // C(q,qdot) qdot == (C1+C2)(q,qdot) qdot for all qdot.
  Eigen::Matrix2d coriolis_closed_form(const Eigen::Vector2d& q,
                                       const Eigen::Vector2d& qdot) const {
    const ButterflyGeometry g = geometry(q(1));
    const double thetadot = qdot(0), phidot = qdot(1);
    const double c11 = p_.mass * g.zeta_p * g.sigma.dot(g.tau);
    const double c12 =
        (p_.mass * g.sigma.dot(g.n) + p_.J_b / p_.r_b) * g.zeta_pp -
        c11 * g.kappa * g.zeta_p;
    Eigen::Matrix2d C;
    C(0, 0) = c11 * phidot;
    C(0, 1) = c11 * thetadot - c12 * phidot;
    C(1, 0) = -c11 * thetadot;
    C(1, 1) = (p_.J_b / (p_.r_b * p_.r_b) + p_.mass) * g.zeta_p * g.zeta_pp *
              phidot;
    return C;
  }

  // Gravity torque vector, gradient of m g * height of the ball center
  // (frame rotated by theta, gravity acting along -y).
  Eigen::Vector2d gravity(const Eigen::Vector2d& q) const {
    const ButterflyGeometry g = geometry(q(1));
    const Eigen::Vector2d gvec(0.0, p_.g);
    const double c = std::cos(q(0)), s = std::sin(q(0));
    Eigen::Matrix2d rot, drot;
    rot << c, -s, s, c;
    drot << -s, -c, c, -s;
    Eigen::Vector2d G;
    G(0) = p_.mass * gvec.dot(drot * g.sigma);
    G(1) = p_.mass * gvec.dot(rot * g.tau) * g.zeta_p;
    return G;
  }

  // Contact normal force on the ball from its Newton balance along the
  // world-frame normal Rot(theta) n; positive = contact maintained.
  double normal_force(const Eigen::Vector2d& q, const Eigen::Vector2d& qdot,
                      const Eigen::Vector2d& qddot) const {
    const ButterflyGeometry g = geometry(q(1));
    const double thetadot = qdot(0), phidot = qdot(1);
    const double thetaddot = qddot(0), phiddot = qddot(1);
    Eigen::Matrix2d J;
    J << 0, -1, 1, 0;
    const Eigen::Vector2d accel_frame =
        -thetadot * thetadot * g.sigma + thetaddot * (J * g.sigma) +
        2.0 * thetadot * phidot * (J * g.sigma_p) +
        phidot * phidot * g.sigma_pp + phiddot * g.sigma_p;
    const double c = std::cos(q(0)), s = std::sin(q(0));
    Eigen::Matrix2d rot;
    rot << c, -s, s, c;
    const double n_world_y = (rot * g.n)(1);
    return p_.mass * (g.n.dot(accel_frame) + p_.g * n_world_y);
  }

  MechanicalSystem mechanical_system() const {
    MechanicalSystem sys;
    sys.n_q = 2;
    sys.n_u = 1;
    ButterflyModel model = *this;
    sys.M = [model](const Eigen::VectorXd& q) -> Eigen::MatrixXd {
      return model.mass_matrix(q(1));
    };
    sys.G = [model](const Eigen::VectorXd& q) -> Eigen::VectorXd {
      return model.gravity(Eigen::Vector2d(q(0), q(1)));
    };
    sys.Bu = Eigen::MatrixXd::Zero(2, 1);
    sys.Bu(0, 0) = 1.0;
    sys.dM = {[](const Eigen::VectorXd&) -> Eigen::MatrixXd {
                return Eigen::Matrix2d::Zero();
              },
              [model](const Eigen::VectorXd& q) -> Eigen::MatrixXd {
                return model.mass_matrix_dphi(q(1));
              }};
    sys.C_closed_form = [model](const Eigen::VectorXd& q,
                                const Eigen::VectorXd& qdot) -> Eigen::MatrixXd {
      return model.coriolis_closed_form(Eigen::Vector2d(q(0), q(1)),
                                        Eigen::Vector2d(qdot(0), qdot(1)));
    };
    return sys;
  }

 private:
  ButterflyParams p_;
};

// Synchronization map for the rolling task: phi = s and theta is chosen so
// the ball-center tangent makes world angle Theta(s), i.e.
// theta = Theta(s) - psi(s).  Theta must support derivatives through order 2.
inline Synchronization butterfly_synchronization(const ButterflyModel& model,
                                                 const ScalarCurve& theta_profile) {
  Synchronization sync;
  sync.domain = theta_profile.domain();
  ButterflyModel m = model;
  ScalarCurve th = theta_profile;
  sync.Phi = [m, th](double s) -> Eigen::VectorXd {
    return Eigen::Vector2d(th.eval(s) - m.geometry(s).psi, s);
  };
  sync.dPhi = [m, th](double s) -> Eigen::VectorXd {
    return Eigen::Vector2d(th.derivative(s, 1) - m.geometry(s).psi_p, 1.0);
  };
  sync.ddPhi = [m, th](double s) -> Eigen::VectorXd {
    return Eigen::Vector2d(th.derivative(s, 2) - m.geometry(s).psi_pp, 0.0);
  };
  return sync;
}

}  // namespace ptpstab
