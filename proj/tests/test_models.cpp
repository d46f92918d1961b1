#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ptpstab/butterfly.hpp"
#include "ptpstab/common.hpp"
#include "ptpstab/mechanics.hpp"
#include "ptpstab/quadrature.hpp"
#include "ptpstab/system.hpp"

using namespace ptpstab;

namespace {

// Independent finite-difference derivative of a scalar function of phi.
template <typename F>
double fd1(F&& f, double x, double h = 1e-6) {
  return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) /
         (12.0 * h);
}

// Synthetic 3-dof system with a configuration-dependent inertia, used to
// exercise the generic Coriolis construction away from the concrete models.
MechanicalSystem synthetic_three_dof() {
  MechanicalSystem sys;
  sys.n_q = 3;
  sys.n_u = 2;
  sys.M = [](const VectorXd& q) {
    MatrixXd M(3, 3);
    M << 2.0 + std::sin(q(0)) * std::sin(q(0)), 0.3 * std::cos(q(1)), 0.1,
        0.3 * std::cos(q(1)), 1.5 + 0.2 * q(2) * q(2), 0.05 * std::sin(q(0)),
        0.1, 0.05 * std::sin(q(0)), 1.0 + 0.1 * std::cos(q(2));
    return M;
  };
  sys.G = [](const VectorXd& q) {
    VectorXd G(3);
    G << std::sin(q(0)), std::sin(q(1)), 0.5 * q(2);
    return G;
  };
  sys.Bu = MatrixXd::Zero(3, 2);
  sys.Bu(0, 0) = 1.0;
  sys.Bu(1, 1) = 1.0;
  return sys;
}

}  // namespace

TEST_CASE("generic coriolis basics") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);

  SECTION("constant inertia gives vanishing C1 and C2") {
    MechanicalSystem di = double_integrator();
    VectorXd q(1), qd(1);
    q << 0.37;
    qd << -2.1;
    CHECK(coriolis_c1(di, q, qd).norm() == 0.0);
    CHECK(coriolis_c2(di, q, qd).norm() == 0.0);
  }

  SECTION("quadratic-form identity between the two Coriolis pieces") {
    MechanicalSystem sys = synthetic_three_dof();
    for (int trial = 0; trial < 25; ++trial) {
      VectorXd q(3), qd(3);
      for (int i = 0; i < 3; ++i) {
        q(i) = dist(rng);
        qd(i) = 2.0 * dist(rng);
      }
      double lhs = qd.dot(coriolis_c2(sys, q, qd) * qd);
      double rhs = -0.5 * qd.dot(coriolis_c1(sys, q, qd) * qd);
      CHECK(std::abs(lhs - rhs) < 1e-8 * (1.0 + std::abs(rhs)));
    }
  }

  SECTION("power balance: qd' (dM/dt - 2 C) qd = 0 along any velocity") {
    // dM/dt = C1 by construction, so qd'(C1 - 2(C1+C2))qd = -qd'C1 qd - 2qd'C2 qd = 0.
    MechanicalSystem sys = synthetic_three_dof();
    for (int trial = 0; trial < 10; ++trial) {
      VectorXd q(3), qd(3);
      for (int i = 0; i < 3; ++i) {
        q(i) = dist(rng);
        qd(i) = dist(rng);
      }
      MatrixXd C = coriolis(sys, q, qd);
      MatrixXd Mdot = coriolis_c1(sys, q, qd);
      double val = qd.dot((Mdot - 2.0 * C) * qd);
      CHECK(std::abs(val) < 1e-8 * (1.0 + qd.squaredNorm()));
    }
  }
}

TEST_CASE("control-affine conversion") {
  SECTION("double integrator first-order form") {
    ControlAffineSystem sys = to_control_affine(double_integrator());
    REQUIRE(sys.n == 2);
    REQUIRE(sys.m == 1);
    VectorXd x(2), u(1);
    x << 0.3, -1.7;
    u << 0.9;
    VectorXd fx = sys.f(x);
    CHECK(fx(0) == Catch::Approx(-1.7));
    CHECK(fx(1) == Catch::Approx(0.0).margin(1e-15));
    MatrixXd B = sys.B(x);
    CHECK(B(0, 0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(B(1, 0) == Catch::Approx(1.0));
    VectorXd dx = sys.rhs(x, u);
    CHECK(dx(1) == Catch::Approx(0.9));
  }

  SECTION("forward dynamics matches the manipulator equation") {
    MechanicalSystem sys = synthetic_three_dof();
    VectorXd q(3), qd(3), u(2);
    q << 0.2, -0.4, 0.7;
    qd << 1.0, 0.3, -0.6;
    u << 0.5, -0.2;
    VectorXd acc = forward_dynamics(sys, q, qd, u);
    VectorXd residual =
        sys.M(q) * acc + coriolis(sys, q, qd) * qd + sys.G(q) - sys.Bu * u;
    CHECK(residual.norm() < 1e-10);
  }

  SECTION("singular inertia is rejected") {
    MechanicalSystem bad;
    bad.n_q = 2;
    bad.n_u = 1;
    bad.M = [](const VectorXd&) {
      MatrixXd M(2, 2);
      M << 1.0, 1.0, 1.0, 1.0;
      return M;
    };
    bad.G = [](const VectorXd&) { return VectorXd::Zero(2); };
    bad.Bu = MatrixXd::Zero(2, 1);
    bad.Bu(0, 0) = 1.0;
    ControlAffineSystem ca = to_control_affine(bad);
    VectorXd x = VectorXd::Zero(4);
    CHECK_THROWS_AS(ca.f(x), Error);
  }
}

TEST_CASE("offset-curve geometry degenerate shapes") {
  SECTION("constant radius: circular ball-center curve") {
    // r = const traversed clockwise: curvature -1/r, offset curve is the
    // concentric circle of radius r + r_b.
    const double r0 = 0.12, r_b = 0.01;
    for (double phi : {-0.4, 0.0, 0.8, 1.9}) {
      PolarProfile prof;
      prof.r = r0;
      ButterflyGeometry g = offset_curve_geometry(phi, prof, r_b);
      CHECK(g.kappa_f == Catch::Approx(-1.0 / r0).epsilon(1e-12));
      CHECK(g.kappa == Catch::Approx(-1.0 / (r0 + r_b)).epsilon(1e-12));
      CHECK(g.kappa_p == Catch::Approx(0.0).margin(1e-12));
      CHECK(g.zeta_p == Catch::Approx(r0 + r_b).epsilon(1e-12));
      CHECK(g.zeta_pp == Catch::Approx(0.0).margin(1e-12));
      CHECK(g.psi == Catch::Approx(-phi).epsilon(1e-12));
      CHECK(g.sigma.norm() == Catch::Approx(r0 + r_b).epsilon(1e-12));
    }
  }

  SECTION("r = c / cos(phi): straight edge, psi identically zero") {
    const double c = 0.1, r_b = 0.012;
    for (double phi : {-0.6, -0.1, 0.3, 0.9}) {
      PolarProfile prof;
      const double sec = 1.0 / std::cos(phi), t = std::tan(phi);
      prof.r = c * sec;
      prof.r_p = c * sec * t;
      prof.r_pp = c * sec * (1.0 + 2.0 * t * t);
      prof.r_ppp = c * sec * t * (5.0 + 6.0 * t * t);
      ButterflyGeometry g = offset_curve_geometry(phi, prof, r_b);
      CHECK(std::abs(g.psi) < 1e-12);
      CHECK(std::abs(g.kappa_f) < 1e-9);
      CHECK(std::abs(g.kappa) < 1e-9);
      // The edge is the horizontal line y = c; the ball center rides at
      // height c + r_b.
      CHECK(g.contact(1) == Catch::Approx(c).epsilon(1e-12));
      CHECK(g.sigma(1) == Catch::Approx(c + r_b).epsilon(1e-12));
      CHECK(g.tau(1) == Catch::Approx(0.0).margin(1e-12));
    }
  }

  SECTION("curvature equals turning rate per unit arc at phi = 0") {
    ButterflyParams prm;
    prm.a = 0.1095;
    prm.b = 0.0405;
    ButterflyModel model(prm);
    auto psi_of = [&](double phi) { return model.geometry(phi).psi; };
    ButterflyGeometry g0 = model.geometry(0.0);
    double dpsi_dzeta = fd1(psi_of, 0.0) / g0.zeta_p;
    CHECK(std::abs(dpsi_dzeta - g0.kappa) < 1e-8);
  }
}

TEST_CASE("butterfly geometry internal consistency") {
  ButterflyModel model;
  const Interval arc = model.params().working_arc;
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> phi_dist(arc.s_alpha + 0.05,
                                                  arc.s_omega - 0.05);

  SECTION("hand-derived values at the bottom of the frame") {
    ButterflyGeometry g = model.geometry(0.0);
    CHECK(g.r == Catch::Approx(0.075).epsilon(1e-12));
    CHECK(g.kappa_f == Catch::Approx(14.4).epsilon(1e-3));
    CHECK(g.zeta_p == Catch::Approx(0.063228).epsilon(1e-4));
    CHECK(g.psi == Catch::Approx(0.0).margin(1e-14));
    CHECK(g.tau(0) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(g.n(1) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(model.params().r_b * g.kappa_f < 1.0);
  }

  SECTION("analytic phi-derivatives agree with finite differences") {
    for (int trial = 0; trial < 20; ++trial) {
      double phi = phi_dist(rng);
      ButterflyGeometry g = model.geometry(phi);
      auto sigma_x = [&](double p) { return model.geometry(p).sigma(0); };
      auto sigma_y = [&](double p) { return model.geometry(p).sigma(1); };
      auto sigp_x = [&](double p) { return model.geometry(p).sigma_p(0); };
      auto sigp_y = [&](double p) { return model.geometry(p).sigma_p(1); };
      auto psi_of = [&](double p) { return model.geometry(p).psi; };
      auto psip_of = [&](double p) { return model.geometry(p).psi_p; };
      auto ellp_of = [&](double p) { return model.geometry(p).ell_p; };
      auto kf_of = [&](double p) { return model.geometry(p).kappa_f; };
      auto k_of = [&](double p) { return model.geometry(p).kappa; };
      auto zp_of = [&](double p) { return model.geometry(p).zeta_p; };

      const double scale = 1.0 + std::abs(g.kappa_f_p);
      CHECK(std::abs(fd1(sigma_x, phi) - g.sigma_p(0)) < 1e-6 * (1 + std::abs(g.sigma_p(0))));
      CHECK(std::abs(fd1(sigma_y, phi) - g.sigma_p(1)) < 1e-6 * (1 + std::abs(g.sigma_p(1))));
      CHECK(std::abs(fd1(sigp_x, phi) - g.sigma_pp(0)) < 1e-6 * (1 + std::abs(g.sigma_pp(0))));
      CHECK(std::abs(fd1(sigp_y, phi) - g.sigma_pp(1)) < 1e-6 * (1 + std::abs(g.sigma_pp(1))));
      CHECK(std::abs(fd1(psi_of, phi) - g.psi_p) < 1e-6 * (1 + std::abs(g.psi_p)));
      CHECK(std::abs(fd1(psip_of, phi) - g.psi_pp) < 1e-6 * (1 + std::abs(g.psi_pp)));
      CHECK(std::abs(fd1(ellp_of, phi) - g.ell_pp) < 1e-6 * (1 + std::abs(g.ell_pp)));
      CHECK(std::abs(fd1(kf_of, phi) - g.kappa_f_p) < 1e-6 * scale);
      CHECK(std::abs(fd1(k_of, phi) - g.kappa_p) < 1e-6 * (1 + std::abs(g.kappa_p)));
      CHECK(std::abs(fd1(zp_of, phi) - g.zeta_pp) < 1e-6 * (1 + std::abs(g.zeta_pp)));
    }
  }

  SECTION("turning angle and arc length recovered by quadrature") {
    const double lo = 0.1, hi = 1.9;
    double dpsi = integrate_adaptive(
        [&](double p) {
          ButterflyGeometry g = model.geometry(p);
          return g.kappa * g.zeta_p;
        },
        lo, hi, 1e-12);
    CHECK(std::abs(dpsi - (model.geometry(hi).psi - model.geometry(lo).psi)) <
          1e-7);

    // Ball-center arc length two ways: integral of zeta' vs integral of the
    // finite-difference speed of sigma.
    double len_analytic = integrate_adaptive(
        [&](double p) { return model.geometry(p).zeta_p; }, lo, hi, 1e-12);
    double len_fd = integrate_adaptive(
        [&](double p) {
          auto sx = [&](double t) { return model.geometry(t).sigma(0); };
          auto sy = [&](double t) { return model.geometry(t).sigma(1); };
          return std::hypot(fd1(sx, p), fd1(sy, p));
        },
        lo, hi, 1e-10);
    CHECK(std::abs(len_analytic - len_fd) < 1e-7);
  }

  SECTION("contact regularity margin is positive on the working arc") {
    double margin = model.contact_regularity_margin();
    CHECK(margin > 0.0);
    CHECK(margin < 1.0);
  }
}

TEST_CASE("butterfly dynamics") {
  ButterflyModel model;
  MechanicalSystem sys = model.mechanical_system();
  const Interval arc = model.params().working_arc;
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> phi_dist(arc.s_alpha, arc.s_omega);
  std::uniform_real_distribution<double> theta_dist(-3.0, 3.0);
  std::uniform_real_distribution<double> vel_dist(-2.0, 2.0);

  SECTION("input matrix actuates only the frame") {
    REQUIRE(sys.Bu.rows() == 2);
    CHECK(sys.Bu(0, 0) == 1.0);
    CHECK(sys.Bu(1, 0) == 0.0);
  }

  SECTION("inertia matrix symmetric positive definite across the arc") {
    for (int trial = 0; trial < 100; ++trial) {
      double phi = phi_dist(rng);
      Eigen::Matrix2d M = model.mass_matrix(phi);
      CHECK(M(0, 1) == M(1, 0));
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
  }

  SECTION("closed-form Coriolis matches the generic construction as a force") {
    for (int trial = 0; trial < 100; ++trial) {
      VectorXd q(2), qd(2);
      q << theta_dist(rng), phi_dist(rng);
      qd << vel_dist(rng), vel_dist(rng);
      VectorXd closed = sys.C_closed_form(q, qd) * qd;
      VectorXd generic = coriolis(sys, q, qd) * qd;
      CHECK((closed - generic).norm() < 1e-6 * (1.0 + generic.norm()));
    }
  }

  SECTION("analytic inertia partials agree with finite differences") {
    MechanicalSystem fd_sys = sys;
    fd_sys.dM.clear();  // forces the finite-difference path
    for (int trial = 0; trial < 20; ++trial) {
      VectorXd q(2), qd(2);
      q << theta_dist(rng), phi_dist(rng);
      qd << vel_dist(rng), vel_dist(rng);
      MatrixXd C_analytic = coriolis(sys, q, qd);
      MatrixXd C_fd = coriolis(fd_sys, q, qd);
      CHECK((C_analytic - C_fd).norm() < 1e-5 * (1.0 + C_fd.norm()));
    }
  }

  SECTION("gravity vanishes where the ball-center tangent is level") {
    for (double phi : {0.0, 0.5, 1.3, 2.0}) {
      double theta = -model.geometry(phi).psi;  // world tangent angle zero
      Eigen::Vector2d G = model.gravity(Eigen::Vector2d(theta, phi));
      // Second component is m g zeta' sin(world tangent angle).
      CHECK(std::abs(G(1)) < 1e-12);
    }
    // At the bottom configuration both components vanish: the ball center
    // sits directly above the pivot.
    Eigen::Vector2d G0 = model.gravity(Eigen::Vector2d(0.0, 0.0));
    CHECK(G0.norm() < 1e-12);
  }

  SECTION("boundary configurations admit balancing inputs") {
    // Contact angles 0 and 2 with the frame turned so the tangent is level.
    for (double phi : {0.0, 2.0}) {
      double theta = -model.geometry(phi).psi;
      VectorXd q(2);
      q << theta, phi;
      auto [u, residual] = equilibrium_control(sys, q);
      CHECK(residual < 1e-8);
      ControlAffineSystem ca = to_control_affine(sys);
      VectorXd x(4);
      x << q, 0.0, 0.0;
      CHECK(ca.rhs(x, u).norm() < 1e-8);
    }
    // The frame angle that levels the tangent at contact angle 2.
    CHECK(-model.geometry(2.0).psi == Catch::Approx(2.4005).margin(5e-4));
  }

  SECTION("normal force at rest equals the ball weight") {
    Eigen::Vector2d q(0.0, 0.0), zero(0.0, 0.0);
    double fn = model.normal_force(q, zero, zero);
    CHECK(fn == Catch::Approx(model.params().mass * model.params().g)
                    .epsilon(1e-12));
  }

  SECTION("inverted frame at rest reports contact loss") {
    Eigen::Vector2d q(M_PI, 0.0), zero(0.0, 0.0);
    CHECK(model.normal_force(q, zero, zero) < 0.0);
  }

  SECTION("normal force consistent with simulated contact acceleration") {
    // Spin the frame and check the ball-center radial balance using the
    // model's own forward dynamics for qddot.
    VectorXd q(2), qd(2), u(1);
    q << 0.2, 0.7;
    qd << 0.8, -0.4;
    u << 1e-3;
    VectorXd qdd = forward_dynamics(sys, q, qd, u);
    double fn = model.normal_force(Eigen::Vector2d(q(0), q(1)),
                                   Eigen::Vector2d(qd(0), qd(1)),
                                   Eigen::Vector2d(qdd(0), qdd(1)));
    CHECK(std::isfinite(fn));
    // Independent check: world-frame ball acceleration dotted with the world
    // normal must equal (fn/m - g n_world_y).
    auto center_world = [&](double t_theta, double t_phi) {
      Eigen::Matrix2d rot;
      rot << std::cos(t_theta), -std::sin(t_theta), std::sin(t_theta),
          std::cos(t_theta);
      return (rot * model.geometry(t_phi).sigma).eval();
    };
    const double h = 1e-5;
    // Second-order in time along the trajectory defined by (q, qd, qdd).
    auto pos_at = [&](double dt) {
      Eigen::Vector2d qq = q + dt * qd + 0.5 * dt * dt * qdd;
      return center_world(qq(0), qq(1));
    };
    Eigen::Vector2d acc =
        (pos_at(h) - 2.0 * pos_at(0.0) + pos_at(-h)) / (h * h);
    Eigen::Matrix2d rot;
    rot << std::cos(q(0)), -std::sin(q(0)), std::sin(q(0)), std::cos(q(0));
    Eigen::Vector2d n_world = rot * model.geometry(q(1)).n;
    double fn_indep = model.params().mass *
                      (acc.dot(n_world) + model.params().g * n_world(1));
    CHECK(fn == Catch::Approx(fn_indep).margin(1e-4 * (1.0 + std::abs(fn))));
  }
}

TEST_CASE("jacobians and equilibrium linearization") {
  SECTION("double integrator Jacobian is the shift matrix") {
    ControlAffineSystem sys = to_control_affine(double_integrator());
    VectorXd x(2), u(1);
    x << 0.4, -0.2;
    u << 1.3;
    MatrixXd A = jacobian_A(sys, x, u);
    MatrixXd expected(2, 2);
    expected << 0, 1, 0, 0;
    CHECK((A - expected).norm() < 1e-9);
  }

  SECTION("linear drift recovers its own matrix") {
    MatrixXd M(3, 3);
    M << 0.2, -1.0, 0.5, 0.7, 0.1, -0.3, 0.0, 0.4, -0.9;
    ControlAffineSystem sys;
    sys.n = 3;
    sys.m = 1;
    sys.f = [M](const VectorXd& x) -> VectorXd { return M * x; };
    sys.B = [](const VectorXd&) -> MatrixXd {
      return MatrixXd::Zero(3, 1);
    };
    VectorXd x(3), u(1);
    x << 1.0, -2.0, 0.5;
    u << 0.0;
    CHECK((jacobian_A(sys, x, u) - M).norm() < 1e-8);
  }

  SECTION("analytic Jacobian is preferred and cross-checks against FD") {
    ControlAffineSystem sys;
    sys.n = 2;
    sys.m = 1;
    sys.f = [](const VectorXd& x) -> VectorXd {
      VectorXd v(2);
      v << x(1), std::sin(x(0)) - 0.3 * x(1);
      return v;
    };
    sys.B = [](const VectorXd& x) -> MatrixXd {
      MatrixXd B(2, 1);
      B << 0.0, 1.0 + 0.1 * x(0) * x(0);
      return B;
    };
    sys.analytic_jacobian = [](const VectorXd& x,
                               const VectorXd& u) -> MatrixXd {
      MatrixXd A(2, 2);
      A << 0, 1, std::cos(x(0)) + 0.2 * x(0) * u(0), -0.3;
      return A;
    };
    VectorXd x(2), u(1);
    x << 0.7, -0.4;
    u << 0.5;
    MatrixXd A = jacobian_A(sys, x, u);
    MatrixXd A_fd = jacobian_A_fd(sys, x, u);
    CHECK((A - A_fd).norm() < 1e-5 * (1.0 + A.norm()));
  }

  SECTION("double integrator equilibrium is controllable") {
    ControlAffineSystem sys = to_control_affine(double_integrator());
    EquilibriumLinearization lin = linearize_equilibrium(
        sys, VectorXd::Zero(2), VectorXd::Zero(1));
    CHECK(lin.controllable);
    CHECK(lin.ctrb_rank == 2);
    CHECK(lin.B(1, 0) == Catch::Approx(1.0));
  }

  SECTION("non-equilibrium point is rejected") {
    ControlAffineSystem sys = to_control_affine(double_integrator());
    VectorXd x(2), u(1);
    x << 0.0, 1.0;  // nonzero velocity: not an equilibrium
    u << 0.0;
    CHECK_THROWS_AS(linearize_equilibrium(sys, x, u), Error);
  }

  SECTION("butterfly boundary equilibria are linearly controllable") {
    ButterflyModel model;
    ControlAffineSystem ca = to_control_affine(model.mechanical_system());
    MechanicalSystem mech = model.mechanical_system();
    for (double phi : {0.0, 2.0}) {
      double theta = -model.geometry(phi).psi;
      VectorXd q(2);
      q << theta, phi;
      auto [u, residual] = equilibrium_control(mech, q);
      REQUIRE(residual < 1e-10);
      VectorXd x(4);
      x << q, 0.0, 0.0;
      EquilibriumLinearization lin = linearize_equilibrium(ca, x, u);
      CHECK(lin.ctrb_rank == 4);
      CHECK(lin.controllable);
      // Kinematic block: upper half of A is [0 I].
      CHECK(lin.A.topLeftCorner(2, 2).norm() < 1e-6);
      CHECK((lin.A.topRightCorner(2, 2) - MatrixXd::Identity(2, 2)).norm() <
            1e-6);
    }
  }
}

TEST_CASE("butterfly synchronization map") {
  ButterflyModel model;
  Interval dom{0.0, 2.0};

  SECTION("level profile aligns the tangent with the horizon") {
    ScalarCurve zero = ScalarCurve::constant(0.0, dom);
    Synchronization sync = butterfly_synchronization(model, zero);
    for (double s : {0.0, 0.5, 1.0, 1.7, 2.0}) {
      VectorXd Phi = sync.Phi(s);
      CHECK(Phi(1) == Catch::Approx(s).margin(1e-14));
      CHECK(Phi(0) == Catch::Approx(-model.geometry(s).psi).margin(1e-12));
      // World tangent angle psi + theta must vanish.
      Eigen::Vector2d G = model.gravity(Eigen::Vector2d(Phi(0), Phi(1)));
      CHECK(std::abs(G(1)) < 1e-12);
    }
  }

  SECTION("synchronization derivatives match finite differences") {
    // Quartic tilt profile vanishing at both ends of the domain.
    VectorXd coef(5);
    coef << 0.0, 0.0112, -0.0167, 0.0049, 0.0002;
    ScalarCurve theta = ScalarCurve::polynomial(coef, dom);
    Synchronization sync = butterfly_synchronization(model, theta);
    for (double s : {0.15, 0.6, 1.1, 1.55, 1.9}) {
      auto phi0 = [&](double t) { return sync.Phi(t)(0); };
      auto dphi0 = [&](double t) { return sync.dPhi(t)(0); };
      CHECK(std::abs(fd1(phi0, s) - sync.dPhi(s)(0)) < 1e-6);
      CHECK(std::abs(fd1(dphi0, s) - sync.ddPhi(s)(0)) < 1e-6);
      CHECK(sync.dPhi(s)(1) == Catch::Approx(1.0));
      CHECK(sync.ddPhi(s)(1) == Catch::Approx(0.0).margin(1e-15));
    }
  }
}
