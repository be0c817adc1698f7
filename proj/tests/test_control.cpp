#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "magnav/control/allocation.hpp"
#include "magnav/control/pid.hpp"
#include "magnav/field/gradient5.hpp"

#include <random>

using namespace magnav;
using namespace magnav::control;
using magnav::field::DipoleCoil;
using magnav::field::DipoleMagnet;
using magnav::field::HelmholtzPair;
using magnav::field::MagneticSource;
using magnav::field::MaxwellPair;

namespace {

std::mt19937 rng(999);

Vec3 rand_vec(double s) {
  std::uniform_real_distribution<double> d(-s, s);
  return Vec3(d(rng), d(rng), d(rng));
}

// three Helmholtz + two Maxwell pairs on the lab axes, bench-top gains
// (a third orthogonal Maxwell pair would be redundant: traceless diagonal
// gradients span a two-dimensional space)
std::vector<MagneticSource> hm_system() {
  return {HelmholtzPair{Vec3::UnitX(), 8.90e-4, 0.375},
          HelmholtzPair{Vec3::UnitY(), 8.80e-4, 0.265},
          HelmholtzPair{Vec3::UnitZ(), 8.55e-4, 0.170},
          MaxwellPair{Vec3::UnitY(), 31.70e-4, 0.385},
          MaxwellPair{Vec3::UnitZ(), 180.0e-4, 0.280}};
}

}  // namespace

TEST_SUITE("pid") {
  TEST_CASE("zero error with zero history stays zero") {
    const auto r = pid_step(PidGains::uniform(3, 2, 1), Vec3::Zero(),
                            Vec3::Zero(), Vec3::Zero(), 0.01);
    CHECK(r.output.norm() == 0.0);
    CHECK(r.integral.norm() == 0.0);
  }

  TEST_CASE("pure proportional") {
    const auto r = pid_step(PidGains::uniform(2, 0, 0), Vec3(1, 0, 0),
                            Vec3::Zero(), Vec3::Zero(), 0.01);
    CHECK(r.output.x() == doctest::Approx(2.0));
    CHECK(r.output.y() == 0.0);
  }

  TEST_CASE("pure integral accumulates k steps of e dt") {
    PidController c(PidGains::uniform(0, 0.5, 0));
    const Vec3 e(0.2, -0.1, 0.3);
    Vec3 out = Vec3::Zero();
    const int k = 17;
    for (int i = 0; i < k; ++i) out = c.step(e, 0.01);
    CHECK((out - 0.5 * e * k * 0.01).norm() < 1e-15);
  }

  TEST_CASE("derivative acts on the error difference") {
    const auto r = pid_step(PidGains::uniform(0, 0, 0.4), Vec3(0.3, 0, 0),
                            Vec3(0.1, 0, 0), Vec3::Zero(), 0.01);
    CHECK(r.output.x() == doctest::Approx(0.4 * 0.2 / 0.01));
  }

  TEST_CASE("output is linear in the error history before clamping") {
    const PidGains g = PidGains::uniform(1.3, 0.7, 0.2, 1e9, 1e9);
    const Vec3 e1 = rand_vec(1), p1 = rand_vec(1), i1 = rand_vec(1);
    const Vec3 e2 = rand_vec(1), p2 = rand_vec(1), i2 = rand_vec(1);
    const double a = 0.37, b = -1.21;
    const auto ra = pid_step(g, e1, p1, i1, 0.02);
    const auto rb = pid_step(g, e2, p2, i2, 0.02);
    const auto rc = pid_step(g, a * e1 + b * e2, a * p1 + b * p2,
                             Vec3(a * i1 + b * i2), 0.02);
    CHECK((rc.output - (a * ra.output + b * rb.output)).norm() < 1e-12);
  }

  TEST_CASE("anti-windup clamps the integral and the output") {
    PidGains g = PidGains::uniform(0, 1, 0, 0.05, 0.03);
    PidController c(g);
    Vec3 out;
    for (int i = 0; i < 1000; ++i) out = c.step(Vec3(1, 0, 0), 0.01);
    CHECK(c.integral().x() == doctest::Approx(0.05));
    CHECK(out.x() == doctest::Approx(0.03));
  }

  TEST_CASE("gain validation") {
    PidGains g = PidGains::uniform(-1, 0, 0);
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    PidGains h = PidGains::uniform(1, 0, 0, -2);
    CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  }
}

TEST_SUITE("orientation error") {
  TEST_CASE("aligned, orthogonal, anti-parallel") {
    CHECK(orientation_error(Vec3(0, 0, 2), Vec3(0, 0, 5)).norm() == 0.0);

    const Vec3 e = orientation_error(Vec3::UnitX(), Vec3::UnitY());
    CHECK(e.x() == doctest::Approx(0.0));
    CHECK(e.y() == doctest::Approx(0.0));
    CHECK(e.z() == doctest::Approx(kPi / 2));

    const Vec3 anti = orientation_error(Vec3::UnitX(), Vec3(-1, 0, 0));
    CHECK(anti.norm() == doctest::Approx(kPi));
    const Vec3 anti2 = orientation_error(Vec3::UnitX(), Vec3(-1, 0, 0));
    CHECK((anti - anti2).norm() == 0.0);
    CHECK(std::abs(anti.dot(Vec3::UnitX())) < 1e-12);
  }

  TEST_CASE("rotating by the error carries m onto m*") {
    for (int k = 0; k < 30; ++k) {
      Vec3 m = rand_vec(1), t = rand_vec(1);
      if (m.norm() < 0.1 || t.norm() < 0.1) continue;
      const Vec3 e = orientation_error(m, t);
      const Vec3 rotated = exp_so3(e) * m.normalized();
      CHECK((rotated - t.normalized()).norm() < 1e-9);
    }
  }

  TEST_CASE("zero inputs refused") {
    CHECK_THROWS_AS(orientation_error(Vec3::Zero(), Vec3::UnitX()),
                    std::invalid_argument);
  }
}

TEST_SUITE("field helpers") {
  TEST_CASE("alignment command is the normalized passthrough") {
    const Vec3 axes[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    for (const Vec3& v : axes)
      CHECK((field_alignment_command(v) - v).norm() == 0.0);
    CHECK(field_alignment_command(Vec3(0, 0, 3)).z() == doctest::Approx(1.0));
    CHECK_THROWS_AS(field_alignment_command(Vec3::Zero()),
                    std::invalid_argument);
  }

  TEST_CASE("rolling field rotates in the plane orthogonal to the axis") {
    const Vec3 axis = rand_vec(1).normalized();
    const auto [e1, e2] = plane_basis(axis);
    const double f = 0.5, B = 2.9e-3;

    CHECK((rolling_field(axis, B, f, 0.0) - B * e1).norm() < 1e-15);
    CHECK((rolling_field(axis, B, f, 0.25 / f) - B * e2).norm() < 1e-12);

    for (int k = 0; k < 20; ++k) {
      std::uniform_real_distribution<double> d(0, 100);
      const Vec3 b = rolling_field(axis, B, f, d(rng));
      CHECK(std::abs(b.dot(axis)) < 1e-12);
      CHECK(b.norm() == doctest::Approx(B).epsilon(1e-12));
    }
    CHECK_THROWS_AS(rolling_field(Vec3(1, 1, 0), B, f, 0.0),
                    std::invalid_argument);
  }
}

TEST_SUITE("coil allocation") {
  TEST_CASE("single axial pair at its own gain gives unit current") {
    CapsuleTarget t;
    t.position = Vec3::Zero();
    t.moment_world = Vec3(0, 0, 0.253);
    t.field_direction = Vec3::UnitZ();
    t.field_magnitude = 8.55e-4;
    t.force = Vec3::Zero();
    const auto a = allocate_currents(
        {t}, {HelmholtzPair{Vec3::UnitZ(), 8.55e-4, 0.170}}, 0.0);
    REQUIRE(a.currents.size() == 1);
    CHECK(a.currents[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(a.report.singular);
  }

  TEST_CASE("bench system: feasible targets recover the generating currents") {
    const auto sources = hm_system();
    const MatX map = field::field_map_matrix(sources, Vec3::Zero());
    for (int k = 0; k < 20; ++k) {
      VecX I_true(5);
      for (int i = 0; i < 5; ++i) I_true[i] = rand_vec(2.0).x();
      const Vec3 m_r = rand_vec(0.3);
      if (m_r.norm() < 0.02) continue;
      const Eigen::Matrix<double, 8, 1> bg = map * I_true;
      const Vec3 b = bg.head<3>();
      if (b.norm() < 1e-5) continue;

      CapsuleTarget t;
      t.position = Vec3::Zero();
      t.moment_world = m_r;
      t.field_direction = b.normalized();
      t.field_magnitude = b.norm();
      t.force = field::magnetic_force(m_r, Eigen::Matrix<double, 5, 1>(bg.tail<5>()));
      const auto a = allocate_currents({t}, sources, 0.0);

      // six equations, five coils, rank five: the consistent system has a
      // unique least-squares solution, which must be the generating one
      REQUIRE(a.currents.size() == 5);
      CHECK((a.currents - I_true).norm() <= 1e-8 * I_true.norm());
    }
  }

  TEST_CASE("damping never increases the command norm") {
    const auto sources = hm_system();
    CapsuleTarget t;
    t.position = Vec3(0.01, -0.005, 0.02);
    t.moment_world = Vec3(0.1, 0.05, 0.2);
    t.field_direction = Vec3(1, 2, -1).normalized();
    t.field_magnitude = 2.4e-3;
    t.force = Vec3(1e-4, -2e-4, 5e-5);
    double prev = 1e300;
    for (double lambda : {0.0, 1e-4, 1e-2, 1e-1, 1.0}) {
      const auto a = allocate_currents({t}, sources, lambda);
      CHECK(a.currents.norm() <= prev + 1e-15);
      prev = a.currents.norm();
    }
  }

  TEST_CASE("current limits clamp and report saturation") {
    CapsuleTarget t;
    t.position = Vec3::Zero();
    t.moment_world = Vec3(0, 0, 0.253);
    t.field_direction = Vec3::UnitZ();
    t.field_magnitude = 8.55e-3;  // ten times the per-amp gain
    t.control_force = false;
    VecX limits(1);
    limits << 2.0;
    const auto a = allocate_currents(
        {t}, {HelmholtzPair{Vec3::UnitZ(), 8.55e-4, 0.170}}, 0.0, limits);
    CHECK(a.currents[0] == doctest::Approx(2.0));
    CHECK(a.report.saturated);
    REQUIRE(a.report.saturated_indices.size() == 1);
    CHECK(a.report.saturated_indices[0] == 0);
  }

  TEST_CASE("undamped solve on redundant coaxial pairs throws") {
    CapsuleTarget t;
    t.position = Vec3::Zero();
    t.moment_world = Vec3(0, 0, 0.253);
    t.field_direction = Vec3::UnitX();
    t.field_magnitude = 1e-3;
    t.control_force = false;
    std::vector<MagneticSource> redundant{
        HelmholtzPair{Vec3::UnitZ(), 8.55e-4, 0.170},
        HelmholtzPair{Vec3::UnitZ(), 8.55e-4, 0.170}};
    CHECK_THROWS_WITH_AS(allocate_currents({t}, redundant, 0.0),
                         doctest::Contains("allocation singular"),
                         std::runtime_error);
  }
}

TEST_SUITE("magnet allocation") {
  TEST_CASE("analytic Jacobian matches central differences") {
    for (int k = 0; k < 10; ++k) {
      DipoleMagnet mag;
      mag.pose.position = Vec3(0.05, 0.02, -0.15) + 0.02 * rand_vec(1);
      mag.pose.orientation = exp_quat(rand_vec(1.0));
      mag.moment = Vec3(0, 0, 17.5);
      CapsuleTarget t;
      t.position = 0.03 * rand_vec(1);
      t.moment_world = 0.253 * rand_vec(1).normalized();
      const MatX Ja = magnet_step_jacobian({t}, mag);
      const MatX Jf = magnet_step_jacobian_fd({t}, {mag});
      CHECK((Ja - Jf).norm() < 1e-5 * Ja.norm());
    }
  }

  TEST_CASE("repeated damped steps align the field with the request") {
    DipoleMagnet mag;
    mag.pose.position = Vec3(0, 0, -0.15);
    mag.moment = Vec3(0, 0, 17.5);
    CapsuleTarget t;
    t.position = Vec3::Zero();
    t.moment_world = Vec3(0, 0, 0.253);
    t.field_direction = Vec3(1, 0, 1).normalized();
    t.control_force = false;

    double prev_err = 1e300;
    std::vector<field::DipoleMagnet> mags{mag};
    for (int it = 0; it < 60; ++it) {
      const auto step = allocate_magnet_step({t}, mags, 1e-4);
      mags[0].pose = step.poses[0];
      Vec3 b = field::dipole_field(
          Vec3(t.position - mags[0].pose.position),
          Vec3(mags[0].pose.orientation * mags[0].moment));
      const double err = (b.normalized() - t.field_direction).norm();
      CHECK(err <= prev_err + 1e-12);
      prev_err = err;
    }
    CHECK(prev_err < 1e-3);
  }

  TEST_CASE("step limits clip the pose increment and report saturation") {
    DipoleMagnet mag;
    mag.pose.position = Vec3(0, 0, -0.15);
    mag.moment = Vec3(0, 0, 17.5);
    CapsuleTarget t;
    t.position = Vec3::Zero();
    t.moment_world = Vec3(0, 0, 0.253);
    t.field_direction = Vec3::UnitX();
    t.control_force = false;

    PmStepLimits limits;
    limits.max_position_step = 1e-6;
    limits.max_rotation_step = 1e-6;
    const auto step = allocate_magnet_step({t}, {mag}, 1e-4, limits);
    CHECK(step.report.saturated);
    CHECK((step.poses[0].position - mag.pose.position).norm() <= 1e-6 + 1e-15);
  }

  TEST_CASE("dual magnets also converge via the finite-difference path") {
    std::vector<field::DipoleMagnet> mags(2);
    mags[0].pose.position = Vec3(0.0, 0.18, 0.0);
    mags[0].moment = Vec3(0, 0, 17.5);
    mags[1].pose.position = Vec3(0.0, -0.18, 0.05);
    mags[1].moment = Vec3(0, 0, 17.5);

    CapsuleTarget t;
    t.position = Vec3::Zero();
    t.moment_world = Vec3(0, 0, 0.253);
    t.field_direction = Vec3(0, 1, 2).normalized();
    t.force = Vec3::Zero();

    double err = 1e300;
    for (int it = 0; it < 80; ++it) {
      const auto step = allocate_magnet_step({t}, mags, 1e-3);
      for (size_t j = 0; j < mags.size(); ++j) mags[j].pose = step.poses[j];
      Vec3 b = Vec3::Zero();
      for (const auto& m : mags)
        b += field::dipole_field(Vec3(t.position - m.pose.position),
                                 Vec3(m.pose.orientation * m.moment));
      err = (b.normalized() - t.field_direction).norm();
    }
    CHECK(err < 1e-2);
  }
}

TEST_SUITE("continuum allocation") {
  TEST_CASE("zero torque request yields zero current") {
    const auto a = allocate_continuum_currents(Vec3::Zero(), Vec3(0, 0, 0.025),
                                               Vec3::Zero(), hm_system(), 0.0);
    CHECK(a.currents.norm() == 0.0);
    CHECK(a.report.dropped_torque == 0.0);
  }

  TEST_CASE("torque along the moment axis is dropped and reported") {
    const Vec3 m(0, 0, 0.025);
    const auto a = allocate_continuum_currents(Vec3(0, 0, 3e-5), m,
                                               Vec3::Zero(), hm_system(), 0.0);
    CHECK(a.currents.norm() < 1e-9);
    CHECK(a.report.dropped_torque == doctest::Approx(3e-5));
  }

  TEST_CASE("attainable part of a random torque is reproduced") {
    std::vector<MagneticSource> coils{HelmholtzPair{Vec3::UnitX(), 1.0, 1.0},
                                      HelmholtzPair{Vec3::UnitY(), 1.0, 1.0},
                                      HelmholtzPair{Vec3::UnitZ(), 1.0, 1.0}};
    const Vec3 m = Vec3::UnitZ();
    for (int k = 0; k < 20; ++k) {
      const Vec3 tau = rand_vec(1.0);
      const auto a = allocate_continuum_currents(tau, m, Vec3::Zero(), coils, 0.0);
      const Vec3 b(a.currents[0], a.currents[1], a.currents[2]);
      const Vec3 achieved = m.cross(b);
      const Vec3 attainable = tau - tau.dot(m) * m;
      CHECK((achieved - attainable).norm() < 1e-10);
      CHECK(a.report.dropped_torque ==
            doctest::Approx(std::abs(tau.z())).epsilon(1e-9));
    }
  }

  TEST_CASE("zero-force rows hold the magnetic force down") {
    // ring of dipole coils: fields and gradients both nonzero
    std::vector<MagneticSource> ring;
    for (int k = 0; k < 8; ++k) {
      const double ang = 2.0 * kPi * k / 8.0;
      DipoleCoil c;
      c.pose.position =
          Vec3(0.2 * std::cos(ang), 0.2 * std::sin(ang), (k % 2) ? 0.06 : -0.06);
      c.pose.orientation = Quat::FromTwoVectors(Vec3::UnitZ(), -c.pose.position);
      c.moment_per_amp = Vec3(0, 0, 20.0);
      ring.push_back(c);
    }
    const Vec3 m(0, 0, 0.025);
    const Vec3 tau(2e-5, -1e-5, 0);
    const auto a =
        allocate_continuum_currents(tau, m, Vec3::Zero(), ring, 0.0, true);
    const MatX map = field::field_map_matrix(ring, Vec3::Zero());
    const Eigen::Matrix<double, 8, 1> bg = map * a.currents;
    const Vec3 achieved_tau = m.cross(Vec3(bg.head<3>()));
    const Vec3 achieved_f =
        field::magnetic_force(m, Eigen::Matrix<double, 5, 1>(bg.tail<5>()));
    CHECK((achieved_tau - tau).norm() < 1e-9 * tau.norm());
    CHECK(achieved_f.norm() < 1e-12);
  }

  TEST_CASE("undamped solve with no usable coil throws with the direction") {
    // moment along z: torque about x needs a y field, which neither a z
    // coil nor an x coil can produce
    std::vector<MagneticSource> partial{HelmholtzPair{Vec3::UnitZ(), 1.0, 1.0},
                                        HelmholtzPair{Vec3::UnitX(), 1.0, 1.0}};
    CHECK_THROWS_WITH_AS(
        allocate_continuum_currents(Vec3(1e-5, 0, 0), Vec3::UnitZ(),
                                    Vec3::Zero(), partial, 0.0),
        doctest::Contains("allocation singular"), std::runtime_error);

    // coaxial pairs aligned with the moment produce no torque at all
    std::vector<MagneticSource> useless{HelmholtzPair{Vec3::UnitZ(), 1.0, 1.0},
                                        HelmholtzPair{Vec3::UnitZ(), 0.5, 1.0}};
    CHECK_THROWS_WITH_AS(
        allocate_continuum_currents(Vec3(1e-5, 0, 0), Vec3::UnitZ(),
                                    Vec3::Zero(), useless, 0.0),
        doctest::Contains("torque x"), std::runtime_error);
  }

  TEST_CASE("magnet pose steps walk the tip torque to the request") {
    std::vector<field::DipoleMagnet> mags(1);
    mags[0].pose.position = Vec3(0, 0.15, 0.02);
    mags[0].moment = Vec3(0, 0, 17.5);
    const Vec3 m(0, 0, 0.025);
    const Vec3 p(0.0, 0.0, 0.0);
    const Vec3 tau(1.2e-5, -0.4e-5, 0);  // orthogonal to m

    // clip each increment the way a servo loop would; unclipped Newton
    // steps overshoot badly this far from the linearization point
    PmStepLimits limits;
    limits.max_position_step = 2e-3;
    limits.max_rotation_step = 0.02;

    Vec3 achieved = Vec3::Zero();
    for (int it = 0; it < 200; ++it) {
      const auto step =
          allocate_continuum_magnet_step(tau, m, p, mags, 1e-4, false, limits);
      mags[0].pose = step.poses[0];
      const Vec3 b = field::dipole_field(
          Vec3(p - mags[0].pose.position),
          Vec3(mags[0].pose.orientation * mags[0].moment));
      achieved = m.cross(b);
    }
    CHECK((achieved - tau).norm() < 1e-6 * tau.norm());
  }
}
