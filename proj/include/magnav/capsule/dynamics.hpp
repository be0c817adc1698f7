#pragma once

// Rigid-body capsule under magnetic wrench, gravity and contact loads.
// Newton for translation, body-frame Euler equation for rotation, advanced
// by a symplectic step with a midpoint stage on the angular velocity (the
// plain explicit gyroscopic term drifts energy at tumbling rates).

#include "magnav/core.hpp"
#include "magnav/field/gradient5.hpp"
#include "magnav/field/wrench.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace magnav::capsule {

struct CapsuleShape {
  double radius = 0.0;  // m
  double length = 0.0;  // m, end to end
};

struct CapsuleState {
  Pose pose;
  Vec3 linear_velocity = Vec3::Zero();   // world, m/s
  Vec3 angular_velocity = Vec3::Zero();  // body frame, rad/s
  double mass = 0.0;                     // kg
  Mat3 inertia_body = Mat3::Identity();  // kg*m^2, about center of mass
  field::EmbeddedMagnet magnet;
  CapsuleShape shape;
};

// World-frame force applied at a world-frame point (contact, tether, ...).
struct AppliedForce {
  Vec3 force = Vec3::Zero();
  Vec3 point = Vec3::Zero();
};

inline constexpr double kDefaultRotationalDamping = 1e-6;  // N*m*s

inline Vec3 world_moment(const CapsuleState& s) {
  return s.pose.orientation * s.magnet.moment_body;
}

namespace detail {

inline void require_finite(const Vec3& v, const char* label) {
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(v[i]))
      throw std::runtime_error(std::string("capsule step: non-finite ") +
                               label + "[" + std::to_string(i) + "]");
}

}  // namespace detail

// One fixed step. The magnetic wrench acts at the embedded magnet, so its
// force also contributes a moment about the center of mass when the magnet
// is offset. External forces carry their own application points.
inline CapsuleState capsule_step(
    const CapsuleState& s, const field::Wrench& wrench,
    const std::vector<AppliedForce>& external, const Vec3& gravity, double dt,
    double rotational_damping = kDefaultRotationalDamping) {
  if (!(dt > 0.0 && dt <= 0.1))
    throw std::invalid_argument("capsule step: dt must be in (0, 0.1]");
  detail::require_finite(wrench.force, "wrench.force");
  detail::require_finite(wrench.torque, "wrench.torque");
  detail::require_finite(gravity, "gravity");
  for (const AppliedForce& f : external) {
    detail::require_finite(f.force, "external.force");
    detail::require_finite(f.point, "external.point");
  }

  const Mat3 R = s.pose.orientation.toRotationMatrix();

  Vec3 force = wrench.force + s.mass * gravity;
  Vec3 torque_world = wrench.torque +
                      (R * s.magnet.offset_body).cross(wrench.force);
  for (const AppliedForce& f : external) {
    force += f.force;
    torque_world += (f.point - s.pose.position).cross(f.force);
  }
  const Vec3 torque_body = R.transpose() * torque_world;

  const Mat3& I = s.inertia_body;
  const Mat3 I_inv = I.inverse();
  const auto omega_dot = [&](const Vec3& w) -> Vec3 {
    return I_inv * (torque_body - rotational_damping * w - w.cross(I * w));
  };

  CapsuleState out = s;

  // midpoint stage keeps the gyroscopic term energy-honest
  const Vec3 w_half = s.angular_velocity + 0.5 * dt * omega_dot(s.angular_velocity);
  out.angular_velocity = s.angular_velocity + dt * omega_dot(w_half);

  // trapezoidal position update: exact under constant acceleration, so
  // free fall carries no systematic energy drift
  out.linear_velocity = s.linear_velocity + (dt / s.mass) * force;
  out.pose.position =
      s.pose.position + 0.5 * dt * (s.linear_velocity + out.linear_velocity);

  out.pose.orientation =
      (s.pose.orientation * exp_quat(Vec3(dt * out.angular_velocity)))
          .normalized();
  return out;
}

}  // namespace magnav::capsule
