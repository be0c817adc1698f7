#pragma once

// Per-channel PID with derivative-on-error and symmetric anti-windup
// clamps, plus the small geometric helpers the navigation controllers
// compose: axis-angle orientation error, rotating-field generator, and the
// alignment passthrough from desired moment direction to field direction.

#include "magnav/core.hpp"

#include <cmath>
#include <stdexcept>

namespace magnav::control {

struct PidGains {
  Vec3 kp = Vec3::Zero();
  Vec3 ki = Vec3::Zero();
  Vec3 kd = Vec3::Zero();
  double integral_clamp = 1.0;  // per-channel bound on the stored integral
  double output_clamp = 1e9;    // per-channel bound on the output

  static PidGains uniform(double kp, double ki, double kd,
                          double integral_clamp = 1.0,
                          double output_clamp = 1e9) {
    PidGains g;
    g.kp = Vec3::Constant(kp);
    g.ki = Vec3::Constant(ki);
    g.kd = Vec3::Constant(kd);
    g.integral_clamp = integral_clamp;
    g.output_clamp = output_clamp;
    return g;
  }

  void validate() const {
    if (kp.minCoeff() < 0 || ki.minCoeff() < 0 || kd.minCoeff() < 0)
      throw std::invalid_argument("pid: gains must be nonnegative");
    if (!(integral_clamp > 0) || !(output_clamp > 0))
      throw std::invalid_argument("pid: clamps must be positive");
  }
};

struct PidResult {
  Vec3 output;
  Vec3 integral;
};

inline PidResult pid_step(const PidGains& g, const Vec3& error,
                          const Vec3& error_prev, const Vec3& integral_state,
                          double dt) {
  if (!(dt > 0)) throw std::invalid_argument("pid: dt must be positive");
  PidResult r;
  r.integral = integral_state + error * dt;
  for (int i = 0; i < 3; ++i)
    r.integral[i] = std::clamp(r.integral[i], -g.integral_clamp,
                               g.integral_clamp);
  r.output = g.kp.cwiseProduct(error) +
             g.kd.cwiseProduct((error - error_prev) / dt) +
             g.ki.cwiseProduct(r.integral);
  for (int i = 0; i < 3; ++i)
    r.output[i] = std::clamp(r.output[i], -g.output_clamp, g.output_clamp);
  return r;
}

// Stateful convenience wrapper; one instance per controlled robot.
class PidController {
 public:
  explicit PidController(const PidGains& gains) : gains_(gains) {
    gains_.validate();
  }

  Vec3 step(const Vec3& error, double dt) {
    const PidResult r = pid_step(gains_, error, prev_error_, integral_, dt);
    prev_error_ = error;
    integral_ = r.integral;
    return r.output;
  }

  void reset() {
    integral_ = Vec3::Zero();
    prev_error_ = Vec3::Zero();
  }

  const Vec3& integral() const { return integral_; }

 private:
  PidGains gains_;
  Vec3 integral_ = Vec3::Zero();
  Vec3 prev_error_ = Vec3::Zero();
};

// Axis-angle rotation carrying m onto m_star: axis = m x m*, magnitude =
// angle between them. Anti-parallel inputs use the deterministic in-plane
// basis vector as the axis.
inline Vec3 orientation_error(const Vec3& m, const Vec3& m_star) {
  if (m.norm() < 1e-15 || m_star.norm() < 1e-15)
    throw std::invalid_argument("orientation error needs nonzero vectors");
  const Vec3 a = m.normalized(), b = m_star.normalized();
  const Vec3 cross = a.cross(b);
  const double s = cross.norm(), c = a.dot(b);
  const double angle = std::atan2(s, c);
  if (s < 1e-12) {
    if (c > 0) return Vec3::Zero();
    return kPi * plane_basis(a).first;  // anti-parallel: fixed convention
  }
  return angle * (cross / s);
}

// Desired field direction for field-aligned steering is the desired moment
// direction itself.
inline Vec3 field_alignment_command(const Vec3& desired_moment_dir) {
  const double n = desired_moment_dir.norm();
  if (n < 1e-15)
    throw std::invalid_argument("field alignment needs a nonzero direction");
  return desired_moment_dir / n;
}

// Field of fixed magnitude rotating in the plane orthogonal to axis.
inline Vec3 rolling_field(const Vec3& axis, double magnitude, double frequency,
                          double t, double phase = 0.0) {
  if (!approx_unit(axis))
    throw std::invalid_argument("rolling field needs a unit axis");
  const auto [e1, e2] = plane_basis(axis);
  const double a = 2.0 * kPi * frequency * t + phase;
  return magnitude * (std::cos(a) * e1 + std::sin(a) * e2);
}

}  // namespace magnav::control
