#pragma once

#include "magnav/core.hpp"
#include "magnav/field/source.hpp"
#include "magnav/tracking/sensor.hpp"

#include <vector>

namespace magnav::tracking {

// Process/measurement noise description shared by both filter flavors.
// The process model is constant-velocity; unmodelled linear acceleration
// and unmodelled angular velocity enter as white noise.
struct EkfConfig {
  Vec3 accel_sigma = Vec3::Zero();  // m/s^2
  Vec3 gyro_sigma = Vec3::Zero();   // rad/s
  VecX measurement_variance;        // T^2 per channel, stacked
  double dt = 0.0;

  void validate(Eigen::Index z_dim) const;
};

// State for the magnet-on-robot configuration: a dipole's field is
// rotationally symmetric about the moment, so only position, velocity and
// the moment direction (5 DoF) are observable.
struct MagnetEkfState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit moment direction
  MatX covariance;                 // 9x9
};

// State for the sensor-on-robot configuration: full 6-DoF pose, orientation
// as a scalar-first unit quaternion [q0 q1 q2 q3].
struct SensorEkfState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();
  MatX covariance;  // 10x10, quaternion block scalar-first
};

// Analytic measurement Jacobians. State ordering [p, v, direction] and
// [p, v, q0..q3]; velocity columns are zero (fields do not depend on it).
MatX measurement_jacobian(const Vec3& magnet_position,
                          const Vec3& moment_direction, double moment_magnitude,
                          const std::vector<SensorSpec>& sensors);
MatX measurement_jacobian(const Vec3& sensor_position, const Quat& orientation,
                          const std::vector<field::MagneticSource>& sources,
                          const VecX& inputs);

// One predict/update cycle. Covariance is propagated with the Joseph form
// and re-symmetrized; the direction (resp. quaternion) is renormalized
// after the update with the covariance left untouched.
MagnetEkfState ekf_step(const MagnetEkfState& state, const VecX& z,
                        double moment_magnitude,
                        const std::vector<SensorSpec>& sensors,
                        const EkfConfig& config);
SensorEkfState ekf_step(const SensorEkfState& state, const VecX& z,
                        const std::vector<field::MagneticSource>& sources,
                        const VecX& inputs, const EkfConfig& config);

}  // namespace magnav::tracking
