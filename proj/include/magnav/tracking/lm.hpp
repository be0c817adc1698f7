#pragma once

#include "magnav/core.hpp"
#include "magnav/field/source.hpp"
#include "magnav/tracking/sensor.hpp"

#include <vector>

namespace magnav::tracking {

// Levenberg-Marquardt settings: multiplicative damping on the scaled
// normal equations (Marquardt's diagonal form).
struct LmConfig {
  double initial_damping = 1e-3;
  double damping_increase = 10.0;
  double damping_decrease = 0.1;
  double gradient_tolerance = 1e-12;
  int max_iterations = 100;
};

struct LmReport {
  bool converged = false;
  int iterations = 0;        // trial steps evaluated
  double residual_norm = 0.0;  // ||z - h(x)|| at the returned estimate
  double gradient_norm = 0.0;  // ||J^T (z - h)|| at the returned estimate
};

struct MagnetPoseEstimate {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  LmReport report;
};

struct SensorPoseEstimate {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
  LmReport report;
};

// Batch pose-only fits of the two measurement models (no velocity states).
// Unit-norm variables are re-projected after every accepted step; on the
// iteration cap the best iterate is returned with converged=false.
MagnetPoseEstimate lm_estimate(const VecX& z, const Vec3& position_guess,
                               const Vec3& direction_guess,
                               double moment_magnitude,
                               const std::vector<SensorSpec>& sensors,
                               const LmConfig& config = {});
SensorPoseEstimate lm_estimate(const VecX& z, const Vec3& position_guess,
                               const Quat& orientation_guess,
                               const std::vector<field::MagneticSource>& sources,
                               const VecX& inputs, const LmConfig& config = {});

}  // namespace magnav::tracking
