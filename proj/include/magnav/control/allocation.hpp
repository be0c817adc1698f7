#pragma once

// Inverse actuation: given desired field directions / forces / steering
// torques at the robots, compute coil currents (linear least squares) or a
// damped-Jacobian pose step for robot-arm-held permanent magnets. All
// solves share one row-equilibrated damped pseudoinverse with conditioning
// diagnostics; an undamped solve on a rank-deficient system throws naming
// the deficient target direction.

#include "magnav/core.hpp"
#include "magnav/field/source.hpp"

#include <limits>
#include <string>
#include <vector>

namespace magnav::control {

inline constexpr double kDefaultDamping = 1e-4;
inline constexpr double kDefaultSingularRatio = 1e-3;

// One robot's actuation goal. field_magnitude only matters for the coil
// path (the linear solve needs a magnitude setpoint); the magnet path
// steers direction only.
struct CapsuleTarget {
  Vec3 position = Vec3::Zero();          // robot magnet location, world
  Vec3 moment_world = Vec3::Zero();      // current robot moment
  Vec3 field_direction = Vec3::UnitZ();  // desired unit field direction
  double field_magnitude = 0.0;          // tesla, coil path only
  Vec3 force = Vec3::Zero();             // desired magnetic force
  bool control_force = true;
};

struct AllocationReport {
  bool saturated = false;
  std::vector<int> saturated_indices;
  bool singular = false;       // conditioning at expected rank under threshold
  double singular_ratio = 1.0; // sigma_expected / sigma_max
  double dropped_torque = 0.0; // unattainable torque component norm
};

struct CurrentAllocation {
  VecX currents;
  AllocationReport report;
};

struct PoseAllocation {
  std::vector<Pose> poses;
  AllocationReport report;
};

// Per-tick motion bounds for an arm-held magnet (workspace surrogate).
struct PmStepLimits {
  double max_position_step = std::numeric_limits<double>::infinity();  // m
  double max_rotation_step = std::numeric_limits<double>::infinity();  // rad
};

// Jacobian of the stacked [unit field direction; force] outputs with
// respect to magnet pose parameters (3 position + 3 rotation-vector per
// magnet). The finite-difference form works for any magnet count; the
// closed form covers the single-magnet fast path. Exposed for diagnostics
// and cross-checking.
MatX magnet_step_jacobian_fd(const std::vector<CapsuleTarget>& targets,
                             const std::vector<field::DipoleMagnet>& magnets);
MatX magnet_step_jacobian(const std::vector<CapsuleTarget>& targets,
                          const field::DipoleMagnet& magnet);

// Coil currents meeting stacked [magnitude*direction; force] targets.
CurrentAllocation allocate_currents(
    const std::vector<CapsuleTarget>& targets,
    const std::vector<field::MagneticSource>& sources,
    double damping = kDefaultDamping, const VecX& current_limits = VecX(),
    double singular_ratio_threshold = kDefaultSingularRatio);

// One damped-Jacobian pose increment for permanent-magnet actuators;
// moment magnitudes stay fixed (pose position + rotation vector are the
// free parameters). Returns the updated magnet poses.
PoseAllocation allocate_magnet_step(
    const std::vector<CapsuleTarget>& targets,
    const std::vector<field::DipoleMagnet>& magnets,
    double damping = kDefaultDamping, const PmStepLimits& limits = {},
    double singular_ratio_threshold = kDefaultSingularRatio);

// Coil currents producing a steering torque on a tip magnet; components of
// the request along the moment axis are unattainable, projected out and
// reported. zero_force augments rows pinning the magnetic force to zero.
CurrentAllocation allocate_continuum_currents(
    const Vec3& desired_torque, const Vec3& moment_world, const Vec3& position,
    const std::vector<field::MagneticSource>& sources,
    double damping = kDefaultDamping, bool zero_force = false,
    const VecX& current_limits = VecX(),
    double singular_ratio_threshold = kDefaultSingularRatio);

// Permanent-magnet counterpart: one pose increment toward the requested
// steering torque (optionally also pushing magnetic force to zero).
PoseAllocation allocate_continuum_magnet_step(
    const Vec3& desired_torque, const Vec3& moment_world, const Vec3& position,
    const std::vector<field::DipoleMagnet>& magnets,
    double damping = kDefaultDamping, bool zero_force = false,
    const PmStepLimits& limits = {},
    double singular_ratio_threshold = kDefaultSingularRatio);

}  // namespace magnav::control
