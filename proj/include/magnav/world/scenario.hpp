#pragma once

#include "magnav/beam/properties.hpp"
#include "magnav/control/allocation.hpp"
#include "magnav/control/pid.hpp"
#include "magnav/core.hpp"
#include "magnav/field/source.hpp"
#include "magnav/tracking/sensor.hpp"
#include "magnav/world/mesh.hpp"
#include "magnav/world/trajectory.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace magnav::world {

// Thrown by load_scenario with every problem found, not just the first.
class ScenarioValidationError : public std::runtime_error {
 public:
  explicit ScenarioValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct EnvironmentConfig {
  bool present = false;
  std::string mesh_stl;  // resolved path
  Vec3 translation = Vec3::Zero();
  double friction = 0.1;
  double stiffness = 500.0;      // N/m
  double damping = 5.0;          // N*s/m
  double contact_margin = 1e-3;  // m
  EnvironmentMesh mesh;          // translated, tree built
};

struct CapsuleConfig {
  double mass = 0.0;             // kg
  Vec3 inertia = Vec3::Zero();   // kg*m^2, principal diagonal
  double length = 0.0;           // m
  double diameter = 0.0;         // m
  double magnet_moment = 0.0;    // A*m^2
  Vec3 magnet_axis = Vec3::UnitX();   // unit, body frame
  Vec3 magnet_offset = Vec3::Zero();  // m, body frame
  double rotational_damping = 1e-6;   // N*m*s
  Vec3 initial_position = Vec3::Zero();
  Vec3 initial_rotvec = Vec3::Zero();
  Vec3 initial_velocity = Vec3::Zero();
  Vec3 initial_angular_velocity = Vec3::Zero();
};

struct ContinuumConfig {
  beam::BeamProperties properties;
  double total_length = 0.0;     // m
  double inserted_length = 0.0;  // m at t = 0
  double max_element_length = 5e-3;
  double tip_moment = 0.0;       // A*m^2, along the tip tangent
  Vec3 base_position = Vec3::Zero();
  Vec3 base_rotvec = Vec3::Zero();
  double advance_speed = 0.0;    // m/s through the port
};

struct RobotConfig {
  std::string name;
  std::variant<CapsuleConfig, ContinuumConfig> body;
  std::optional<PathTrajectory> trajectory;
  std::string centerline_file;  // resolved; empty unless the path came from one

  bool is_capsule() const { return std::holds_alternative<CapsuleConfig>(body); }
  const CapsuleConfig& capsule() const { return std::get<CapsuleConfig>(body); }
  const ContinuumConfig& continuum() const {
    return std::get<ContinuumConfig>(body);
  }
};

// One actuation source in its on-disk form; build() yields the field type.
struct SourceConfig {
  std::string type;  // "helmholtz", "maxwell", "dipole_coil", "dipole_magnet"
  Vec3 axis = Vec3::UnitZ();  // coil pairs; unit
  double gain = 0.0;          // T/A (helmholtz) or (T/m)/A (maxwell)
  double radius = 0.0;        // m, coil pairs
  Vec3 position = Vec3::Zero();  // dipole types
  Vec3 rotvec = Vec3::Zero();    // dipole types, source orientation
  Vec3 moment = Vec3::Zero();    // A*m^2 (magnet) or A*m^2/A (coil)

  field::MagneticSource build() const;
};

struct SensorConfig {
  Vec3 position = Vec3::Zero();
  Vec3 rotvec = Vec3::Zero();       // world->sensor
  Vec3 noise_sigma = Vec3::Zero();  // T

  tracking::SensorSpec spec() const {
    return {position, exp_quat(rotvec), noise_sigma};
  }
};

struct ControllerConfig {
  std::string mode;  // "capsule-pose", "capsule-rolling", "continuum-field"
  control::PidGains position_gains;
  control::PidGains orientation_gains;
  double field_magnitude = 0.0;     // T commanded to the allocator
  double allocation_damping = 1e-4;
  double rolling_frequency = 0.0;   // Hz, capsule-rolling only
  control::PmStepLimits pm_step;    // permanent-magnet pose step clamp
};

struct EstimatorConfig {
  std::string type = "none";  // "none", "ekf", "lm"
  Vec3 accel_sigma = Vec3::Constant(1.0);  // m/s^2 process noise
  Vec3 gyro_sigma = Vec3::Constant(3.0);   // rad/s process noise
  double initial_position_sigma = 1e-2;    // m
  double initial_velocity_sigma = 1e-1;    // m/s
  double initial_direction_sigma = 1e-1;   // on the unit moment
};

struct Scenario {
  std::string name;
  double dt = 0.0;        // s, control tick
  double duration = 0.0;  // s
  std::uint64_t seed = 0;
  int substeps = 10;      // physics substeps per control tick
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);

  EnvironmentConfig environment;
  std::vector<RobotConfig> robots;
  std::vector<SourceConfig> sources;
  double current_limit = std::numeric_limits<double>::infinity();  // A
  std::vector<SensorConfig> sensors;
  ControllerConfig controller;
  EstimatorConfig estimator;
  std::string command_log;  // resolved path; empty = autonomous
  std::string source_path;  // scenario file this was loaded from
};

// Engine-ready views.
std::vector<field::MagneticSource> build_sources(const Scenario& s);
std::vector<tracking::SensorSpec> sensor_specs(const Scenario& s);

// Parses, resolves referenced files (relative to the scenario file), loads
// the mesh and centerlines, builds trajectories, and validates everything.
Scenario load_scenario(const std::string& path);

// Fully-resolved scenario as pretty JSON: defaults made explicit, paths
// absolute. Loading the echoed document reproduces the same scenario.
std::string scenario_echo(const Scenario& s);

void save_scenario(const Scenario& s, const std::string& path);

}  // namespace magnav::world
