#pragma once

// Closed-loop navigation engine. One instance owns a scenario's full
// runtime state and advances it tick by tick: reference sampling (or
// command-log replay), estimation, control, actuator allocation, contact,
// physics, sensor synthesis, telemetry. Fixed-rate, single-threaded and
// deterministic — the same scenario and seed give bit-identical telemetry.
//
// Timing convention: each record holds the state, reference, feedback and
// command at t = tick*dt; physics then advances the state to t + dt.
// Sensor readings are synthesized at the end of a tick and consumed by the
// estimator at the start of the next, i.e. feedback carries one tick of
// measurement latency (the estimate at t is built from the field sampled
// at t, before this tick's actuator update).

#include "magnav/beam/model.hpp"
#include "magnav/capsule/dynamics.hpp"
#include "magnav/engine/log.hpp"
#include "magnav/field/wrench.hpp"
#include "magnav/tracking/ekf.hpp"
#include "magnav/world/scenario.hpp"

#include <optional>
#include <string>
#include <vector>

namespace magnav::engine {

struct TickFlags {
  bool saturated = false;         // allocation clipped by current/step limits
  bool singular = false;          // allocation near rank loss
  bool held = false;              // previous actuator command kept in force
  bool solver_failed = false;     // beam equilibrium missed its tolerance
  bool estimator_failed = false;  // estimator threw; previous estimate kept
  bool fatal = false;             // non-finite state; run aborted after this
};

struct RobotTelemetry {
  Vec3 position = Vec3::Zero();      // ground truth (capsule COM / beam tip)
  Vec3 heading = Vec3::UnitX();      // moment axis (capsule) / tip tangent
  Vec3 velocity = Vec3::Zero();
  Vec3 est_position = Vec3::Zero();  // feedback the controller actually used
  Vec3 est_heading = Vec3::UnitX();
  Vec3 ref_position = Vec3::Zero();  // reference in force this tick
  Vec3 ref_heading = Vec3::UnitX();
  field::Wrench wrench;              // applied magnetic wrench
  double contact_force = 0.0;        // net contact force magnitude [N]
};

struct TelemetryRecord {
  double t = 0.0;
  long tick = 0;
  std::vector<RobotTelemetry> robots;
  Vec3 field_direction = Vec3::Zero();  // commanded unit field direction
  double field_magnitude = 0.0;         // commanded magnitude [T]
  VecX currents;                        // coil drive [A]; empty on magnet rigs
  std::vector<Pose> magnet_poses;       // actuator magnet placements
  double dropped_torque = 0.0;          // unattainable steering torque [N*m]
  TickFlags flags;
};

// Fixed column structure of a telemetry stream (for CSV export).
struct TelemetryLayout {
  int robots = 0;
  int coil_channels = 0;
  int magnet_actuators = 0;
};

class Engine {
 public:
  // Autonomous closed loop; the reference commands issued along the way
  // are captured and can be saved for later replay.
  explicit Engine(const world::Scenario& scenario);

  // Replay: reference sampling is read from the log (zero-order hold);
  // estimator, controller, allocation and physics run unchanged, so
  // replaying a captured log reproduces the original run bit-identically.
  Engine(const world::Scenario& scenario, CommandLog replay);

  // Executes one control tick. Returns false (doing nothing) once the run
  // is finished or aborted.
  bool step_once();
  void run();

  long tick() const { return tick_; }
  long total_ticks() const { return total_ticks_; }
  bool finished() const { return aborted_ || tick_ >= total_ticks_; }
  bool aborted() const { return aborted_; }
  const std::string& abort_reason() const { return abort_reason_; }

  const world::Scenario& scenario() const { return scn_; }
  const std::vector<TelemetryRecord>& telemetry() const { return telemetry_; }
  const CommandLog& captured_commands() const { return captured_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  TelemetryLayout layout() const;

  // Complete runtime state as JSON text. Loading it into a fresh engine
  // built from the same scenario resumes the run bit-identically.
  std::string save_state() const;
  void load_state(const std::string& text);

  const capsule::CapsuleState& capsule_state(int robot = 0) const;
  const beam::BeamState& beam_state(int robot = 0) const;

 private:
  struct RobotRuntime {
    bool is_capsule = true;
    capsule::CapsuleState capsule;
    double capsule_damping = capsule::kDefaultRotationalDamping;
    beam::BeamState beam;
    beam::BeamProperties props;
    double advance_speed = 0.0;
    // controller memory
    Vec3 pos_integral = Vec3::Zero(), pos_prev_error = Vec3::Zero();
    Vec3 ori_integral = Vec3::Zero(), ori_prev_error = Vec3::Zero();
    Vec3 rolling_axis = Vec3::UnitY();  // held when travel direction degenerates
  };

  struct EstimatorRuntime {
    std::string type = "none";
    tracking::EkfConfig config;
    tracking::MagnetEkfState ekf;
    Vec3 lm_position = Vec3::Zero();
    Vec3 lm_direction = Vec3::UnitX();
    double moment = 0.0;     // tracked magnet |m|
    VecX z;                  // readings taken at the end of the previous tick
    VecX z_inputs;           // actuator drive active when z was taken
  };

  void init_robots();
  void init_estimator();
  std::vector<double> drive_inputs() const;  // per-source field multipliers
  void synthesize_measurement();
  Vec3 robot_position(const RobotRuntime& r) const;
  Vec3 robot_heading(const RobotRuntime& r) const;
  double est_moment_magnitude(const RobotRuntime& r) const;
  void step_capsule_physics(RobotRuntime& r, TelemetryRecord& rec, int index);
  void step_beam_physics(RobotRuntime& r, TelemetryRecord& rec, int index,
                         double insertion_velocity);

  world::Scenario scn_;
  std::vector<field::MagneticSource> sources_;
  std::vector<tracking::SensorSpec> sensors_;
  bool coil_rig_ = true;            // all sources current-controlled
  std::vector<int> magnet_index_;   // sources_ indices holding DipoleMagnet
  VecX currents_;                   // live coil command
  VecX current_limits_;

  long tick_ = 0;
  long total_ticks_ = 0;
  bool aborted_ = false;
  std::string abort_reason_;
  GaussianRng rng_;

  std::vector<RobotRuntime> robots_;
  EstimatorRuntime est_;
  std::vector<TelemetryRecord> telemetry_;
  CommandLog captured_;
  std::optional<CommandLog> replay_;
  std::vector<std::string> warnings_;
};

}  // namespace magnav::engine
