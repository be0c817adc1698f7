#include "magnav/engine/engine.hpp"

#include "magnav/control/allocation.hpp"
#include "magnav/control/pid.hpp"
#include "magnav/tracking/lm.hpp"
#include "magnav/tracking/sensor.hpp"
#include "magnav/world/contact.hpp"

#include "json.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace magnav::engine {

namespace {

using njson = nlohmann::json;

// With zero configured sensor noise the innovation covariance collapses to
// the rank of the 9-state prior and fails the filter's conditioning gate;
// this floor (1 nT std, well under any real magnetometer) keeps the update
// defined while leaving realistic noise levels untouched.
constexpr double kMeasurementVarianceFloor = 1e-18;  // T^2

Vec3 unit_or(const Vec3& v, const Vec3& fallback) {
  const double n = v.norm();
  return n > 1e-12 ? Vec3(v / n) : fallback;
}

// Minimal rotation carrying `from` onto `to`, applied to v. Used to place
// the magnet offset when the estimator only provides the moment axis.
Vec3 swing(const Vec3& from, const Vec3& to, const Vec3& v) {
  if (v.squaredNorm() == 0.0) return v;
  return exp_so3(control::orientation_error(from, to)) * v;
}

bool state_finite(const capsule::CapsuleState& s) {
  return s.pose.position.allFinite() && s.pose.orientation.coeffs().allFinite() &&
         s.linear_velocity.allFinite() && s.angular_velocity.allFinite();
}

bool state_finite(const beam::BeamState& s) {
  for (const Pose& p : s.node_poses)
    if (!p.position.allFinite() || !p.orientation.coeffs().allFinite())
      return false;
  return true;
}

njson to_json(const Vec3& v) { return njson::array({v.x(), v.y(), v.z()}); }
njson to_json(const Quat& q) {
  return njson::array({q.w(), q.x(), q.y(), q.z()});
}
njson to_json(const VecX& v) {
  njson a = njson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec3 vec3_from(const njson& a) {
  return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
}
Quat quat_from(const njson& a) {
  return Quat(a.at(0).get<double>(), a.at(1).get<double>(),
              a.at(2).get<double>(), a.at(3).get<double>());
}
VecX vecx_from(const njson& a) {
  VecX v(static_cast<Eigen::Index>(a.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = a.at(static_cast<size_t>(i)).get<double>();
  return v;
}

}  // namespace

Engine::Engine(const world::Scenario& scenario)
    : scn_(scenario), rng_(scenario.seed) {
  sources_ = world::build_sources(scn_);
  sensors_ = world::sensor_specs(scn_);
  for (size_t i = 0; i < sources_.size(); ++i)
    if (!field::is_current_controlled(sources_[i]))
      magnet_index_.push_back(static_cast<int>(i));
  coil_rig_ = magnet_index_.empty();
  if (!coil_rig_ && magnet_index_.size() != sources_.size())
    throw std::invalid_argument(
        "engine: coil and magnet actuators cannot be mixed");
  currents_ = VecX::Zero(coil_rig_ ? static_cast<Eigen::Index>(sources_.size()) : 0);
  if (std::isfinite(scn_.current_limit))
    current_limits_ =
        VecX::Constant(static_cast<Eigen::Index>(sources_.size()), scn_.current_limit);

  total_ticks_ = std::llround(scn_.duration / scn_.dt);
  telemetry_.reserve(static_cast<size_t>(total_ticks_));
  captured_.mode = scn_.controller.mode;

  init_robots();
  init_estimator();
  // Tick 0 consumes a reading of the initial state taken with the
  // actuators still idle.
  if (est_.type != "none") synthesize_measurement();
}

Engine::Engine(const world::Scenario& scenario, CommandLog replay)
    : Engine(scenario) {
  replay.validate();
  if (replay.mode != scn_.controller.mode)
    throw std::runtime_error("command log: mode '" + replay.mode +
                             "' does not match controller mode '" +
                             scn_.controller.mode + "'");
  if (scn_.robots.size() != 1)
    throw std::runtime_error("command log: replay needs a single-robot scenario");
  const double covered = replay.records.back().t;
  if (covered + scn_.dt < scn_.duration) {
    std::ostringstream os;
    os << "command log ends at t = " << covered << " s; last record held through "
       << scn_.duration << " s";
    warnings_.push_back(os.str());
  }
  replay_ = std::move(replay);
}

void Engine::init_robots() {
  robots_.resize(scn_.robots.size());
  for (size_t i = 0; i < scn_.robots.size(); ++i) {
    const world::RobotConfig& rc = scn_.robots[i];
    RobotRuntime& r = robots_[i];
    r.is_capsule = rc.is_capsule();
    if (r.is_capsule) {
      const world::CapsuleConfig& c = rc.capsule();
      capsule::CapsuleState s;
      s.pose.position = c.initial_position;
      s.pose.orientation = exp_quat(c.initial_rotvec);
      s.linear_velocity = c.initial_velocity;
      s.angular_velocity = c.initial_angular_velocity;
      s.mass = c.mass;
      s.inertia_body = c.inertia.asDiagonal();
      s.magnet.moment_body = c.magnet_moment * c.magnet_axis.normalized();
      s.magnet.offset_body = c.magnet_offset;
      s.shape = {c.diameter / 2.0, c.length};
      r.capsule = s;
      r.capsule_damping = c.rotational_damping;
    } else {
      const world::ContinuumConfig& c = rc.continuum();
      r.props = c.properties;
      const Pose base{c.base_position, exp_quat(c.base_rotvec)};
      r.beam = beam::make_straight_beam(base, c.total_length, c.inserted_length,
                                        Vec3(c.tip_moment, 0.0, 0.0),
                                        c.max_element_length);
      r.advance_speed = c.advance_speed;
    }
  }
}

void Engine::init_estimator() {
  est_.type = scn_.estimator.type;
  if (est_.type == "none") return;
  // scenario validation guarantees a single capsule robot and sensors
  const capsule::CapsuleState& s = robots_[0].capsule;
  est_.moment = s.magnet.moment_body.norm();
  const Vec3 p0 = s.pose.position + s.pose.orientation * s.magnet.offset_body;
  const Vec3 d0 = capsule::world_moment(s).normalized();

  const world::EstimatorConfig& e = scn_.estimator;
  est_.ekf.position = p0;
  est_.ekf.velocity = s.linear_velocity;
  est_.ekf.direction = d0;
  VecX diag(9);
  diag.segment<3>(0).setConstant(e.initial_position_sigma * e.initial_position_sigma);
  diag.segment<3>(3).setConstant(e.initial_velocity_sigma * e.initial_velocity_sigma);
  diag.segment<3>(6).setConstant(e.initial_direction_sigma * e.initial_direction_sigma);
  est_.ekf.covariance = MatX(diag.asDiagonal());
  est_.lm_position = p0;
  est_.lm_direction = d0;

  est_.config.accel_sigma = e.accel_sigma;
  est_.config.gyro_sigma = e.gyro_sigma;
  est_.config.dt = scn_.dt;
  VecX mv(3 * static_cast<Eigen::Index>(sensors_.size()));
  for (size_t i = 0; i < sensors_.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      const double sig = sensors_[i].noise_sigma[a];
      mv[3 * static_cast<Eigen::Index>(i) + a] =
          std::max(sig * sig, kMeasurementVarianceFloor);
    }
  est_.config.measurement_variance = mv;
}

std::vector<double> Engine::drive_inputs() const {
  if (coil_rig_)
    return std::vector<double>(currents_.data(), currents_.data() + currents_.size());
  return std::vector<double>(sources_.size(), 1.0);
}

void Engine::synthesize_measurement() {
  const capsule::CapsuleState& s = robots_[0].capsule;
  const Vec3 mp = s.pose.position + s.pose.orientation * s.magnet.offset_body;
  const Vec3 md = capsule::world_moment(s).normalized();
  VecX z = tracking::measure_magnet_array(mp, md, est_.moment, sensors_);
  const std::vector<double> in = drive_inputs();
  for (size_t i = 0; i < sensors_.size(); ++i) {
    const field::FieldSample fs =
        field::total_field(sources_, in, sensors_[i].position);
    z.segment<3>(3 * static_cast<Eigen::Index>(i)) += sensors_[i].rotation * fs.b;
  }
  est_.z = tracking::add_measurement_noise(std::move(z), sensors_, rng_);
  est_.z_inputs =
      Eigen::Map<const VecX>(in.data(), static_cast<Eigen::Index>(in.size()));
}

Vec3 Engine::robot_position(const RobotRuntime& r) const {
  return r.is_capsule ? r.capsule.pose.position : beam::tip_frame(r.beam).position;
}

Vec3 Engine::robot_heading(const RobotRuntime& r) const {
  return r.is_capsule ? Vec3(capsule::world_moment(r.capsule).normalized())
                      : beam::tip_tangent(r.beam);
}

bool Engine::step_once() {
  if (finished()) return false;
  const double dt = scn_.dt;
  const double t = static_cast<double>(tick_) * dt;
  const std::string& mode = scn_.controller.mode;
  const size_t n = robots_.size();
  const control::PmStepLimits pm_limits = scn_.controller.pm_step;

  TelemetryRecord rec;
  rec.t = t;
  rec.tick = tick_;
  rec.robots.resize(n);
  TickFlags& fl = rec.flags;

  // ground truth at t (pre-step state)
  for (size_t i = 0; i < n; ++i) {
    RobotTelemetry& rt = rec.robots[i];
    rt.position = robot_position(robots_[i]);
    rt.heading = robot_heading(robots_[i]);
    rt.velocity =
        robots_[i].is_capsule ? robots_[i].capsule.linear_velocity : Vec3::Zero();
  }

  // (1) reference: trajectory sample, or zero-order hold from the log
  const CommandRecord* cr = replay_ ? &replay_->at(t) : nullptr;
  for (size_t i = 0; i < n; ++i) {
    RobotTelemetry& rt = rec.robots[i];
    if (cr && mode == "capsule-pose") {
      rt.ref_position = cr->primary;
      rt.ref_heading = unit_or(cr->secondary, rt.heading);
    } else if (scn_.robots[i].trajectory) {
      const world::TrajectorySample ts = scn_.robots[i].trajectory->at(t);
      rt.ref_position = ts.position;
      rt.ref_heading = ts.heading;
    } else {
      // replayed command stream without a reference path: error channels
      // read zero by construction
      rt.ref_position = rt.position;
      rt.ref_heading = rt.heading;
    }
  }

  // (2) estimator step, or ground-truth passthrough
  for (size_t i = 0; i < n; ++i) {
    rec.robots[i].est_position = rec.robots[i].position;
    rec.robots[i].est_heading = rec.robots[i].heading;
  }
  if (est_.type != "none") {
    try {
      const VecX z = tracking::subtract_actuation_field(est_.z, sources_,
                                                        est_.z_inputs, sensors_);
      if (est_.type == "ekf") {
        est_.ekf = tracking::ekf_step(est_.ekf, z, est_.moment, sensors_,
                                      est_.config);
      } else {
        const tracking::MagnetPoseEstimate fit = tracking::lm_estimate(
            z, est_.lm_position, est_.lm_direction, est_.moment, sensors_);
        est_.lm_position = fit.position;
        est_.lm_direction = fit.direction;
        fl.estimator_failed = fl.estimator_failed || !fit.report.converged;
      }
    } catch (const std::exception&) {
      fl.estimator_failed = true;  // previous estimate stays in force
    }
    const Vec3 ep = est_.type == "ekf" ? est_.ekf.position : est_.lm_position;
    const Vec3 ed = est_.type == "ekf" ? est_.ekf.direction : est_.lm_direction;
    const capsule::CapsuleState& s0 = robots_[0].capsule;
    const Vec3 axis_b = s0.magnet.moment_body.normalized();
    rec.robots[0].est_position = ep - swing(axis_b, ed, s0.magnet.offset_body);
    rec.robots[0].est_heading = ed;
  }

  // (3) controller
  std::vector<control::CapsuleTarget> targets;
  Vec3 cont_torque = Vec3::Zero();
  Vec3 cont_moment = Vec3::Zero();
  Vec3 cont_position = Vec3::Zero();
  double insertion_velocity = 0.0;

  if (mode == "capsule-pose") {
    for (size_t i = 0; i < n; ++i) {
      RobotRuntime& r = robots_[i];
      const RobotTelemetry& rt = rec.robots[i];
      const Vec3 e_p = rt.ref_position - rt.est_position;
      const control::PidResult pr =
          control::pid_step(scn_.controller.position_gains, e_p,
                            r.pos_prev_error, r.pos_integral, dt);
      r.pos_prev_error = e_p;
      r.pos_integral = pr.integral;

      // alignment passthrough, optionally led past the target by the
      // orientation loop (zero gains reduce it to the passthrough)
      const Vec3 e_o = control::orientation_error(rt.est_heading, rt.ref_heading);
      const control::PidResult po =
          control::pid_step(scn_.controller.orientation_gains, e_o,
                            r.ori_prev_error, r.ori_integral, dt);
      r.ori_prev_error = e_o;
      r.ori_integral = po.integral;
      const Vec3 bdir = unit_or(
          exp_so3(po.output) * control::field_alignment_command(rt.ref_heading),
          rt.ref_heading);

      const Vec3 axis_b = r.capsule.magnet.moment_body.normalized();
      control::CapsuleTarget tg;
      tg.position =
          rt.est_position + swing(axis_b, rt.est_heading, r.capsule.magnet.offset_body);
      tg.moment_world = est_moment_magnitude(r) * rt.est_heading;
      tg.field_direction = bdir;
      tg.field_magnitude = scn_.controller.field_magnitude;
      tg.force = pr.output;
      tg.control_force = true;
      targets.push_back(tg);
    }
    rec.field_direction = targets[0].field_direction;
    rec.field_magnitude = targets[0].field_magnitude;
    captured_.records.push_back(
        {t, rec.robots[0].ref_position, rec.robots[0].ref_heading, 0.0, 0.0});
  } else if (mode == "capsule-rolling") {
    for (size_t i = 0; i < n; ++i) {
      RobotRuntime& r = robots_[i];
      const RobotTelemetry& rt = rec.robots[i];
      if (cr) {
        r.rolling_axis = unit_or(cr->primary, r.rolling_axis);
      } else {
        // roll about the horizontal axis perpendicular to the travel
        // direction; a degenerate direction holds the previous axis
        const Vec3 d = rt.ref_position - rt.est_position;
        const Vec3 a = Vec3::UnitZ().cross(d);
        if (a.norm() > 1e-9) r.rolling_axis = a.normalized();
      }
      const Vec3 b = control::rolling_field(
          r.rolling_axis, scn_.controller.field_magnitude,
          scn_.controller.rolling_frequency, t);
      control::CapsuleTarget tg;
      tg.position = rt.est_position;
      tg.moment_world = est_moment_magnitude(r) * rt.est_heading;
      tg.field_direction = b.normalized();
      tg.field_magnitude = b.norm();
      tg.control_force = false;
      targets.push_back(tg);
    }
    rec.field_direction = targets[0].field_direction;
    rec.field_magnitude = targets[0].field_magnitude;
    captured_.records.push_back(
        {t, robots_[0].rolling_axis, Vec3::Zero(), 0.0, 0.0});
  } else {  // continuum-field
    size_t ci = 0;
    while (ci < n && robots_[ci].is_capsule) ++ci;
    RobotRuntime& r = robots_[ci];
    const RobotTelemetry& rt = rec.robots[ci];
    Vec3 bdir;
    double bmag;
    if (cr) {
      bdir = unit_or(cr->primary, rt.heading);
      bmag = cr->field;
      insertion_velocity = cr->insertion;
    } else {
      const Vec3 that_star = rt.ref_heading;
      const Vec3 e_o = control::orientation_error(rt.heading, that_star);
      const control::PidResult po =
          control::pid_step(scn_.controller.orientation_gains, e_o,
                            r.ori_prev_error, r.ori_integral, dt);
      r.ori_prev_error = e_o;
      r.ori_integral = po.integral;
      // transverse offset steered away by tilting the field about the
      // axis perpendicular to both the tangent and the offset
      Vec3 e_lat = rt.ref_position - rt.position;
      e_lat -= e_lat.dot(that_star) * that_star;
      const control::PidResult pp =
          control::pid_step(scn_.controller.position_gains, e_lat,
                            r.pos_prev_error, r.pos_integral, dt);
      r.pos_prev_error = e_lat;
      r.pos_integral = pp.integral;
      const Vec3 tilt = po.output + that_star.cross(pp.output);
      bdir = unit_or(exp_so3(tilt) * that_star, that_star);
      bmag = scn_.controller.field_magnitude;
      insertion_velocity = r.advance_speed;
    }
    const Pose tipf = beam::tip_frame(r.beam);
    cont_moment = tipf.orientation * r.beam.tip_magnet.moment_body;
    cont_position = tipf.position;
    cont_torque = cont_moment.cross(bmag * bdir);
    rec.field_direction = bdir;
    rec.field_magnitude = bmag;
    captured_.records.push_back({t, bdir, Vec3::Zero(), bmag, insertion_velocity});
  }

  // (4) actuator allocation; a singular or failed solve holds the
  // previous command in force
  control::AllocationReport report;
  bool commanded = false;
  try {
    if (mode == "continuum-field") {
      if (coil_rig_) {
        const control::CurrentAllocation al = control::allocate_continuum_currents(
            cont_torque, cont_moment, cont_position, sources_,
            scn_.controller.allocation_damping, false, current_limits_);
        report = al.report;
        if (!report.singular) {
          currents_ = al.currents;
          commanded = true;
        }
      } else {
        std::vector<field::DipoleMagnet> mags;
        for (int idx : magnet_index_)
          mags.push_back(std::get<field::DipoleMagnet>(sources_[idx]));
        const control::PoseAllocation al = control::allocate_continuum_magnet_step(
            cont_torque, cont_moment, cont_position, mags,
            scn_.controller.allocation_damping, false, pm_limits);
        report = al.report;
        if (!report.singular) {
          for (size_t k = 0; k < magnet_index_.size(); ++k)
            std::get<field::DipoleMagnet>(sources_[magnet_index_[k]]).pose =
                al.poses[k];
          commanded = true;
        }
      }
    } else {
      if (coil_rig_) {
        const control::CurrentAllocation al = control::allocate_currents(
            targets, sources_, scn_.controller.allocation_damping, current_limits_);
        report = al.report;
        if (!report.singular) {
          currents_ = al.currents;
          commanded = true;
        }
      } else {
        std::vector<field::DipoleMagnet> mags;
        for (int idx : magnet_index_)
          mags.push_back(std::get<field::DipoleMagnet>(sources_[idx]));
        const control::PoseAllocation al = control::allocate_magnet_step(
            targets, mags, scn_.controller.allocation_damping, pm_limits);
        report = al.report;
        if (!report.singular) {
          for (size_t k = 0; k < magnet_index_.size(); ++k)
            std::get<field::DipoleMagnet>(sources_[magnet_index_[k]]).pose =
                al.poses[k];
          commanded = true;
        }
      }
    }
  } catch (const std::exception&) {
    report.singular = true;
  }
  fl.saturated = report.saturated;
  fl.singular = report.singular;
  fl.held = !commanded;
  rec.dropped_torque = report.dropped_torque;
  if (coil_rig_) {
    rec.currents = currents_;
  } else {
    for (int idx : magnet_index_)
      rec.magnet_poses.push_back(std::get<field::DipoleMagnet>(sources_[idx]).pose);
  }

  // (5) contact + (6) physics
  try {
    for (size_t i = 0; i < n; ++i) {
      if (robots_[i].is_capsule) {
        step_capsule_physics(robots_[i], rec, static_cast<int>(i));
      } else {
        const double iv =
            mode == "continuum-field" ? insertion_velocity : robots_[i].advance_speed;
        step_beam_physics(robots_[i], rec, static_cast<int>(i), iv);
      }
      const bool ok = robots_[i].is_capsule ? state_finite(robots_[i].capsule)
                                            : state_finite(robots_[i].beam);
      if (!ok) {
        std::ostringstream os;
        os << "non-finite state of robot " << i << " at tick " << tick_
           << " (t = " << t << " s)";
        throw std::runtime_error(os.str());
      }
    }
  } catch (const std::exception& e) {
    fl.fatal = true;
    aborted_ = true;
    abort_reason_ = e.what();
  }

  // (7) sensor synthesis for the next tick
  if (!aborted_ && est_.type != "none") synthesize_measurement();

  // (8) telemetry
  telemetry_.push_back(std::move(rec));
  ++tick_;
  return true;
}

double Engine::est_moment_magnitude(const RobotRuntime& r) const {
  return r.capsule.magnet.moment_body.norm();
}

void Engine::step_capsule_physics(RobotRuntime& r, TelemetryRecord& rec,
                                  int index) {
  const int sub = std::max(1, scn_.substeps);
  const double h = scn_.dt / sub;
  const std::vector<double> in = drive_inputs();
  const bool env = scn_.environment.present && scn_.environment.mesh.built();

  for (int k = 0; k < sub; ++k) {
    capsule::CapsuleState& s = r.capsule;
    const Vec3 mag_pos = s.pose.position + s.pose.orientation * s.magnet.offset_body;
    const field::FieldSample fs = field::total_field(sources_, in, mag_pos);
    const field::Wrench w =
        field::magnetic_wrench(capsule::world_moment(s), fs.b, fs.g);

    std::vector<capsule::AppliedForce> applied;
    double contact_norm = 0.0;
    if (env) {
      const Mat3 R = s.pose.orientation.toRotationMatrix();
      const Vec3 omega_w = R * s.angular_velocity;
      const double half = std::max(s.shape.length / 2.0 - s.shape.radius, 0.0);
      std::vector<world::BodySample> probes;
      for (double c : {-1.0, 0.0, 1.0}) {  // capsule long axis = body x
        const Vec3 off_w = R * Vec3(c * half, 0.0, 0.0);
        probes.push_back({s.pose.position + off_w, s.shape.radius,
                          s.linear_velocity + omega_w.cross(off_w)});
      }
      for (const world::ContactForce& cf :
           world::contact_forces(probes, scn_.environment.mesh)) {
        if (!cf.active) continue;
        applied.push_back({cf.force, cf.point});
        contact_norm += cf.force.norm();
      }
    }
    if (k == 0) {
      rec.robots[index].wrench = w;
      rec.robots[index].contact_force = contact_norm;
    }
    s = capsule::capsule_step(s, w, applied, scn_.gravity, h, r.capsule_damping);
  }
}

void Engine::step_beam_physics(RobotRuntime& r, TelemetryRecord& rec, int index,
                               double insertion_velocity) {
  const double delta = insertion_velocity * scn_.dt;
  if (delta != 0.0) r.beam = beam::advance(r.beam, delta);

  const std::vector<double> in = drive_inputs();
  // recorded wrench: tip load at the recorded (pre-solve) pose under this
  // tick's drive; the solve itself re-evaluates the load as the tip moves
  const Pose tipf = beam::tip_frame(r.beam);
  const Vec3 m_tip = tipf.orientation * r.beam.tip_magnet.moment_body;
  const field::FieldSample fs = field::total_field(sources_, in, tipf.position);
  const field::Wrench w = field::magnetic_wrench(m_tip, fs.b, fs.g);

  std::vector<Vec3> nodal = beam::gravity_nodal_forces(r.beam, r.props, scn_.gravity);
  double contact_norm = 0.0;
  if (scn_.environment.present && scn_.environment.mesh.built()) {
    for (int i = 0; i < r.beam.node_count(); ++i) {
      // quasi-static: no tracked node velocity, penalty spring only
      const world::BodySample b{r.beam.node_poses[i].position,
                                r.props.outer_diameter / 2.0, Vec3::Zero()};
      const world::ContactForce cf = world::sphere_contact(b, scn_.environment.mesh);
      if (!cf.active) continue;
      nodal[static_cast<size_t>(i)] += cf.force;
      contact_norm += cf.force.norm();
    }
  }
  rec.robots[index].wrench = w;
  rec.robots[index].contact_force = contact_norm;

  const auto field_at = [this, &in](const Vec3& p) {
    return field::total_field(sources_, in, p);
  };
  auto [solved, rep] = beam::solve_equilibrium(r.beam, r.props, field_at, nodal);
  rec.flags.solver_failed = rec.flags.solver_failed || !rep.converged;
  if (!rep.diverged) r.beam = std::move(solved);  // diverged: keep last shape
}

void Engine::run() {
  while (step_once()) {
  }
}

TelemetryLayout Engine::layout() const {
  return {static_cast<int>(robots_.size()),
          static_cast<int>(coil_rig_ ? sources_.size() : 0),
          static_cast<int>(magnet_index_.size())};
}

const capsule::CapsuleState& Engine::capsule_state(int robot) const {
  const auto& r = robots_.at(static_cast<size_t>(robot));
  if (!r.is_capsule)
    throw std::logic_error("engine: robot " + std::to_string(robot) +
                           " is not a capsule");
  return r.capsule;
}

const beam::BeamState& Engine::beam_state(int robot) const {
  const auto& r = robots_.at(static_cast<size_t>(robot));
  if (r.is_capsule)
    throw std::logic_error("engine: robot " + std::to_string(robot) +
                           " is not a continuum robot");
  return r.beam;
}

std::string Engine::save_state() const {
  njson j;
  j["tick"] = tick_;
  j["aborted"] = aborted_;
  j["abort_reason"] = abort_reason_;
  j["rng"] = rng_.save_state();
  j["currents"] = to_json(currents_);

  njson mags = njson::array();
  for (int idx : magnet_index_) {
    const auto& pm = std::get<field::DipoleMagnet>(sources_[idx]);
    mags.push_back({{"position", to_json(pm.pose.position)},
                    {"quat", to_json(pm.pose.orientation)}});
  }
  j["magnet_poses"] = mags;

  njson robots = njson::array();
  for (const RobotRuntime& r : robots_) {
    njson e;
    if (r.is_capsule) {
      e["capsule"] = {{"position", to_json(r.capsule.pose.position)},
                      {"quat", to_json(r.capsule.pose.orientation)},
                      {"linear_velocity", to_json(r.capsule.linear_velocity)},
                      {"angular_velocity", to_json(r.capsule.angular_velocity)}};
    } else {
      njson nodes = njson::array();
      for (const Pose& p : r.beam.node_poses)
        nodes.push_back({{"position", to_json(p.position)},
                         {"quat", to_json(p.orientation)}});
      e["beam"] = {{"nodes", nodes},
                   {"rest_lengths", r.beam.element_rest_lengths},
                   {"inserted", r.beam.inserted_length}};
    }
    e["controller"] = {{"pos_integral", to_json(r.pos_integral)},
                       {"pos_prev_error", to_json(r.pos_prev_error)},
                       {"ori_integral", to_json(r.ori_integral)},
                       {"ori_prev_error", to_json(r.ori_prev_error)},
                       {"rolling_axis", to_json(r.rolling_axis)}};
    robots.push_back(e);
  }
  j["robots"] = robots;

  if (est_.type != "none") {
    njson e;
    e["type"] = est_.type;
    e["z"] = to_json(est_.z);
    e["z_inputs"] = to_json(est_.z_inputs);
    if (est_.type == "ekf") {
      e["position"] = to_json(est_.ekf.position);
      e["velocity"] = to_json(est_.ekf.velocity);
      e["direction"] = to_json(est_.ekf.direction);
      njson cov = njson::array();
      for (Eigen::Index r = 0; r < 9; ++r)
        for (Eigen::Index c = 0; c < 9; ++c) cov.push_back(est_.ekf.covariance(r, c));
      e["covariance"] = cov;
    } else {
      e["position"] = to_json(est_.lm_position);
      e["direction"] = to_json(est_.lm_direction);
    }
    j["estimator"] = e;
  }

  njson cap = njson::array();
  for (const CommandRecord& r : captured_.records)
    cap.push_back(njson::array({r.t, r.primary.x(), r.primary.y(), r.primary.z(),
                                r.secondary.x(), r.secondary.y(), r.secondary.z(),
                                r.field, r.insertion}));
  j["captured"] = cap;
  return j.dump(2) + "\n";
}

void Engine::load_state(const std::string& text) {
  njson j;
  try {
    j = njson::parse(text);

    tick_ = j.at("tick").get<long>();
    aborted_ = j.at("aborted").get<bool>();
    abort_reason_ = j.at("abort_reason").get<std::string>();
    rng_.load_state(j.at("rng").get<std::string>());
    currents_ = vecx_from(j.at("currents"));

    const njson& mags = j.at("magnet_poses");
    if (mags.size() != magnet_index_.size())
      throw std::runtime_error("magnet pose count mismatch");
    for (size_t k = 0; k < magnet_index_.size(); ++k) {
      auto& pm = std::get<field::DipoleMagnet>(sources_[magnet_index_[k]]);
      pm.pose.position = vec3_from(mags.at(k).at("position"));
      pm.pose.orientation = quat_from(mags.at(k).at("quat"));
    }

    const njson& robots = j.at("robots");
    if (robots.size() != robots_.size())
      throw std::runtime_error("robot count mismatch");
    for (size_t i = 0; i < robots_.size(); ++i) {
      RobotRuntime& r = robots_[i];
      const njson& e = robots.at(i);
      if (r.is_capsule) {
        const njson& c = e.at("capsule");
        r.capsule.pose.position = vec3_from(c.at("position"));
        r.capsule.pose.orientation = quat_from(c.at("quat"));
        r.capsule.linear_velocity = vec3_from(c.at("linear_velocity"));
        r.capsule.angular_velocity = vec3_from(c.at("angular_velocity"));
      } else {
        const njson& b = e.at("beam");
        const njson& nodes = b.at("nodes");
        r.beam.node_poses.resize(nodes.size());
        for (size_t k = 0; k < nodes.size(); ++k) {
          r.beam.node_poses[k].position = vec3_from(nodes.at(k).at("position"));
          r.beam.node_poses[k].orientation = quat_from(nodes.at(k).at("quat"));
        }
        r.beam.element_rest_lengths =
            b.at("rest_lengths").get<std::vector<double>>();
        r.beam.inserted_length = b.at("inserted").get<double>();
      }
      const njson& c = e.at("controller");
      r.pos_integral = vec3_from(c.at("pos_integral"));
      r.pos_prev_error = vec3_from(c.at("pos_prev_error"));
      r.ori_integral = vec3_from(c.at("ori_integral"));
      r.ori_prev_error = vec3_from(c.at("ori_prev_error"));
      r.rolling_axis = vec3_from(c.at("rolling_axis"));
    }

    if (est_.type != "none") {
      const njson& e = j.at("estimator");
      if (e.at("type").get<std::string>() != est_.type)
        throw std::runtime_error("estimator type mismatch");
      est_.z = vecx_from(e.at("z"));
      est_.z_inputs = vecx_from(e.at("z_inputs"));
      if (est_.type == "ekf") {
        est_.ekf.position = vec3_from(e.at("position"));
        est_.ekf.velocity = vec3_from(e.at("velocity"));
        est_.ekf.direction = vec3_from(e.at("direction"));
        const njson& cov = e.at("covariance");
        if (cov.size() != 81) throw std::runtime_error("covariance size");
        est_.ekf.covariance.resize(9, 9);
        for (Eigen::Index r = 0; r < 9; ++r)
          for (Eigen::Index c = 0; c < 9; ++c)
            est_.ekf.covariance(r, c) =
                cov.at(static_cast<size_t>(9 * r + c)).get<double>();
      } else {
        est_.lm_position = vec3_from(e.at("position"));
        est_.lm_direction = vec3_from(e.at("direction"));
      }
    }

    captured_.records.clear();
    for (const njson& row : j.at("captured")) {
      CommandRecord r;
      r.t = row.at(0).get<double>();
      r.primary = Vec3(row.at(1).get<double>(), row.at(2).get<double>(),
                       row.at(3).get<double>());
      r.secondary = Vec3(row.at(4).get<double>(), row.at(5).get<double>(),
                         row.at(6).get<double>());
      r.field = row.at(7).get<double>();
      r.insertion = row.at(8).get<double>();
      captured_.records.push_back(r);
    }
  } catch (const njson::exception& e) {
    throw std::runtime_error(std::string("engine state: malformed document: ") +
                             e.what());
  }
}

}  // namespace magnav::engine
