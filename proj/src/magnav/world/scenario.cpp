#include "magnav/world/scenario.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace magnav::world {

namespace {

using njson = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Normalize, but leave already-unit vectors bit-untouched so a value that
// has been through one load/echo cycle survives the next one verbatim.
Vec3 unitize(const Vec3& v) {
  const double n2 = v.squaredNorm();
  if (std::abs(n2 - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon())
    return v;
  return v / std::sqrt(n2);
}

struct Ctx {
  std::vector<std::string> problems;
  void fail(const std::string& where, const std::string& what) {
    problems.push_back(where + ": " + what);
  }
};

// A JSON object with typed accessors that record problems instead of
// throwing, so one pass collects everything wrong with the file. finish()
// flags keys nobody consumed (usually typos).
class Obj {
 public:
  Obj(Ctx& ctx, const njson* j, std::string path)
      : ctx_(&ctx), j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) {
      ctx_->fail(path_, "expected an object");
      j_ = nullptr;
    }
  }

  bool present() const { return j_ != nullptr; }
  const std::string& path() const { return path_; }
  std::string dot(const char* key) const { return path_ + "." + key; }

  const njson* raw(const char* key) {
    if (!j_) return nullptr;
    used_.insert(key);
    const auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  bool has(const char* key) const { return j_ && j_->contains(key); }

  void missing(const char* key) {
    ctx_->fail(path_, std::string("missing required key '") + key + "'");
  }

  double num(const char* key, double def, bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return def;
    }
    if (!v->is_number()) {
      ctx_->fail(dot(key), "expected a number");
      return def;
    }
    return v->get<double>();
  }

  double pos(const char* key, double def, bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return def;
    }
    if (!v->is_number()) {
      ctx_->fail(dot(key), "expected a number");
      return def;
    }
    const double x = v->get<double>();
    if (!(x > 0.0) || !std::isfinite(x)) {
      ctx_->fail(dot(key), "must be a positive number");
      return def;
    }
    return x;
  }

  double nonneg(const char* key, double def, bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return def;
    }
    if (!v->is_number()) {
      ctx_->fail(dot(key), "expected a number");
      return def;
    }
    const double x = v->get<double>();
    if (!(x >= 0.0) || !std::isfinite(x)) {
      ctx_->fail(dot(key), "must be a nonnegative number");
      return def;
    }
    return x;
  }

  int integer(const char* key, int def, int lo, int hi, bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return def;
    }
    if (!v->is_number_integer()) {
      ctx_->fail(dot(key), "expected an integer");
      return def;
    }
    const auto x = v->get<long long>();
    if (x < lo || x > hi) {
      ctx_->fail(dot(key), "must be in [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]");
      return def;
    }
    return int(x);
  }

  std::uint64_t uint(const char* key, std::uint64_t def) {
    const njson* v = raw(key);
    if (!v) return def;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)) {
      ctx_->fail(dot(key), "expected a nonnegative integer");
      return def;
    }
    return v->get<std::uint64_t>();
  }

  std::string str(const char* key, const std::string& def,
                  bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return def;
    }
    if (!v->is_string()) {
      ctx_->fail(dot(key), "expected a string");
      return def;
    }
    return v->get<std::string>();
  }

  bool is_vec3(const njson& v) const {
    return v.is_array() && v.size() == 3 && v[0].is_number() &&
           v[1].is_number() && v[2].is_number();
  }

  Vec3 vec3(const char* key, const Vec3& def, bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return def;
    }
    if (!is_vec3(*v)) {
      ctx_->fail(dot(key), "expected [x, y, z]");
      return def;
    }
    return Vec3((*v)[0].get<double>(), (*v)[1].get<double>(),
                (*v)[2].get<double>());
  }

  // Scalar broadcasts to all three channels.
  Vec3 vec3_or_scalar(const char* key, const Vec3& def,
                      bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return def;
    }
    if (v->is_number()) return Vec3::Constant(v->get<double>());
    if (!is_vec3(*v)) {
      ctx_->fail(dot(key), "expected a number or [x, y, z]");
      return def;
    }
    return Vec3((*v)[0].get<double>(), (*v)[1].get<double>(),
                (*v)[2].get<double>());
  }

  Obj child(const char* key, bool required = false) {
    const njson* v = raw(key);
    if (!v && required) missing(key);
    return Obj(*ctx_, v, dot(key));
  }

  const njson* array(const char* key, bool required = false) {
    const njson* v = raw(key);
    if (!v) {
      if (required) missing(key);
      return nullptr;
    }
    if (!v->is_array()) {
      ctx_->fail(dot(key), "expected an array");
      return nullptr;
    }
    return v;
  }

  void ignore(const char* key) { used_.insert(key); }

  void finish() {
    if (!j_) return;
    for (const auto& item : j_->items()) {
      if (!used_.count(item.key()))
        ctx_->fail(path_, "unknown key '" + item.key() + "'");
    }
  }

 private:
  Ctx* ctx_;
  const njson* j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string resolve_path(const std::string& base_dir, const std::string& rel) {
  const std::filesystem::path p(rel);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

control::PidGains parse_gains(Obj& parent, const char* key) {
  control::PidGains out;
  Obj g = parent.child(key);
  if (!g.present()) return out;
  out.kp = g.vec3_or_scalar("kp", Vec3::Zero());
  out.ki = g.vec3_or_scalar("ki", Vec3::Zero());
  out.kd = g.vec3_or_scalar("kd", Vec3::Zero());
  out.integral_clamp = g.pos("integral_clamp", 1.0);
  out.output_clamp = g.pos("output_clamp", 1e9);
  g.finish();
  return out;
}

Vec3 unit_or_fail(Ctx& ctx, const std::string& where, const Vec3& v) {
  if (!(v.norm() > 0.0) || !v.allFinite()) {
    ctx.fail(where, "must be a nonzero vector");
    return Vec3::UnitZ();
  }
  return unitize(v);
}

void parse_source(Ctx& ctx, Obj& o, const std::string& base_dir,
                  SourceConfig& out) {
  (void)base_dir;
  out.type = o.str("type", "", true);
  if (out.type == "helmholtz") {
    out.axis = unit_or_fail(ctx, o.dot("axis"), o.vec3("axis", Vec3::UnitZ(), true));
    out.gain = o.num("field_gain_T_A", 0.0, true);
    out.radius = o.pos("radius_m", 0.1, true);
    if (out.gain == 0.0 && o.has("field_gain_T_A"))
      ctx.fail(o.dot("field_gain_T_A"), "must be nonzero");
  } else if (out.type == "maxwell") {
    out.axis = unit_or_fail(ctx, o.dot("axis"), o.vec3("axis", Vec3::UnitZ(), true));
    out.gain = o.num("gradient_gain_T_m_A", 0.0, true);
    out.radius = o.pos("radius_m", 0.1, true);
    if (out.gain == 0.0 && o.has("gradient_gain_T_m_A"))
      ctx.fail(o.dot("gradient_gain_T_m_A"), "must be nonzero");
  } else if (out.type == "dipole_coil") {
    out.position = o.vec3("position_m", Vec3::Zero(), true);
    out.rotvec = o.vec3("rotvec_rad", Vec3::Zero());
    out.moment = o.vec3("moment_per_amp_A_m2_per_A", Vec3::Zero(), true);
    if (out.moment.norm() == 0.0 && o.has("moment_per_amp_A_m2_per_A"))
      ctx.fail(o.dot("moment_per_amp_A_m2_per_A"), "must be nonzero");
  } else if (out.type == "dipole_magnet") {
    out.position = o.vec3("position_m", Vec3::Zero(), true);
    out.rotvec = o.vec3("rotvec_rad", Vec3::Zero());
    out.moment = o.vec3("moment_A_m2", Vec3::Zero(), true);
    if (out.moment.norm() == 0.0 && o.has("moment_A_m2"))
      ctx.fail(o.dot("moment_A_m2"), "must be nonzero");
  } else if (!out.type.empty()) {
    ctx.fail(o.dot("type"),
             "unknown source type '" + out.type +
                 "' (helmholtz, maxwell, dipole_coil, dipole_magnet)");
  }
  o.finish();
}

void parse_capsule(Ctx& ctx, Obj& c, CapsuleConfig& out) {
  out.mass = c.pos("mass_kg", 1e-3, true);
  out.inertia = c.vec3_or_scalar("inertia_kg_m2", Vec3::Constant(1e-9), true);
  if (out.inertia.minCoeff() <= 0.0)
    ctx.fail(c.dot("inertia_kg_m2"), "entries must be positive");
  out.length = c.pos("length_m", 0.02, true);
  out.diameter = c.pos("diameter_m", 0.01, true);
  out.magnet_moment = c.pos("magnet_moment_A_m2", 0.1, true);
  out.magnet_axis = unit_or_fail(ctx, c.dot("magnet_axis_body"),
                                 c.vec3("magnet_axis_body", Vec3::UnitX()));
  out.magnet_offset = c.vec3("magnet_offset_m", Vec3::Zero());
  out.rotational_damping = c.nonneg("rotational_damping_N_m_s", 1e-6);
  out.initial_position = c.vec3("initial_position_m", Vec3::Zero());
  out.initial_rotvec = c.vec3("initial_rotvec_rad", Vec3::Zero());
  out.initial_velocity = c.vec3("initial_velocity_m_s", Vec3::Zero());
  out.initial_angular_velocity =
      c.vec3("initial_angular_velocity_rad_s", Vec3::Zero());
  c.finish();
}

void parse_continuum(Ctx& ctx, Obj& c, ContinuumConfig& out) {
  auto& p = out.properties;
  p.youngs_modulus = c.pos("youngs_modulus_Pa", 1e9, true);
  p.shear_modulus = c.pos("shear_modulus_Pa", p.youngs_modulus / 2.6);
  p.outer_diameter = c.pos("outer_diameter_m", 1e-3, true);
  p.inner_diameter = c.nonneg("inner_diameter_m", 0.0);
  if (p.inner_diameter >= p.outer_diameter)
    ctx.fail(c.dot("inner_diameter_m"), "must be smaller than the outer diameter");
  p.density = c.nonneg("density_kg_m3", 0.0);
  out.total_length = c.pos("total_length_m", 0.1, true);
  out.inserted_length = c.pos("inserted_length_m", 0.05, true);
  if (out.inserted_length > out.total_length)
    ctx.fail(c.dot("inserted_length_m"), "exceeds total_length_m");
  out.max_element_length = c.pos("max_element_length_m", 5e-3);
  out.tip_moment = c.pos("tip_moment_A_m2", 0.05, true);
  out.base_position = c.vec3("base_position_m", Vec3::Zero());
  out.base_rotvec = c.vec3("base_rotvec_rad", Vec3::Zero());
  out.advance_speed = c.nonneg("advance_speed_m_s", 0.0);
  c.finish();
}

void parse_trajectory(Ctx& ctx, Obj& t, const std::string& base_dir,
                      double dt, RobotConfig& robot) {
  const int degree = t.integer("degree", 3, 1, 7);
  const double speed = t.pos("speed_m_s", 1e-3, true);
  const njson* wp = t.array("waypoints_m");
  const std::string centerline = t.str("centerline_file", "");
  const njson* hd = t.array("headings");

  if ((wp != nullptr) == !centerline.empty()) {
    ctx.fail(t.path(),
             "exactly one of 'waypoints_m' and 'centerline_file' is required");
    t.finish();
    return;
  }

  std::vector<Vec3> waypoints;
  if (wp) {
    for (size_t i = 0; i < wp->size(); ++i) {
      const njson& e = (*wp)[i];
      if (!t.is_vec3(e)) {
        ctx.fail(t.dot("waypoints_m") + "[" + std::to_string(i) + "]",
                 "expected [x, y, z]");
        t.finish();
        return;
      }
      waypoints.emplace_back(e[0].get<double>(), e[1].get<double>(),
                             e[2].get<double>());
    }
  } else {
    robot.centerline_file = resolve_path(base_dir, centerline);
    try {
      waypoints = load_centerline(robot.centerline_file);
    } catch (const std::exception& e) {
      ctx.fail(t.dot("centerline_file"), e.what());
      t.finish();
      return;
    }
  }

  std::vector<Vec3> headings;
  if (hd) {
    for (size_t i = 0; i < hd->size(); ++i) {
      const njson& e = (*hd)[i];
      if (!t.is_vec3(e)) {
        ctx.fail(t.dot("headings") + "[" + std::to_string(i) + "]",
                 "expected [x, y, z]");
        t.finish();
        return;
      }
      headings.emplace_back(e[0].get<double>(), e[1].get<double>(),
                            e[2].get<double>());
    }
  }

  t.finish();
  if (!(dt > 0.0)) return;  // dt problem already recorded at the top level
  try {
    robot.trajectory = bspline_trajectory(waypoints, degree, speed, dt, headings);
  } catch (const std::exception& e) {
    ctx.fail(t.path(), e.what());
  }
}

void parse_robot(Ctx& ctx, Obj& r, const std::string& base_dir, double dt,
                 size_t index, RobotConfig& out) {
  out.name = r.str("name", "robot-" + std::to_string(index));
  const std::string type = r.str("type", "", true);
  if (type == "capsule") {
    if (r.has("continuum"))
      ctx.fail(r.path(), "'continuum' block on a robot of type 'capsule'");
    Obj c = r.child("capsule", true);
    CapsuleConfig cc;
    if (c.present()) parse_capsule(ctx, c, cc);
    out.body = cc;
  } else if (type == "continuum") {
    if (r.has("capsule"))
      ctx.fail(r.path(), "'capsule' block on a robot of type 'continuum'");
    Obj c = r.child("continuum", true);
    ContinuumConfig cc;
    if (c.present()) parse_continuum(ctx, c, cc);
    out.body = cc;
  } else if (!type.empty()) {
    ctx.fail(r.dot("type"),
             "unknown robot type '" + type + "' (capsule, continuum)");
  }

  Obj t = r.child("trajectory");
  if (t.present()) parse_trajectory(ctx, t, base_dir, dt, out);
  r.finish();
}

}  // namespace

ScenarioValidationError::ScenarioValidationError(
    std::vector<std::string> problems)
    : std::runtime_error([&problems] {
        std::ostringstream os;
        os << "scenario validation failed (" << problems.size()
           << (problems.size() == 1 ? " problem)" : " problems)");
        for (const auto& p : problems) os << "\n  - " << p;
        return os.str();
      }()),
      problems_(std::move(problems)) {}

field::MagneticSource SourceConfig::build() const {
  if (type == "helmholtz") return field::HelmholtzPair{axis, gain, radius};
  if (type == "maxwell") return field::MaxwellPair{axis, gain, radius};
  if (type == "dipole_coil")
    return field::DipoleCoil{{position, exp_quat(rotvec)}, moment};
  if (type == "dipole_magnet")
    return field::DipoleMagnet{{position, exp_quat(rotvec)}, moment};
  throw std::logic_error("source config: unknown type '" + type + "'");
}

std::vector<field::MagneticSource> build_sources(const Scenario& s) {
  std::vector<field::MagneticSource> out;
  out.reserve(s.sources.size());
  for (const auto& src : s.sources) out.push_back(src.build());
  return out;
}

std::vector<tracking::SensorSpec> sensor_specs(const Scenario& s) {
  std::vector<tracking::SensorSpec> out;
  out.reserve(s.sensors.size());
  for (const auto& sen : s.sensors) out.push_back(sen.spec());
  return out;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ScenarioValidationError({"cannot open scenario file " + path});

  njson doc;
  try {
    doc = njson::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const njson::parse_error& e) {
    throw ScenarioValidationError({std::string("json parse error: ") + e.what()});
  }

  const std::string base_dir =
      std::filesystem::path(path).parent_path().string();

  Ctx ctx;
  Obj top(ctx, &doc, "scenario");
  Scenario s;
  s.source_path = path;

  s.name = top.str("name",
                   std::filesystem::path(path).stem().string());
  s.dt = top.pos("dt_s", 0.0, true);
  s.duration = top.pos("duration_s", 0.0, true);
  if (s.dt > 0.0 && s.duration > 0.0 && s.duration < s.dt)
    ctx.fail("scenario.duration_s", "shorter than one tick");
  s.seed = top.uint("seed", 0);
  s.substeps = top.integer("physics_substeps", 10, 1, 10000);
  s.gravity = top.vec3("gravity_m_s2", Vec3(0.0, 0.0, -9.81));

  // --- environment -------------------------------------------------------
  Obj env = top.child("environment");
  if (env.present()) {
    auto& e = s.environment;
    e.present = true;
    const std::string mesh_rel = env.str("mesh_stl", "", true);
    e.translation = env.vec3("translation_m", Vec3::Zero());
    e.friction = env.nonneg("friction", 0.1);
    e.stiffness = env.pos("stiffness_N_m", 500.0);
    e.damping = env.nonneg("damping_N_s_m", 5.0);
    e.contact_margin = env.pos("contact_margin_m", 1e-3);
    env.ignore("rigid_approximation");  // echo marker, informational
    env.ignore("note");
    env.finish();
    if (!mesh_rel.empty()) {
      e.mesh_stl = resolve_path(base_dir, mesh_rel);
      try {
        e.mesh = load_mesh(e.mesh_stl);
        for (Vec3& v : e.mesh.vertices) v += e.translation;
        e.mesh.friction = e.friction;
        e.mesh.stiffness = e.stiffness;
        e.mesh.damping = e.damping;
        e.mesh.contact_margin = e.contact_margin;
        e.mesh.build();
      } catch (const std::exception& ex) {
        ctx.fail(env.dot("mesh_stl"), ex.what());
      }
    }
  }

  // --- robots ------------------------------------------------------------
  if (const njson* robots = top.array("robots", true)) {
    for (size_t i = 0; i < robots->size(); ++i) {
      Obj r(ctx, &(*robots)[i], "robots[" + std::to_string(i) + "]");
      RobotConfig rc;
      parse_robot(ctx, r, base_dir, s.dt, i, rc);
      s.robots.push_back(std::move(rc));
    }
    if (robots->empty())
      ctx.fail("scenario.robots", "at least one robot is required");
  }

  // --- actuators ---------------------------------------------------------
  Obj act = top.child("actuators", true);
  if (act.present()) {
    if (const njson* sources = act.array("sources", true)) {
      for (size_t i = 0; i < sources->size(); ++i) {
        Obj o(ctx, &(*sources)[i],
              "actuators.sources[" + std::to_string(i) + "]");
        SourceConfig sc;
        parse_source(ctx, o, base_dir, sc);
        s.sources.push_back(std::move(sc));
      }
      if (sources->empty())
        ctx.fail("scenario.actuators.sources", "at least one source is required");
    }
    if (act.has("current_limit_A"))
      s.current_limit = act.pos("current_limit_A", s.current_limit);
    act.finish();
  }

  // --- sensors -----------------------------------------------------------
  if (const njson* sensors = top.array("sensors")) {
    for (size_t i = 0; i < sensors->size(); ++i) {
      Obj o(ctx, &(*sensors)[i], "sensors[" + std::to_string(i) + "]");
      SensorConfig sc;
      sc.position = o.vec3("position_m", Vec3::Zero(), true);
      sc.rotvec = o.vec3("rotvec_rad", Vec3::Zero());
      sc.noise_sigma = o.vec3_or_scalar("noise_sigma_T", Vec3::Zero());
      if (sc.noise_sigma.minCoeff() < 0.0)
        ctx.fail(o.dot("noise_sigma_T"), "must be nonnegative");
      o.finish();
      s.sensors.push_back(sc);
    }
  }

  // --- controller --------------------------------------------------------
  Obj con = top.child("controller", true);
  if (con.present()) {
    auto& c = s.controller;
    c.mode = con.str("mode", "", true);
    if (con.has("mode") && c.mode != "capsule-pose" &&
        c.mode != "capsule-rolling" && c.mode != "continuum-field")
      ctx.fail(con.dot("mode"),
               "unknown mode '" + c.mode +
                   "' (capsule-pose, capsule-rolling, continuum-field)");
    const double rate = con.num("rate_hz", 0.0);
    if (rate > 0.0 && s.dt > 0.0 && std::abs(rate * s.dt - 1.0) > 1e-9)
      ctx.fail(con.dot("rate_hz"),
               "inconsistent with dt_s (rate * dt = " +
                   std::to_string(rate * s.dt) + ", expected 1)");
    c.field_magnitude = con.nonneg("field_magnitude_T", 0.0);
    c.position_gains = parse_gains(con, "position_gains");
    c.orientation_gains = parse_gains(con, "orientation_gains");
    c.allocation_damping = con.nonneg("allocation_damping", 1e-4);
    c.rolling_frequency = con.nonneg("rolling_frequency_hz", 0.0);
    Obj pm = con.child("pm_step");
    if (pm.present()) {
      c.pm_step.max_position_step =
          pm.pos("max_position_step_m", c.pm_step.max_position_step);
      c.pm_step.max_rotation_step =
          pm.pos("max_rotation_step_rad", c.pm_step.max_rotation_step);
      pm.finish();
    }
    con.finish();
  }

  // --- estimator ---------------------------------------------------------
  Obj est = top.child("estimator");
  if (est.present()) {
    auto& e = s.estimator;
    e.type = est.str("type", "none");
    if (e.type != "none" && e.type != "ekf" && e.type != "lm")
      ctx.fail(est.dot("type"),
               "unknown estimator '" + e.type + "' (none, ekf, lm)");
    e.accel_sigma = est.vec3_or_scalar("accel_sigma_m_s2", e.accel_sigma);
    e.gyro_sigma = est.vec3_or_scalar("gyro_sigma_rad_s", e.gyro_sigma);
    e.initial_position_sigma =
        est.pos("initial_position_sigma_m", e.initial_position_sigma);
    e.initial_velocity_sigma =
        est.pos("initial_velocity_sigma_m_s", e.initial_velocity_sigma);
    e.initial_direction_sigma =
        est.pos("initial_direction_sigma", e.initial_direction_sigma);
    if (e.accel_sigma.minCoeff() <= 0.0)
      ctx.fail(est.dot("accel_sigma_m_s2"), "must be positive");
    if (e.gyro_sigma.minCoeff() <= 0.0)
      ctx.fail(est.dot("gyro_sigma_rad_s"), "must be positive");
    est.finish();
  }

  // --- command log -------------------------------------------------------
  const std::string log_rel = top.str("command_log", "");
  if (!log_rel.empty()) {
    s.command_log = resolve_path(base_dir, log_rel);
    if (!std::filesystem::exists(s.command_log))
      ctx.fail("scenario.command_log", "file not found: " + s.command_log);
  }

  top.finish();

  // --- cross-field checks ------------------------------------------------
  const auto& mode = s.controller.mode;
  if (mode == "capsule-pose" || mode == "capsule-rolling") {
    for (size_t i = 0; i < s.robots.size(); ++i)
      if (!s.robots[i].is_capsule())
        ctx.fail("robots[" + std::to_string(i) + "]",
                 "mode '" + mode + "' drives capsule robots only");
  } else if (mode == "continuum-field") {
    if (s.robots.size() != 1 ||
        (s.robots.size() == 1 && s.robots[0].is_capsule()))
      ctx.fail("scenario.robots",
               "mode 'continuum-field' drives exactly one continuum robot");
  }
  if (s.command_log.empty()) {
    for (size_t i = 0; i < s.robots.size(); ++i)
      if (!s.robots[i].trajectory)
        ctx.fail("robots[" + std::to_string(i) + "]",
                 "needs a trajectory (or a scenario-level command_log)");
    if (!mode.empty() && s.controller.field_magnitude <= 0.0)
      ctx.fail("scenario.controller.field_magnitude_T",
               "must be positive for closed-loop runs");
  }
  if (mode == "capsule-rolling" && s.controller.rolling_frequency <= 0.0)
    ctx.fail("scenario.controller.rolling_frequency_hz",
             "must be positive in capsule-rolling mode");
  if (s.estimator.type != "none") {
    if (s.sensors.empty())
      ctx.fail("scenario.sensors",
               "estimator '" + s.estimator.type + "' needs at least one sensor");
    if (s.robots.size() != 1)
      ctx.fail("scenario.estimator",
               "pose tracking supports exactly one robot");
    else if (!s.robots[0].is_capsule())
      ctx.fail("scenario.estimator",
               "the sensor array tracks a capsule-borne magnet; continuum "
               "robots run without pose feedback");
  }
  {
    bool any_magnet = false, any_coil = false;
    for (const auto& src : s.sources)
      (src.type == "dipole_magnet" ? any_magnet : any_coil) = true;
    if (any_magnet && any_coil)
      ctx.fail("scenario.actuators.sources",
               "coil and dipole_magnet actuators cannot be mixed in one rig");
  }

  if (!ctx.problems.empty()) throw ScenarioValidationError(std::move(ctx.problems));
  return s;
}

namespace {

ojson jvec(const Vec3& v) { return ojson::array({v.x(), v.y(), v.z()}); }

ojson jgains(const control::PidGains& g) {
  ojson out;
  out["kp"] = jvec(g.kp);
  out["ki"] = jvec(g.ki);
  out["kd"] = jvec(g.kd);
  out["integral_clamp"] = g.integral_clamp;
  out["output_clamp"] = g.output_clamp;
  return out;
}

}  // namespace

std::string scenario_echo(const Scenario& s) {
  ojson root;
  root["name"] = s.name;
  root["dt_s"] = s.dt;
  root["duration_s"] = s.duration;
  root["seed"] = s.seed;
  root["physics_substeps"] = s.substeps;
  root["gravity_m_s2"] = jvec(s.gravity);

  if (s.environment.present) {
    const auto& e = s.environment;
    ojson env;
    env["mesh_stl"] = e.mesh_stl;
    env["translation_m"] = jvec(e.translation);
    env["friction"] = e.friction;
    env["stiffness_N_m"] = e.stiffness;
    env["damping_N_s_m"] = e.damping;
    env["contact_margin_m"] = e.contact_margin;
    // The solver treats anatomy as a rigid boundary; compliance lives in the
    // penalty parameters above, not in tissue deformation.
    env["rigid_approximation"] = true;
    root["environment"] = env;
  }

  root["robots"] = ojson::array();
  for (const auto& r : s.robots) {
    ojson jr;
    jr["name"] = r.name;
    if (r.is_capsule()) {
      const auto& c = r.capsule();
      jr["type"] = "capsule";
      ojson jc;
      jc["mass_kg"] = c.mass;
      jc["inertia_kg_m2"] = jvec(c.inertia);
      jc["length_m"] = c.length;
      jc["diameter_m"] = c.diameter;
      jc["magnet_moment_A_m2"] = c.magnet_moment;
      jc["magnet_axis_body"] = jvec(c.magnet_axis);
      jc["magnet_offset_m"] = jvec(c.magnet_offset);
      jc["rotational_damping_N_m_s"] = c.rotational_damping;
      jc["initial_position_m"] = jvec(c.initial_position);
      jc["initial_rotvec_rad"] = jvec(c.initial_rotvec);
      jc["initial_velocity_m_s"] = jvec(c.initial_velocity);
      jc["initial_angular_velocity_rad_s"] = jvec(c.initial_angular_velocity);
      jr["capsule"] = jc;
    } else {
      const auto& c = r.continuum();
      jr["type"] = "continuum";
      ojson jc;
      jc["youngs_modulus_Pa"] = c.properties.youngs_modulus;
      jc["shear_modulus_Pa"] = c.properties.shear_modulus;
      jc["outer_diameter_m"] = c.properties.outer_diameter;
      jc["inner_diameter_m"] = c.properties.inner_diameter;
      jc["density_kg_m3"] = c.properties.density;
      jc["total_length_m"] = c.total_length;
      jc["inserted_length_m"] = c.inserted_length;
      jc["max_element_length_m"] = c.max_element_length;
      jc["tip_moment_A_m2"] = c.tip_moment;
      jc["base_position_m"] = jvec(c.base_position);
      jc["base_rotvec_rad"] = jvec(c.base_rotvec);
      jc["advance_speed_m_s"] = c.advance_speed;
      jr["continuum"] = jc;
    }
    if (r.trajectory) {
      const auto& t = *r.trajectory;
      ojson jt;
      jt["degree"] = t.degree;
      jt["speed_m_s"] = t.speed;
      if (!r.centerline_file.empty()) {
        jt["centerline_file"] = r.centerline_file;
      } else {
        ojson wps = ojson::array();
        for (const Vec3& w : t.waypoints) wps.push_back(jvec(w));
        jt["waypoints_m"] = wps;
      }
      if (!t.headings.empty()) {
        ojson hds = ojson::array();
        for (const Vec3& h : t.headings) hds.push_back(jvec(h));
        jt["headings"] = hds;
      }
      jr["trajectory"] = jt;
    }
    root["robots"].push_back(jr);
  }

  ojson act;
  act["sources"] = ojson::array();
  for (const auto& src : s.sources) {
    ojson js;
    js["type"] = src.type;
    if (src.type == "helmholtz") {
      js["axis"] = jvec(src.axis);
      js["field_gain_T_A"] = src.gain;
      js["radius_m"] = src.radius;
    } else if (src.type == "maxwell") {
      js["axis"] = jvec(src.axis);
      js["gradient_gain_T_m_A"] = src.gain;
      js["radius_m"] = src.radius;
    } else if (src.type == "dipole_coil") {
      js["position_m"] = jvec(src.position);
      js["rotvec_rad"] = jvec(src.rotvec);
      js["moment_per_amp_A_m2_per_A"] = jvec(src.moment);
    } else {
      js["position_m"] = jvec(src.position);
      js["rotvec_rad"] = jvec(src.rotvec);
      js["moment_A_m2"] = jvec(src.moment);
    }
    act["sources"].push_back(js);
  }
  if (std::isfinite(s.current_limit))
    act["current_limit_A"] = s.current_limit;
  root["actuators"] = act;

  if (!s.sensors.empty()) {
    root["sensors"] = ojson::array();
    for (const auto& sen : s.sensors) {
      ojson js;
      js["position_m"] = jvec(sen.position);
      js["rotvec_rad"] = jvec(sen.rotvec);
      js["noise_sigma_T"] = jvec(sen.noise_sigma);
      root["sensors"].push_back(js);
    }
  }

  ojson con;
  con["mode"] = s.controller.mode;
  con["field_magnitude_T"] = s.controller.field_magnitude;
  con["position_gains"] = jgains(s.controller.position_gains);
  con["orientation_gains"] = jgains(s.controller.orientation_gains);
  con["allocation_damping"] = s.controller.allocation_damping;
  con["rolling_frequency_hz"] = s.controller.rolling_frequency;
  if (std::isfinite(s.controller.pm_step.max_position_step) ||
      std::isfinite(s.controller.pm_step.max_rotation_step)) {
    ojson pm;
    if (std::isfinite(s.controller.pm_step.max_position_step))
      pm["max_position_step_m"] = s.controller.pm_step.max_position_step;
    if (std::isfinite(s.controller.pm_step.max_rotation_step))
      pm["max_rotation_step_rad"] = s.controller.pm_step.max_rotation_step;
    con["pm_step"] = pm;
  }
  root["controller"] = con;

  ojson est;
  est["type"] = s.estimator.type;
  est["accel_sigma_m_s2"] = jvec(s.estimator.accel_sigma);
  est["gyro_sigma_rad_s"] = jvec(s.estimator.gyro_sigma);
  est["initial_position_sigma_m"] = s.estimator.initial_position_sigma;
  est["initial_velocity_sigma_m_s"] = s.estimator.initial_velocity_sigma;
  est["initial_direction_sigma"] = s.estimator.initial_direction_sigma;
  root["estimator"] = est;

  if (!s.command_log.empty()) root["command_log"] = s.command_log;

  return root.dump(2) + "\n";
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("scenario: cannot write " + path);
  out << scenario_echo(s);
}

}  // namespace magnav::world
