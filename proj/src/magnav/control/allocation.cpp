#include "magnav/control/allocation.hpp"

#include "magnav/field/dipole.hpp"
#include "magnav/field/gradient5.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace magnav::control {
namespace {

// Row-equilibrated damped least squares with conditioning diagnostics.
// expected_rank excludes structural nullspaces (unit-direction targets lose
// one row each, every magnet loses the spin about its own moment axis), so
// the ratio sigma_expected/sigma_max really measures proximity to a
// singular configuration rather than tripping on geometry that can never
// be controlled.
VecX solve_damped(MatX A, VecX y, double damping, int expected_rank,
                  const std::vector<std::string>& row_labels,
                  double singular_ratio_threshold, AllocationReport* report) {
  const Eigen::Index rows = A.rows(), cols = A.cols();
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double n = A.row(r).norm();
    if (n > 1e-300) {
      A.row(r) /= n;
      y[r] /= n;
    }
  }
  Eigen::JacobiSVD<MatX> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX& sigma = svd.singularValues();
  const double s0 = sigma.size() ? sigma[0] : 0.0;

  if (s0 <= 0.0) {
    if (damping == 0.0 && y.norm() > 0.0) {
      Eigen::Index worst = 0;
      y.cwiseAbs().maxCoeff(&worst);
      const std::string label = static_cast<size_t>(worst) < row_labels.size()
                                    ? row_labels[size_t(worst)]
                                    : "row " + std::to_string(worst);
      throw std::runtime_error("allocation singular: cannot actuate " + label +
                               " (conditioning 0.000000)");
    }
    if (report) {
      report->singular = y.norm() > 0.0;
      report->singular_ratio = 0.0;
    }
    return VecX::Zero(cols);
  }

  const int k = std::min<int>(expected_rank, static_cast<int>(sigma.size()));
  const double ratio = k > 0 ? sigma[k - 1] / s0 : 1.0;
  if (report) report->singular_ratio = ratio;

  if (damping == 0.0) {
    if (ratio < 1e-9) {
      // name the target direction that cannot be produced
      const VecX u = svd.matrixU().col(k - 1);
      Eigen::Index worst = 0;
      u.cwiseAbs().maxCoeff(&worst);
      const std::string label = static_cast<size_t>(worst) < row_labels.size()
                                    ? row_labels[size_t(worst)]
                                    : "row " + std::to_string(worst);
      throw std::runtime_error(
          "allocation singular: cannot actuate " + label +
          " (conditioning " + std::to_string(ratio) + ")");
    }
    VecX x = VecX::Zero(cols);
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
      if (sigma[i] > 1e-12 * s0)
        x += svd.matrixV().col(i) *
             (svd.matrixU().col(i).dot(y) / sigma[i]);
    return x;
  }

  if (report && ratio < singular_ratio_threshold) report->singular = true;
  VecX x = VecX::Zero(cols);
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    x += svd.matrixV().col(i) *
         (sigma[i] / (sigma[i] * sigma[i] + damping * damping) *
          svd.matrixU().col(i).dot(y));
  return x;
}

void clamp_currents(VecX& currents, const VecX& limits,
                    AllocationReport* report) {
  if (limits.size() == 0) return;
  if (limits.size() != currents.size())
    throw std::invalid_argument("allocation: one current limit per source");
  for (Eigen::Index i = 0; i < currents.size(); ++i) {
    if (std::abs(currents[i]) > limits[i]) {
      currents[i] = std::copysign(limits[i], currents[i]);
      report->saturated = true;
      report->saturated_indices.push_back(static_cast<int>(i));
    }
  }
}

const char* kAxis[3] = {"x", "y", "z"};

// ----- permanent-magnet Jacobian machinery -------------------------------

// Stacked output of the magnet-pose forward map: per target, the unit field
// direction (3) and, when force-controlled, the magnetic force (3).
VecX pm_outputs(const std::vector<CapsuleTarget>& targets,
                const std::vector<field::DipoleMagnet>& magnets) {
  Eigen::Index rows = 0;
  for (const auto& t : targets) rows += 3 + (t.control_force ? 3 : 0);
  VecX out(rows);
  Eigen::Index r = 0;
  for (const auto& t : targets) {
    Vec3 b = Vec3::Zero(), f = Vec3::Zero();
    for (const auto& mag : magnets) {
      const Vec3 m_world = mag.pose.orientation * mag.moment;
      const Vec3 rel = t.position - mag.pose.position;
      b += field::dipole_field(rel, m_world);
      if (t.control_force)
        f += field::dipole_force(rel, m_world, t.moment_world);
    }
    out.segment<3>(r) = b.normalized();
    r += 3;
    if (t.control_force) {
      out.segment<3>(r) = f;
      r += 3;
    }
  }
  return out;
}

std::vector<field::DipoleMagnet> perturbed(
    const std::vector<field::DipoleMagnet>& magnets, size_t j, int param,
    double h) {
  std::vector<field::DipoleMagnet> out = magnets;
  if (param < 3) {
    out[j].pose.position[param] += h;
  } else {
    out[j].pose.orientation =
        (exp_quat(Vec3(h * Vec3::Unit(param - 3))) * out[j].pose.orientation)
            .normalized();
  }
  return out;
}

}  // namespace

// Central finite differences over magnet pose parameters (position step
// 1e-6 m, rotation step 1e-6 rad).
MatX magnet_step_jacobian_fd(const std::vector<CapsuleTarget>& targets,
                             const std::vector<field::DipoleMagnet>& magnets) {
  const VecX f0 = pm_outputs(targets, magnets);
  MatX J(f0.size(), 6 * static_cast<Eigen::Index>(magnets.size()));
  for (size_t j = 0; j < magnets.size(); ++j) {
    for (int p = 0; p < 6; ++p) {
      const double h = 1e-6;
      const VecX hi = pm_outputs(targets, perturbed(magnets, j, p, h));
      const VecX lo = pm_outputs(targets, perturbed(magnets, j, p, -h));
      J.col(6 * static_cast<Eigen::Index>(j) + p) = (hi - lo) / (2.0 * h);
    }
  }
  return J;
}

// Closed-form Jacobian for the single-magnet case.
MatX magnet_step_jacobian(const std::vector<CapsuleTarget>& targets,
                          const field::DipoleMagnet& mag) {
  Eigen::Index rows = 0;
  for (const auto& t : targets) rows += 3 + (t.control_force ? 3 : 0);
  MatX J(rows, 6);
  const Vec3 m_world = mag.pose.orientation * mag.moment;
  Eigen::Index r = 0;
  for (const auto& t : targets) {
    const Vec3 rel = t.position - mag.pose.position;
    const Vec3 b = field::dipole_field(rel, m_world);
    const double bn = b.norm();
    const Vec3 bh = b / bn;
    const Mat3 P = (Mat3::Identity() - bh * bh.transpose()) / bn;
    // d b / d(actuator position) = -G; d b / d(rotation vector) = -D S(m)
    const Mat3 db_dp = -field::dipole_gradient(rel, m_world);
    const Mat3 db_dth =
        -field::dipole_direction_matrix(rel) * skew(m_world);
    J.block<3, 3>(r, 0) = P * db_dp;
    J.block<3, 3>(r, 3) = P * db_dth;
    r += 3;
    if (t.control_force) {
      J.block<3, 3>(r, 0) =
          -field::dipole_force_position_jacobian(rel, m_world, t.moment_world);
      J.block<3, 3>(r, 3) =
          -field::dipole_gradient(rel, t.moment_world) * skew(m_world);
      r += 3;
    }
  }
  return J;
}

namespace {

PoseAllocation apply_pose_step(const std::vector<field::DipoleMagnet>& magnets,
                               const VecX& dw, const PmStepLimits& limits,
                               AllocationReport report) {
  PoseAllocation out;
  out.report = std::move(report);
  for (size_t j = 0; j < magnets.size(); ++j) {
    Vec3 dp = dw.segment<3>(6 * static_cast<Eigen::Index>(j));
    Vec3 dth = dw.segment<3>(6 * static_cast<Eigen::Index>(j) + 3);
    bool clipped = false;
    if (dp.norm() > limits.max_position_step) {
      dp *= limits.max_position_step / dp.norm();
      clipped = true;
    }
    if (dth.norm() > limits.max_rotation_step) {
      dth *= limits.max_rotation_step / dth.norm();
      clipped = true;
    }
    if (clipped) {
      out.report.saturated = true;
      out.report.saturated_indices.push_back(static_cast<int>(j));
    }
    Pose p = magnets[j].pose;
    p.position += dp;
    p.orientation = (exp_quat(dth) * p.orientation).normalized();
    out.poses.push_back(p);
  }
  return out;
}

}  // namespace

CurrentAllocation allocate_currents(
    const std::vector<CapsuleTarget>& targets,
    const std::vector<field::MagneticSource>& sources, double damping,
    const VecX& current_limits, double singular_ratio_threshold) {
  if (targets.empty())
    throw std::invalid_argument("allocation: need at least one target");
  const Eigen::Index n = static_cast<Eigen::Index>(sources.size());
  Eigen::Index rows = 0;
  for (const auto& t : targets) rows += 3 + (t.control_force ? 3 : 0);

  MatX A(rows, n);
  VecX y(rows);
  std::vector<std::string> labels;
  Eigen::Index r = 0;
  for (size_t ti = 0; ti < targets.size(); ++ti) {
    const CapsuleTarget& t = targets[ti];
    const MatX map = field::field_map_matrix(sources, t.position);
    A.middleRows<3>(r) = map.topRows<3>();
    y.segment<3>(r) = t.field_magnitude * t.field_direction.normalized();
    for (int i = 0; i < 3; ++i)
      labels.push_back("field " + std::string(kAxis[i]) + " at robot " +
                       std::to_string(ti));
    r += 3;
    if (t.control_force) {
      A.middleRows<3>(r) = field::force_map(t.moment_world) * map.bottomRows<5>();
      y.segment<3>(r) = t.force;
      for (int i = 0; i < 3; ++i)
        labels.push_back("force " + std::string(kAxis[i]) + " at robot " +
                         std::to_string(ti));
      r += 3;
    }
  }

  CurrentAllocation out;
  const int expected = static_cast<int>(std::min(rows, n));
  out.currents = solve_damped(A, y, damping, expected, labels,
                              singular_ratio_threshold, &out.report);
  clamp_currents(out.currents, current_limits, &out.report);
  return out;
}

PoseAllocation allocate_magnet_step(const std::vector<CapsuleTarget>& targets,
                                    const std::vector<field::DipoleMagnet>& magnets,
                                    double damping, const PmStepLimits& limits,
                                    double singular_ratio_threshold) {
  if (targets.empty() || magnets.empty())
    throw std::invalid_argument("allocation: needs targets and magnets");

  const MatX J = magnets.size() == 1
                     ? magnet_step_jacobian(targets, magnets[0])
                     : magnet_step_jacobian_fd(targets, magnets);
  const VecX current = pm_outputs(targets, magnets);
  VecX desired(current.size());
  std::vector<std::string> labels;
  Eigen::Index r = 0;
  for (size_t ti = 0; ti < targets.size(); ++ti) {
    const CapsuleTarget& t = targets[ti];
    desired.segment<3>(r) = t.field_direction.normalized();
    for (int i = 0; i < 3; ++i)
      labels.push_back("field direction " + std::string(kAxis[i]) +
                       " at robot " + std::to_string(ti));
    r += 3;
    if (t.control_force) {
      desired.segment<3>(r) = t.force;
      for (int i = 0; i < 3; ++i)
        labels.push_back("force " + std::string(kAxis[i]) + " at robot " +
                         std::to_string(ti));
      r += 3;
    }
  }

  // every unit-direction block loses its radial row; every magnet can spin
  // freely about its own moment
  const int expected = static_cast<int>(
      std::min<Eigen::Index>(J.rows() - static_cast<Eigen::Index>(targets.size()),
                             J.cols() - static_cast<Eigen::Index>(magnets.size())));
  AllocationReport report;
  const VecX dw = solve_damped(J, desired - current, damping, expected, labels,
                               singular_ratio_threshold, &report);
  return apply_pose_step(magnets, dw, limits, std::move(report));
}

CurrentAllocation allocate_continuum_currents(
    const Vec3& desired_torque, const Vec3& moment_world, const Vec3& position,
    const std::vector<field::MagneticSource>& sources, double damping,
    bool zero_force, const VecX& current_limits,
    double singular_ratio_threshold) {
  if (moment_world.norm() < 1e-15)
    throw std::invalid_argument("continuum allocation: zero moment");

  const MatX map = field::field_map_matrix(sources, position);
  const Vec3 m_hat = moment_world.normalized();
  const Vec3 attainable =
      desired_torque - desired_torque.dot(m_hat) * m_hat;

  const Eigen::Index rows = zero_force ? 6 : 3;
  MatX A(rows, map.cols());
  VecX y(rows);
  A.topRows<3>() = skew(moment_world) * map.topRows<3>();
  y.head<3>() = attainable;
  std::vector<std::string> labels{"torque x", "torque y", "torque z"};
  if (zero_force) {
    A.bottomRows<3>() = field::force_map(moment_world) * map.bottomRows<5>();
    y.tail<3>() = Vec3::Zero();
    labels.insert(labels.end(), {"force x", "force y", "force z"});
  }

  CurrentAllocation out;
  out.report.dropped_torque = (desired_torque - attainable).norm();
  // the torque rows span only the plane orthogonal to the moment
  const int expected = static_cast<int>(std::min<Eigen::Index>(rows - 1, map.cols()));
  out.currents = solve_damped(A, y, damping, expected, labels,
                              singular_ratio_threshold, &out.report);
  clamp_currents(out.currents, current_limits, &out.report);
  return out;
}

PoseAllocation allocate_continuum_magnet_step(
    const Vec3& desired_torque, const Vec3& moment_world, const Vec3& position,
    const std::vector<field::DipoleMagnet>& magnets, double damping,
    bool zero_force, const PmStepLimits& limits,
    double singular_ratio_threshold) {
  if (moment_world.norm() < 1e-15)
    throw std::invalid_argument("continuum allocation: zero moment");
  if (magnets.empty())
    throw std::invalid_argument("continuum allocation: no magnets");

  const Vec3 m_hat = moment_world.normalized();
  const Vec3 attainable = desired_torque - desired_torque.dot(m_hat) * m_hat;

  const auto outputs = [&](const std::vector<field::DipoleMagnet>& mags) {
    Vec3 b = Vec3::Zero(), f = Vec3::Zero();
    for (const auto& mag : mags) {
      const Vec3 m_world = mag.pose.orientation * mag.moment;
      const Vec3 rel = position - mag.pose.position;
      b += field::dipole_field(rel, m_world);
      if (zero_force) f += field::dipole_force(rel, m_world, moment_world);
    }
    VecX out(zero_force ? 6 : 3);
    out.head<3>() = moment_world.cross(b);
    if (zero_force) out.tail<3>() = f;
    return out;
  };

  const VecX f0 = outputs(magnets);
  MatX J(f0.size(), 6 * static_cast<Eigen::Index>(magnets.size()));
  for (size_t j = 0; j < magnets.size(); ++j) {
    for (int p = 0; p < 6; ++p) {
      const double h = 1e-6;
      const VecX hi = outputs(perturbed(magnets, j, p, h));
      const VecX lo = outputs(perturbed(magnets, j, p, -h));
      J.col(6 * static_cast<Eigen::Index>(j) + p) = (hi - lo) / (2.0 * h);
    }
  }

  VecX y(f0.size());
  y.head<3>() = attainable - f0.head<3>();
  std::vector<std::string> labels{"torque x", "torque y", "torque z"};
  if (zero_force) {
    y.tail<3>() = -f0.tail<3>();
    labels.insert(labels.end(), {"force x", "force y", "force z"});
  }

  AllocationReport report;
  report.dropped_torque = (desired_torque - attainable).norm();
  const int expected = static_cast<int>(std::min<Eigen::Index>(
      J.rows() - 1, J.cols() - static_cast<Eigen::Index>(magnets.size())));
  const VecX dw = solve_damped(J, y, damping, expected, labels,
                               singular_ratio_threshold, &report);
  return apply_pose_step(magnets, dw, limits, std::move(report));
}

}  // namespace magnav::control
