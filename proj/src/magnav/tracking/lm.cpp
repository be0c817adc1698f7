#include "magnav/tracking/lm.hpp"

#include "magnav/tracking/ekf.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace magnav::tracking {
namespace {

// Marquardt loop over callbacks; every evaluated iterate is projected onto
// the feasible set first, so h never sees a non-unit direction/quaternion.
template <class ResidualFn, class JacobianFn, class ProjectFn>
LmReport lm_drive(VecX& x, const ResidualFn& residual, const JacobianFn& jacobian,
                  const ProjectFn& project, const LmConfig& cfg) {
  project(x);
  VecX r = residual(x);
  double cost = r.squaredNorm();
  double mu = cfg.initial_damping;
  LmReport rep;

  int it = 0;
  while (it < cfg.max_iterations) {
    const MatX J = jacobian(x);
    const VecX g = J.transpose() * r;
    if (g.norm() < cfg.gradient_tolerance) {
      rep.converged = true;
      break;
    }
    const MatX JtJ = J.transpose() * J;
    VecX diag = JtJ.diagonal();
    const double dmax = diag.maxCoeff();
    for (Eigen::Index i = 0; i < diag.size(); ++i)
      diag[i] = std::max(diag[i], 1e-12 * dmax + 1e-300);

    bool accepted = false;
    while (it < cfg.max_iterations) {
      ++it;
      MatX aug = JtJ;
      aug.diagonal() += mu * diag;
      Eigen::LDLT<MatX> ldlt(aug);
      VecX x_try = x + ldlt.solve(g);
      project(x_try);
      const VecX r_try = residual(x_try);
      if (ldlt.info() == Eigen::Success && r_try.allFinite() &&
          r_try.squaredNorm() < cost) {
        x = std::move(x_try);
        r = r_try;
        cost = r_try.squaredNorm();
        mu *= cfg.damping_decrease;
        accepted = true;
        break;
      }
      mu *= cfg.damping_increase;
      if (mu > 1e18) break;  // stalled: keep the best iterate
    }
    if (!accepted) break;
  }

  // The gradient test can fire while the iterate is still well inside the
  // quadratic-convergence basin (residuals are tesla-scale, so J^T r is
  // tiny in absolute terms). One undamped polish step squares the
  // remaining error at negligible cost.
  if (rep.converged && cost > 0.0) {
    const MatX J = jacobian(x);
    Eigen::LDLT<MatX> ldlt(J.transpose() * J);
    if (ldlt.info() == Eigen::Success) {
      VecX x_try = x + ldlt.solve(J.transpose() * r);
      project(x_try);
      const VecX r_try = residual(x_try);
      if (r_try.allFinite() && r_try.squaredNorm() < cost) {
        x = std::move(x_try);
        r = r_try;
        cost = r.squaredNorm();
        ++it;
      }
    }
  }

  rep.iterations = it;
  rep.residual_norm = std::sqrt(cost);
  rep.gradient_norm = (jacobian(x).transpose() * residual(x)).norm();
  if (rep.gradient_norm < cfg.gradient_tolerance) rep.converged = true;
  return rep;
}

}  // namespace

MagnetPoseEstimate lm_estimate(const VecX& z, const Vec3& position_guess,
                               const Vec3& direction_guess,
                               double moment_magnitude,
                               const std::vector<SensorSpec>& sensors,
                               const LmConfig& config) {
  if (!z.allFinite()) throw std::invalid_argument("lm: non-finite measurement");
  if (direction_guess.norm() < 1e-15)
    throw std::invalid_argument("lm: zero direction guess");

  VecX x(6);
  x.head<3>() = position_guess;
  x.tail<3>() = direction_guess;

  const auto residual = [&](const VecX& v) -> VecX {
    return z - measure_magnet_array(v.head<3>(), v.tail<3>(), moment_magnitude,
                                    sensors);
  };
  const auto jacobian = [&](const VecX& v) -> MatX {
    const MatX H = measurement_jacobian(v.head<3>(), v.tail<3>(),
                                        moment_magnitude, sensors);
    MatX J(H.rows(), 6);
    J.leftCols<3>() = H.leftCols<3>();
    J.rightCols<3>() = H.rightCols<3>();
    return J;
  };
  const auto project = [](VecX& v) { v.tail<3>().normalize(); };

  MagnetPoseEstimate out;
  out.report = lm_drive(x, residual, jacobian, project, config);
  out.position = x.head<3>();
  out.direction = x.tail<3>();
  return out;
}

SensorPoseEstimate lm_estimate(const VecX& z, const Vec3& position_guess,
                               const Quat& orientation_guess,
                               const std::vector<field::MagneticSource>& sources,
                               const VecX& inputs, const LmConfig& config) {
  if (!z.allFinite()) throw std::invalid_argument("lm: non-finite measurement");

  VecX x(7);
  x.head<3>() = position_guess;
  x[3] = orientation_guess.w();
  x[4] = orientation_guess.x();
  x[5] = orientation_guess.y();
  x[6] = orientation_guess.z();

  const auto unpack = [](const VecX& v) {
    return Quat(v[3], v[4], v[5], v[6]);
  };
  const auto residual = [&](const VecX& v) -> VecX {
    return z - measure_sensor_on_robot(v.head<3>(), unpack(v), sources, inputs);
  };
  const auto jacobian = [&](const VecX& v) -> MatX {
    const MatX H = measurement_jacobian(v.head<3>(), unpack(v), sources, inputs);
    MatX J(H.rows(), 7);
    J.leftCols<3>() = H.leftCols<3>();
    J.rightCols<4>() = H.rightCols<4>();
    return J;
  };
  const auto project = [](VecX& v) {
    const double n = v.tail<4>().norm();
    if (n < 1e-15) throw std::runtime_error("lm: quaternion collapsed to zero");
    v.tail<4>() /= n;
  };

  SensorPoseEstimate out;
  out.report = lm_drive(x, residual, jacobian, project, config);
  out.position = x.head<3>();
  out.orientation = unpack(x);
  return out;
}

}  // namespace magnav::tracking
