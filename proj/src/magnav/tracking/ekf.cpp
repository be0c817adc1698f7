#include "magnav/tracking/ekf.hpp"

#include "magnav/field/dipole.hpp"
#include "magnav/field/gradient5.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>
#include <string>

namespace magnav::tracking {
namespace {

void require_finite(const VecX& v, const char* what) {
  if (!v.allFinite())
    throw std::invalid_argument(std::string("ekf: non-finite ") + what);
}

// Angular process noise enters the moment direction through d/dt m = w x m.
Mat3 direction_rate_map(const Vec3& m_hat) { return -skew(m_hat); }

// Quaternion kinematics matrix: qdot = 1/2 C_s(q) w for body-frame w,
// scalar-first components.
Eigen::Matrix<double, 4, 3> quaternion_rate_map(const Quat& q) {
  Eigen::Matrix<double, 4, 3> C;
  C << -q.x(), -q.y(), -q.z(),
        q.w(), -q.z(),  q.y(),
        q.z(),  q.w(), -q.x(),
       -q.y(),  q.x(),  q.w();
  return C;
}

// Shared update step: Kalman gain from an LDLT of the innovation
// covariance, state increment, Joseph-form covariance update.
struct Update {
  VecX dx;
  MatX P;
};

Update kalman_update(const MatX& P_minus, const MatX& H, const VecX& nu,
                     const VecX& u_diag) {
  MatX S = H * P_minus * H.transpose();
  S.diagonal() += u_diag;
  Eigen::LDLT<MatX> ldlt(S);
  double dmin = 0.0, dmax = 0.0;
  if (ldlt.info() == Eigen::Success) {
    const VecX d = ldlt.vectorD();
    dmin = d.minCoeff();
    dmax = d.maxCoeff();
  }
  if (ldlt.info() != Eigen::Success || dmin <= 0.0 ||
      dmin < 1e-15 * dmax) {
    throw std::runtime_error(
        "ekf update: innovation covariance not invertible (conditioning " +
        std::to_string(dmax > 0.0 ? dmin / dmax : 0.0) + ")");
  }
  const MatX K = ldlt.solve(H * P_minus).transpose();

  Update out;
  out.dx = K * nu;
  const MatX IKH = MatX::Identity(P_minus.rows(), P_minus.cols()) - K * H;
  out.P = IKH * P_minus * IKH.transpose() +
          K * u_diag.asDiagonal() * K.transpose();
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  Eigen::LLT<MatX> llt(out.P);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("ekf update: covariance lost positive definiteness");
  return out;
}

VecX process_variance(const EkfConfig& c) {
  VecX q(6);
  q.head<3>() = c.accel_sigma.cwiseProduct(c.accel_sigma);
  q.tail<3>() = c.gyro_sigma.cwiseProduct(c.gyro_sigma);
  return q;
}

}  // namespace

void EkfConfig::validate(Eigen::Index z_dim) const {
  if (!(dt > 0.0)) throw std::invalid_argument("ekf config: dt must be positive");
  if ((accel_sigma.array() < 0.0).any() || (gyro_sigma.array() < 0.0).any())
    throw std::invalid_argument("ekf config: negative process sigma");
  if (measurement_variance.size() != z_dim)
    throw std::invalid_argument("ekf config: measurement variance size mismatch");
  if ((measurement_variance.array() < 0.0).any())
    throw std::invalid_argument("ekf config: negative measurement variance");
}

MatX measurement_jacobian(const Vec3& magnet_position,
                          const Vec3& moment_direction, double moment_magnitude,
                          const std::vector<SensorSpec>& sensors) {
  const Vec3 m = moment_magnitude * moment_direction;
  MatX H = MatX::Zero(3 * static_cast<Eigen::Index>(sensors.size()), 9);
  for (size_t i = 0; i < sensors.size(); ++i) {
    const Vec3 r = sensors[i].position - magnet_position;
    const Mat3 R = sensors[i].rotation.toRotationMatrix();
    const Eigen::Index row = 3 * static_cast<Eigen::Index>(i);
    // b depends on r = p_s - p_L, so d b / d p_L flips the gradient's sign
    H.block<3, 3>(row, 0) = -R * field::dipole_gradient(r, m);
    H.block<3, 3>(row, 6) =
        moment_magnitude * R * field::dipole_direction_matrix(r);
  }
  return H;
}

MatX measurement_jacobian(const Vec3& sensor_position, const Quat& orientation,
                          const std::vector<field::MagneticSource>& sources,
                          const VecX& inputs) {
  if (inputs.size() != static_cast<Eigen::Index>(sources.size()))
    throw std::invalid_argument("tracking: one input per source required");
  const Mat3 Rt = orientation.toRotationMatrix().transpose();
  const double w = orientation.w();
  const Vec3 v(orientation.x(), orientation.y(), orientation.z());
  MatX H = MatX::Zero(3 * static_cast<Eigen::Index>(sources.size()), 10);
  for (size_t j = 0; j < sources.size(); ++j) {
    const field::FieldSample s = field::source_field(
        sources[j], inputs[static_cast<Eigen::Index>(j)], sensor_position);
    const Eigen::Index row = 3 * static_cast<Eigen::Index>(j);
    H.block<3, 3>(row, 0) = Rt * field::unpack_gradient(s.g);
    // derivative of R(q)^T b for the polynomial (unit-quaternion) rotation
    // form, taken w.r.t. the raw scalar-first components
    const Vec3& b = s.b;
    H.block<3, 1>(row, 6) = -2.0 * v.cross(b);
    H.block<3, 3>(row, 7) = 2.0 * w * skew(b) +
                            2.0 * (v * b.transpose() +
                                   v.dot(b) * Mat3::Identity() -
                                   2.0 * b * v.transpose());
  }
  return H;
}

MagnetEkfState ekf_step(const MagnetEkfState& state, const VecX& z,
                        double moment_magnitude,
                        const std::vector<SensorSpec>& sensors,
                        const EkfConfig& config) {
  config.validate(z.size());
  require_finite(z, "measurement");
  if (!state.position.allFinite() || !state.velocity.allFinite() ||
      !state.direction.allFinite() || !state.covariance.allFinite())
    throw std::invalid_argument("ekf: non-finite state");
  if (state.covariance.rows() != 9 || state.covariance.cols() != 9)
    throw std::invalid_argument("ekf: covariance must be 9x9");

  const double dt = config.dt;
  MagnetEkfState pred = state;
  pred.position += dt * state.velocity;

  MatX A = MatX::Identity(9, 9);
  A.block<3, 3>(0, 3) = dt * Mat3::Identity();
  MatX G = MatX::Zero(9, 6);
  G.block<3, 3>(0, 0) = 0.5 * dt * dt * Mat3::Identity();
  G.block<3, 3>(3, 0) = dt * Mat3::Identity();
  G.block<3, 3>(6, 3) = 0.5 * dt * direction_rate_map(state.direction);
  MatX P = A * state.covariance * A.transpose() +
           G * process_variance(config).asDiagonal() * G.transpose();
  P = 0.5 * (P + P.transpose()).eval();

  const VecX nu =
      z - measure_magnet_array(pred.position, pred.direction, moment_magnitude,
                               sensors);
  const MatX H = measurement_jacobian(pred.position, pred.direction,
                                      moment_magnitude, sensors);
  const Update up = kalman_update(P, H, nu, config.measurement_variance);

  pred.position += up.dx.segment<3>(0);
  pred.velocity += up.dx.segment<3>(3);
  pred.direction += up.dx.segment<3>(6);
  pred.direction.normalize();
  pred.covariance = up.P;
  return pred;
}

SensorEkfState ekf_step(const SensorEkfState& state, const VecX& z,
                        const std::vector<field::MagneticSource>& sources,
                        const VecX& inputs, const EkfConfig& config) {
  config.validate(z.size());
  require_finite(z, "measurement");
  if (!state.position.allFinite() || !state.velocity.allFinite() ||
      !state.orientation.coeffs().allFinite() || !state.covariance.allFinite())
    throw std::invalid_argument("ekf: non-finite state");
  if (state.covariance.rows() != 10 || state.covariance.cols() != 10)
    throw std::invalid_argument("ekf: covariance must be 10x10");

  const double dt = config.dt;
  SensorEkfState pred = state;
  pred.position += dt * state.velocity;

  MatX A = MatX::Identity(10, 10);
  A.block<3, 3>(0, 3) = dt * Mat3::Identity();
  MatX G = MatX::Zero(10, 6);
  G.block<3, 3>(0, 0) = 0.5 * dt * dt * Mat3::Identity();
  G.block<3, 3>(3, 0) = dt * Mat3::Identity();
  G.block<4, 3>(6, 3) = 0.5 * dt * quaternion_rate_map(state.orientation);
  MatX P = A * state.covariance * A.transpose() +
           G * process_variance(config).asDiagonal() * G.transpose();
  P = 0.5 * (P + P.transpose()).eval();

  const VecX nu =
      z - measure_sensor_on_robot(pred.position, pred.orientation, sources,
                                  inputs);
  const MatX H =
      measurement_jacobian(pred.position, pred.orientation, sources, inputs);
  const Update up = kalman_update(P, H, nu, config.measurement_variance);

  pred.position += up.dx.segment<3>(0);
  pred.velocity += up.dx.segment<3>(3);
  Quat q(pred.orientation.w() + up.dx[6], pred.orientation.x() + up.dx[7],
         pred.orientation.y() + up.dx[8], pred.orientation.z() + up.dx[9]);
  pred.orientation = q.normalized();
  pred.covariance = up.P;
  return pred;
}

}  // namespace magnav::tracking
