#pragma once

#include "magnav/core.hpp"
#include "magnav/field/dipole.hpp"
#include "magnav/field/source.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace magnav::tracking {

// Stationary tri-axis magnetometer. The rotation maps world-frame vectors
// into the sensor frame.
struct SensorSpec {
  Vec3 position = Vec3::Zero();
  Quat rotation = Quat::Identity();
  Vec3 noise_sigma = Vec3::Zero();  // T per axis

  void validate() const {
    if ((noise_sigma.array() < 0.0).any())
      throw std::invalid_argument("sensor spec: negative noise sigma");
  }
};

// Stacked field readings of a stationary sensor array observing a dipole
// magnet carried by the robot. 3 entries per sensor, array order.
inline VecX measure_magnet_array(const Vec3& magnet_position,
                                 const Vec3& moment_direction,
                                 double moment_magnitude,
                                 const std::vector<SensorSpec>& sensors) {
  const Vec3 m = moment_magnitude * moment_direction;
  VecX z(3 * static_cast<Eigen::Index>(sensors.size()));
  for (size_t i = 0; i < sensors.size(); ++i) {
    const Vec3 r = sensors[i].position - magnet_position;
    if (r.norm() < field::kMinDipoleDistance)
      throw std::domain_error("tracking: sensor " + std::to_string(i) +
                              " coincident with the tracked magnet");
    z.segment<3>(3 * static_cast<Eigen::Index>(i)) =
        sensors[i].rotation * field::dipole_field(r, m);
  }
  return z;
}

// Stacked per-source readings of a tri-axis sensor carried by the robot.
// Sources are assumed ideally separable (time/frequency multiplexed), so
// each contributes its own 3-entry block. `orientation` is the sensor's
// attitude in the world; readings come out in the sensor frame.
inline VecX measure_sensor_on_robot(const Vec3& sensor_position,
                                    const Quat& orientation,
                                    const std::vector<field::MagneticSource>& sources,
                                    const VecX& inputs) {
  if (inputs.size() != static_cast<Eigen::Index>(sources.size()))
    throw std::invalid_argument("tracking: one input per source required");
  const Mat3 R_ws = orientation.toRotationMatrix().transpose();
  VecX z(3 * static_cast<Eigen::Index>(sources.size()));
  for (size_t j = 0; j < sources.size(); ++j) {
    if (const auto* pm = std::get_if<field::DipoleMagnet>(&sources[j])) {
      if ((sensor_position - pm->pose.position).norm() < field::kMinDipoleDistance)
        throw std::domain_error("tracking: sensor coincident with source " +
                                std::to_string(j));
    } else if (const auto* coil = std::get_if<field::DipoleCoil>(&sources[j])) {
      if ((sensor_position - coil->pose.position).norm() < field::kMinDipoleDistance)
        throw std::domain_error("tracking: sensor coincident with source " +
                                std::to_string(j));
    }
    const field::FieldSample s =
        field::source_field(sources[j], inputs[static_cast<Eigen::Index>(j)],
                            sensor_position);
    z.segment<3>(3 * static_cast<Eigen::Index>(j)) = R_ws * s.b;
  }
  return z;
}

// Per-axis zero-mean Gaussian noise, one sigma triple per sensor.
inline VecX add_measurement_noise(VecX z, const std::vector<SensorSpec>& sensors,
                                  GaussianRng& rng) {
  if (z.size() != 3 * static_cast<Eigen::Index>(sensors.size()))
    throw std::invalid_argument("tracking: measurement/sensor count mismatch");
  for (size_t i = 0; i < sensors.size(); ++i)
    for (int a = 0; a < 3; ++a)
      z[3 * static_cast<Eigen::Index>(i) + a] +=
          sensors[i].noise_sigma[a] * rng.normal();
  return z;
}

// Same sigma triple repeated across every 3-entry block (a single roving
// sensor reading several sources).
inline VecX add_measurement_noise(VecX z, const Vec3& noise_sigma,
                                  GaussianRng& rng) {
  if (z.size() % 3 != 0)
    throw std::invalid_argument("tracking: measurement size not a multiple of 3");
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z[i] += noise_sigma[i % 3] * rng.normal();
  return z;
}

inline VecX add_measurement_noise(VecX z, const std::vector<SensorSpec>& sensors,
                                  std::uint64_t seed) {
  GaussianRng rng(seed);
  return add_measurement_noise(std::move(z), sensors, rng);
}

// Remove the known actuator contribution from array readings, leaving the
// tracked magnet's share. Exact here because the same field model produced
// the readings.
inline VecX subtract_actuation_field(VecX z,
                                     const std::vector<field::MagneticSource>& sources,
                                     const VecX& inputs,
                                     const std::vector<SensorSpec>& sensors) {
  if (z.size() != 3 * static_cast<Eigen::Index>(sensors.size()))
    throw std::invalid_argument("tracking: measurement/sensor count mismatch");
  const std::vector<double> amps(inputs.data(), inputs.data() + inputs.size());
  for (size_t i = 0; i < sensors.size(); ++i) {
    const field::FieldSample s =
        field::total_field(sources, amps, sensors[i].position);
    z.segment<3>(3 * static_cast<Eigen::Index>(i)) -= sensors[i].rotation * s.b;
  }
  return z;
}

// Diagonal of the stacked measurement covariance (variances, in order).
inline VecX sensor_noise_covariance(const std::vector<SensorSpec>& sensors) {
  VecX u(3 * static_cast<Eigen::Index>(sensors.size()));
  for (size_t i = 0; i < sensors.size(); ++i)
    u.segment<3>(3 * static_cast<Eigen::Index>(i)) =
        sensors[i].noise_sigma.cwiseProduct(sensors[i].noise_sigma);
  return u;
}

}  // namespace magnav::tracking
