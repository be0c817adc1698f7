#pragma once

// Forward actuation model: superpose all sources at each robot magnet and
// map the sampled field onto a torque/force pair per robot.

#include "magnav/core.hpp"
#include "magnav/field/gradient5.hpp"
#include "magnav/field/source.hpp"

#include <vector>

namespace magnav::field {

// A magnet carried by a robot, expressed in the robot body frame.
struct EmbeddedMagnet {
  Vec3 moment_body = Vec3::Zero();  // A*m^2
  Vec3 offset_body = Vec3::Zero();  // m, from robot reference point
};

// World-frame placement of one robot magnet for wrench evaluation.
struct RobotMagnetState {
  Vec3 moment_world = Vec3::Zero();
  Vec3 position_world = Vec3::Zero();
};

inline RobotMagnetState place_magnet(const EmbeddedMagnet& magnet,
                                     const Pose& robot_pose) {
  return RobotMagnetState{rotate(robot_pose, magnet.moment_body),
                          transform(robot_pose, magnet.offset_body)};
}

// Wrench on each robot magnet from the full source set; fields superpose
// over sources, robots do not interact with each other here.
inline std::vector<Wrench> actuator_wrench(
    const std::vector<RobotMagnetState>& robots,
    const std::vector<MagneticSource>& sources,
    const std::vector<double>& inputs) {
  std::vector<Wrench> out;
  out.reserve(robots.size());
  for (const RobotMagnetState& robot : robots) {
    const FieldSample s = total_field(sources, inputs, robot.position_world);
    out.push_back(magnetic_wrench(robot.moment_world, s.b, s.g));
  }
  return out;
}

}  // namespace magnav::field
