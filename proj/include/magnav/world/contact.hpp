#pragma once

#include "magnav/core.hpp"
#include "magnav/world/mesh.hpp"

#include <vector>

namespace magnav::world {

// Regularization speed for the smooth Coulomb friction law: tangential force
// ramps in over ~this sliding speed instead of switching discontinuously.
inline constexpr double kFrictionVelocityScale = 1e-4;  // m/s

// A sphere probe attached to a body: where it is, how big, how fast it moves.
struct BodySample {
  Vec3 point = Vec3::Zero();
  double radius = 0.0;
  Vec3 velocity = Vec3::Zero();
};

struct ContactForce {
  Vec3 force = Vec3::Zero();  // on the body, world frame
  Vec3 point = Vec3::Zero();  // surface point it acts at
  bool active = false;
  double penetration = 0.0;   // m, >= 0 when active
};

// Penalty contact of one sphere probe against the environment.
ContactForce sphere_contact(const BodySample& body, const EnvironmentMesh& mesh);

// Convenience: all probes at once.
std::vector<ContactForce> contact_forces(const std::vector<BodySample>& bodies,
                                         const EnvironmentMesh& mesh);

}  // namespace magnav::world
