#include "magnav/world/contact.hpp"

#include <cmath>

namespace magnav::world {

ContactForce sphere_contact(const BodySample& body,
                            const EnvironmentMesh& mesh) {
  ContactForce out;
  if (mesh.triangles.empty()) return out;

  const ClosestPointResult cp = closest_point(mesh, body.point);
  // The margin is a broad-phase cutoff only; force starts at touch.
  if (cp.distance > body.radius + mesh.contact_margin) return out;

  const double penetration = body.radius - cp.distance;
  if (penetration <= 0.0) return out;

  // Surface normal pointing at the probe centre; fall back to the facet
  // normal when the centre sits exactly on the surface.
  Vec3 n;
  if (cp.distance > 1e-12) {
    n = (body.point - cp.point) / cp.distance;
  } else {
    n = cp.normal;
  }

  const double approach = -body.velocity.dot(n);  // >0 when closing
  const double fn = mesh.stiffness * penetration +
                    mesh.damping * std::max(approach, 0.0);

  Vec3 force = fn * n;

  const Vec3 v_t = body.velocity - body.velocity.dot(n) * n;
  const double speed = v_t.norm();
  if (speed > 0.0 && mesh.friction > 0.0) {
    force -= mesh.friction * fn * std::tanh(speed / kFrictionVelocityScale) *
             (v_t / speed);
  }

  out.force = force;
  out.point = cp.point;
  out.active = true;
  out.penetration = penetration;
  return out;
}

std::vector<ContactForce> contact_forces(const std::vector<BodySample>& bodies,
                                         const EnvironmentMesh& mesh) {
  std::vector<ContactForce> out(bodies.size());
  for (size_t i = 0; i < bodies.size(); ++i)
    out[i] = sphere_contact(bodies[i], mesh);
  return out;
}

}  // namespace magnav::world
