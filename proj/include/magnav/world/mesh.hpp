#pragma once

#include "magnav/core.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace magnav::world {

struct ClosestPointResult {
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  Vec3 normal = Vec3::UnitZ();  // geometric normal of the owning triangle
  int triangle = -1;
};

// Triangle-soup environment with contact material parameters. Geometry is
// immutable once build() has run; queries are const and thread-safe.
struct EnvironmentMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  double friction = 0.0;         // Coulomb coefficient
  double stiffness = 500.0;      // N/m penetration penalty
  double damping = 5.0;          // N*s/m normal-rate penalty
  double contact_margin = 1e-3;  // m, activation distance for the broad phase

  // Builds the bounding-volume tree; call after filling the geometry.
  void build();
  bool built() const { return !nodes.empty() || triangles.empty(); }

  std::pair<Vec3, Vec3> bounds() const;

  struct BvhNode {
    Vec3 lo, hi;
    int left = -1, right = -1;  // children, or
    int begin = 0, end = 0;     // leaf range into order
  };
  std::vector<BvhNode> nodes;
  std::vector<int> order;
};

// Exact closest point on the triangle soup.
ClosestPointResult closest_point(const EnvironmentMesh& mesh, const Vec3& query);

// Reads an ASCII or binary STL file (auto-detected). Degenerate
// zero-area triangles are dropped.
EnvironmentMesh load_mesh(const std::string& path);

}  // namespace magnav::world
