#pragma once

// Quasi-static continuum robot as a chain of corotational Euler-Bernoulli
// beam elements. Node 0 is clamped at the insertion port; the tip carries a
// magnet aligned with the local tangent (+x of the node frame). Equilibrium
// is found by Newton iteration on the corotated linear elements, which
// stays accurate at bending angles far beyond the linear regime.

#include "magnav/beam/properties.hpp"
#include "magnav/core.hpp"
#include "magnav/field/gradient5.hpp"
#include "magnav/field/wrench.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <utility>
#include <vector>

namespace magnav::beam {

inline constexpr double kDefaultMaxElementLength = 5e-3;   // m
inline constexpr double kDefaultResidualTol = 1e-8;        // N
inline constexpr int kDefaultMaxIterations = 100;

struct BeamState {
  std::vector<Pose> node_poses;                // node 0 = port clamp
  std::vector<double> element_rest_lengths;    // m, size = nodes - 1
  double inserted_length = 0.0;                // m
  double total_length = 0.0;                   // m
  double max_element_length = kDefaultMaxElementLength;
  field::EmbeddedMagnet tip_magnet;            // at last node, moment ~ +x

  int node_count() const { return static_cast<int>(node_poses.size()); }
  int element_count() const {
    return static_cast<int>(element_rest_lengths.size());
  }
};

struct SolveReport {
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double residual_norm = 0.0;
};

// Straight rest shape along the clamp's +x axis, partitioned so every
// element is at most max_element_length (remainder sits at the base).
BeamState make_straight_beam(const Pose& base, double total_length,
                             double inserted_length,
                             const Vec3& tip_moment_body,
                             double max_element_length = kDefaultMaxElementLength);

// Classical 12x12 two-node 3D beam stiffness in the element frame
// (x axial; DoFs [u, theta] per node). Torsion gets a small stiffness
// floor so the clamped matrix stays SPD for thin tubes.
Eigen::Matrix<double, 12, 12> element_stiffness(const BeamProperties& props,
                                                double length);

// Tangent stiffness at the current configuration, reduced to the free DoFs
// (all nodes except the clamped base), assembled in corotated frames.
Eigen::SparseMatrix<double> assemble_global(const BeamState& state,
                                            const BeamProperties& props);

// Corotational Newton solve. tip_wrench acts on the last node; nodal_forces
// holds one world-frame force per node (gravity lumping, contact).
// Returns the equilibrated state; the report tells whether the residual tol
// was met.
std::pair<BeamState, SolveReport> solve_equilibrium(
    const BeamState& state, const BeamProperties& props,
    const field::Wrench& tip_wrench, const std::vector<Vec3>& nodal_forces,
    double tol = kDefaultResidualTol, int max_iter = kDefaultMaxIterations);

// Equilibrium under a live field: the tip wrench is re-evaluated from the
// deforming tip pose inside the Newton loop (follower load), so the torque
// on the embedded magnet falls off as it aligns. A frozen wrench of the
// same field keeps pushing past alignment and equilibrates far too deep;
// this form is what makes strong-field steering statically well-posed.
// field_at maps a world position to the local field sample.
std::pair<BeamState, SolveReport> solve_equilibrium(
    const BeamState& state, const BeamProperties& props,
    const std::function<field::FieldSample(const Vec3&)>& field_at,
    const std::vector<Vec3>& nodal_forces,
    double tol = kDefaultResidualTol, int max_iter = kDefaultMaxIterations);

// Insert delta meters of material through the port: the catheter slides
// along its own curve (tip extends along the tip tangent) and the element
// partition is rebuilt tip-first so count = ceil(inserted / max element).
BeamState advance(const BeamState& state, double delta_length);

Pose tip_frame(const BeamState& state);
Vec3 tip_tangent(const BeamState& state);

// Angle between the tangent-aligned tip moment and a field direction.
double deviation_angle(const BeamState& state, const Vec3& b);

// Self-weight lumped half-and-half onto element end nodes.
std::vector<Vec3> gravity_nodal_forces(const BeamState& state,
                                       const BeamProperties& props,
                                       const Vec3& gravity);

}  // namespace magnav::beam
