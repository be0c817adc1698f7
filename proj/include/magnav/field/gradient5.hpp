#pragma once

// Five-component packing of the symmetric traceless field-derivative matrix,
// and the linear maps that turn (b, g) into force and torque on a dipole.

#include "magnav/core.hpp"
#include "magnav/field/dipole.hpp"

#include <stdexcept>

namespace magnav::field {

// Packed order: [dbx/dx, dbx/dy, dbx/dz, dby/dy, dby/dz]; dbz/dz is implied
// by zero trace.
using Gradient5 = Eigen::Matrix<double, 5, 1>;

struct Wrench {
  Vec3 torque = Vec3::Zero();
  Vec3 force = Vec3::Zero();
};

inline Gradient5 pack_gradient(const Mat3& G) {
  const double scale = G.norm();
  const double tol = 1e-9 * (scale > 0.0 ? scale : 1.0);
  if ((G - G.transpose()).norm() > tol)
    throw std::invalid_argument("pack_gradient: matrix is not symmetric");
  if (std::abs(G.trace()) > tol)
    throw std::invalid_argument("pack_gradient: matrix is not traceless");
  Gradient5 g;
  g << G(0, 0), G(0, 1), G(0, 2), G(1, 1), G(1, 2);
  return g;
}

inline Mat3 unpack_gradient(const Gradient5& g) {
  Mat3 G;
  G << g[0], g[1], g[2],
       g[1], g[3], g[4],
       g[2], g[4], -g[0] - g[3];
  return G;
}

// 3x5 map with force = force_map(m) * g for a dipole of moment m.
inline Eigen::Matrix<double, 3, 5> force_map(const Vec3& m) {
  Eigen::Matrix<double, 3, 5> M;
  M << m.x(), m.y(), m.z(), 0.0, 0.0,
       0.0, m.x(), 0.0, m.y(), m.z(),
       -m.z(), 0.0, m.x(), -m.z(), m.y();
  return M;
}

inline Vec3 magnetic_force(const Vec3& m, const Gradient5& g) {
  return force_map(m) * g;
}

inline Vec3 magnetic_torque(const Vec3& m, const Vec3& b) {
  return skew(m) * b;
}

// 6x8 map from stacked [b; g] to stacked [torque; force].
inline Eigen::Matrix<double, 6, 8> wrench_map(const Vec3& m) {
  Eigen::Matrix<double, 6, 8> M = Eigen::Matrix<double, 6, 8>::Zero();
  M.block<3, 3>(0, 0) = skew(m);
  M.block<3, 5>(3, 3) = force_map(m);
  return M;
}

inline Wrench magnetic_wrench(const Vec3& m, const Vec3& b,
                              const Gradient5& g) {
  return Wrench{magnetic_torque(m, b), magnetic_force(m, g)};
}

}  // namespace magnav::field
