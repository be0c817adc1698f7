#pragma once

// Point-dipole field model: field b(r), its spatial derivative matrix G(r),
// dipole-dipole forces, and the analytic Jacobians the estimator and the
// allocator need. r always points from the source to the evaluation point.

#include "magnav/core.hpp"

#include <stdexcept>
#include <string>

namespace magnav::field {

// Below this separation the point-dipole model has no meaning; treat as
// coincident and refuse to evaluate.
inline constexpr double kMinDipoleDistance = 1e-9;

template <class S>
void check_dipole_distance(const Vec3T<S>& r) {
  if (!(r.norm() > S(kMinDipoleDistance)))
    throw std::domain_error(
        "singular dipole evaluation: field point coincides with source "
        "(separation " + std::to_string(static_cast<double>(r.norm())) + " m)");
}

// b(r) for a dipole of moment m at the origin.
template <class S>
Vec3T<S> dipole_field(const Vec3T<S>& r, const Vec3T<S>& m) {
  check_dipole_distance(r);
  const S rn = r.norm();
  const S c = S(kMu0 / (4.0 * kPi));
  return c * (S(3) * m.dot(r) * r / (rn * rn * rn * rn * rn) -
              m / (rn * rn * rn));
}

// D(r) with b = D(r) * m; linear-in-moment form of the field.
template <class S>
Mat3T<S> dipole_direction_matrix(const Vec3T<S>& r) {
  check_dipole_distance(r);
  const S rn = r.norm();
  const Vec3T<S> u = r / rn;
  const S c = S(kMu0 / (4.0 * kPi)) / (rn * rn * rn);
  return c * (S(3) * u * u.transpose() - Mat3T<S>::Identity());
}

// Spatial derivative G_ij = dbi/dxj of the dipole field; symmetric and
// traceless. Doubles as the force map: force on moment n is G(r, m) * n.
template <class S>
Mat3T<S> dipole_gradient(const Vec3T<S>& r, const Vec3T<S>& m) {
  check_dipole_distance(r);
  const S rn = r.norm();
  const Vec3T<S> u = r / rn;
  const S c = S(3) * S(kMu0 / (4.0 * kPi)) / (rn * rn * rn * rn);
  return c * (m * u.transpose() + u * m.transpose() +
              u.dot(m) * (Mat3T<S>::Identity() - S(5) * u * u.transpose()));
}

// Force on a dipole m_tgt sitting at +r relative to a source dipole m_src.
template <class S>
Vec3T<S> dipole_force(const Vec3T<S>& r, const Vec3T<S>& m_src,
                      const Vec3T<S>& m_tgt) {
  return dipole_gradient(r, m_src) * m_tgt;
}

// d(force)/d(r) for the dipole-dipole force above.
template <class S>
Mat3T<S> dipole_force_position_jacobian(const Vec3T<S>& r,
                                        const Vec3T<S>& m_src,
                                        const Vec3T<S>& m_tgt) {
  check_dipole_distance(r);
  const S rn = r.norm();
  const Vec3T<S> u = r / rn;
  const S ua = u.dot(m_src);
  const S ub = u.dot(m_tgt);
  const S ab = m_src.dot(m_tgt);
  const Vec3T<S> v =
      ua * m_tgt + ub * m_src + ab * u - S(5) * ua * ub * u;
  Mat3T<S> dv_du = m_tgt * m_src.transpose() + m_src * m_tgt.transpose() +
                   ab * Mat3T<S>::Identity() -
                   S(5) * (ub * u * m_src.transpose() +
                           ua * u * m_tgt.transpose() +
                           ua * ub * Mat3T<S>::Identity());
  const Mat3T<S> proj = Mat3T<S>::Identity() - u * u.transpose();
  const S c = S(3) * S(kMu0 / (4.0 * kPi)) / (rn * rn * rn * rn * rn);
  return c * (-S(4) * v * u.transpose() + dv_du * proj);
}

}  // namespace magnav::field
