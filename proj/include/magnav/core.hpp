#pragma once

// Shared scalar-templated vector types, rotation helpers and the couple of
// physical constants everything else builds on. All quantities are SI unless
// a name says otherwise. Quaternions are scalar-first (q0, q1, q2, q3) at
// every serialization boundary; in memory they are Eigen quaternions.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace magnav {

inline constexpr double kPi = 3.14159265358979323846;

// Vacuum permeability, T*m/A.
inline constexpr double kMu0 = 4.0e-7 * kPi;

template <class Scalar> using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
template <class Scalar> using Mat3T = Eigen::Matrix<Scalar, 3, 3>;
template <class Scalar> using QuatT = Eigen::Quaternion<Scalar>;

using Vec3 = Vec3T<double>;
using Mat3 = Mat3T<double>;
using Quat = QuatT<double>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Cross-product matrix: skew(a) * b == a.cross(b).
template <class S>
Mat3T<S> skew(const Vec3T<S>& a) {
  Mat3T<S> m;
  m << S(0), -a.z(), a.y(),
       a.z(), S(0), -a.x(),
       -a.y(), a.x(), S(0);
  return m;
}

// Unit quaternion for a rotation vector (angle = |v|, axis = v/|v|).
template <class S>
QuatT<S> exp_quat(const Vec3T<S>& v) {
  const S angle = v.norm();
  if (angle < S(1e-12)) {
    QuatT<S> q(S(1), v.x() / S(2), v.y() / S(2), v.z() / S(2));
    q.normalize();
    return q;
  }
  const Vec3T<S> axis = v / angle;
  return QuatT<S>(Eigen::AngleAxis<S>(angle, axis));
}

template <class S>
Mat3T<S> exp_so3(const Vec3T<S>& v) {
  return exp_quat(v).toRotationMatrix();
}

// Rotation vector of a rotation matrix (inverse of exp_so3).
template <class S>
Vec3T<S> log_so3(const Mat3T<S>& R) {
  Eigen::AngleAxis<S> aa(R);
  return aa.angle() * aa.axis();
}

inline bool approx_unit(const Vec3& v, double tol = 1e-9) {
  return std::abs(v.norm() - 1.0) <= tol;
}

inline bool approx_unit(const Quat& q, double tol = 1e-9) {
  return std::abs(q.norm() - 1.0) <= tol;
}

// Position plus unit-quaternion orientation; the universal kinematic record.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

inline Vec3 rotate(const Pose& pose, const Vec3& v_body) {
  return pose.orientation * v_body;
}

inline Vec3 transform(const Pose& pose, const Vec3& p_body) {
  return pose.position + pose.orientation * p_body;
}

// Deterministic right-handed orthonormal basis (e1, e2) of the plane
// orthogonal to a unit axis: the reference direction is the standard basis
// vector with the smallest |axis| component (smallest index on ties), so the
// basis depends only on the axis.
inline std::pair<Vec3, Vec3> plane_basis(const Vec3& axis) {
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(axis[i]) < std::abs(axis[k])) k = i;
  const Vec3 ref = Vec3::Unit(k);
  const Vec3 e1 = ref.cross(axis).normalized();
  const Vec3 e2 = axis.cross(e1);
  return {e1, e2};
}

// Deterministic Gaussian stream: 64-bit Mersenne Twister feeding Box-Muller.
// Avoids std::normal_distribution so draws are identical for a given seed on
// any platform.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : rng_(seed) {}

  double uniform01() {
    // 53-bit mantissa draw, strictly inside (0, 1)
    return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  std::string save_state() const {
    std::ostringstream os;
    os << rng_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int spare_flag = 0;
    is >> rng_ >> spare_flag >> spare_;
    if (!is) throw std::runtime_error("bad rng state string");
    have_spare_ = spare_flag != 0;
  }

 private:
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace magnav
