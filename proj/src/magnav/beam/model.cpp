#include "magnav/beam/model.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace magnav::beam {
namespace {

using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;

// Element frame: mean of the two node rotations, minimally rotated so its
// x-axis lies along the chord.
Mat3 element_frame(const Pose& a, const Pose& b) {
  const Vec3 chord = b.position - a.position;
  const double len = chord.norm();
  if (len < 1e-12)
    throw std::runtime_error("beam assembly: duplicate nodes (singular)");
  const Mat3 Ra = a.orientation.toRotationMatrix();
  const Mat3 Rb = b.orientation.toRotationMatrix();
  const Vec3 phi = log_so3<double>(Mat3(Ra.transpose() * Rb));
  const Mat3 Rm = Ra * exp_so3<double>(Vec3(0.5 * phi));
  const Quat align = Quat::FromTwoVectors(Rm.col(0), chord / len);
  return align.toRotationMatrix() * Rm;
}

// Local deformation of one element: axial stretch plus the two node
// rotations expressed in the element frame. Transverse chord deflection is
// zero by construction; bending lives in the rotations.
Vec12 local_deformation(const Pose& a, const Pose& b, double rest_length,
                        const Mat3& Re) {
  const Vec3 chord = b.position - a.position;
  Vec12 d = Vec12::Zero();
  d[6] = chord.norm() - rest_length;
  d.segment<3>(3) =
      log_so3<double>(Mat3(Re.transpose() * a.orientation.toRotationMatrix()));
  d.segment<3>(9) =
      log_so3<double>(Mat3(Re.transpose() * b.orientation.toRotationMatrix()));
  return d;
}

int free_dofs(const BeamState& s) { return 6 * (s.node_count() - 1); }

// Internal nodal forces on the free DoFs; optionally the corotated material
// tangent as triplets.
VecX internal_forces(const BeamState& s, const BeamProperties& props,
                     std::vector<Eigen::Triplet<double>>* tangent) {
  VecX f_int = VecX::Zero(free_dofs(s));
  for (int e = 0; e < s.element_count(); ++e) {
    const Pose& a = s.node_poses[size_t(e)];
    const Pose& b = s.node_poses[size_t(e) + 1];
    const double L0 = s.element_rest_lengths[size_t(e)];
    const Mat3 Re = element_frame(a, b);
    const Mat12 K = element_stiffness(props, L0);
    const Vec12 f_local = K * local_deformation(a, b, L0, Re);

    Mat12 T = Mat12::Zero();
    for (int blk = 0; blk < 4; ++blk) T.block<3, 3>(3 * blk, 3 * blk) = Re;
    const Vec12 f_world = T * f_local;

    // global free-DoF index of node n's first DoF (node 0 clamped)
    const auto base = [](int n) { return 6 * (n - 1); };
    for (int n = 0; n < 2; ++n) {
      const int node = e + n;
      if (node == 0) continue;
      f_int.segment<6>(base(node)) += f_world.segment<6>(6 * n);
    }
    if (tangent) {
      const Mat12 Kw = T * K * T.transpose();
      for (int ni = 0; ni < 2; ++ni) {
        if (e + ni == 0) continue;
        for (int nj = 0; nj < 2; ++nj) {
          if (e + nj == 0) continue;
          for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
              tangent->emplace_back(base(e + ni) + i, base(e + nj) + j,
                                    Kw(6 * ni + i, 6 * nj + j));
        }
      }
    }
  }
  return f_int;
}

VecX external_forces(const BeamState& s, const field::Wrench& tip_wrench,
                     const std::vector<Vec3>& nodal_forces) {
  VecX f = VecX::Zero(free_dofs(s));
  if (!nodal_forces.empty() &&
      nodal_forces.size() != size_t(s.node_count()))
    throw std::invalid_argument("beam solve: one nodal force per node");
  for (int n = 1; n < s.node_count(); ++n) {
    if (!nodal_forces.empty())
      f.segment<3>(6 * (n - 1)) += nodal_forces[size_t(n)];
  }
  const int tip = s.node_count() - 1;
  f.segment<3>(6 * (tip - 1)) += tip_wrench.force;
  f.segment<3>(6 * (tip - 1) + 3) += tip_wrench.torque;
  return f;
}

void apply_increment(BeamState& s, const VecX& du, double scale) {
  for (int n = 1; n < s.node_count(); ++n) {
    const int k = 6 * (n - 1);
    Pose& pose = s.node_poses[size_t(n)];
    pose.position += scale * du.segment<3>(k);
    pose.orientation =
        (exp_quat(Vec3(scale * du.segment<3>(k + 3))) * pose.orientation)
            .normalized();
  }
}

}  // namespace

Eigen::Matrix<double, 12, 12> element_stiffness(const BeamProperties& props,
                                                double length) {
  if (!(length > 0.0))
    throw std::invalid_argument("element_stiffness: length must be positive");
  const double L = length;
  const double EA = props.youngs_modulus * props.area();
  const double EI = props.youngs_modulus * props.bending_inertia();
  // stiffness floor keeps torsion from degenerating for thin polymer tubes
  const double GJ = std::max(props.shear_modulus * props.polar_inertia(),
                             1e-6 * EI);
  const double a = 12.0 * EI / (L * L * L);
  const double b = 6.0 * EI / (L * L);
  const double c = 4.0 * EI / L;
  const double d = 2.0 * EI / L;

  Mat12 K = Mat12::Zero();
  K(0, 0) = K(6, 6) = EA / L;
  K(0, 6) = K(6, 0) = -EA / L;
  K(3, 3) = K(9, 9) = GJ / L;
  K(3, 9) = K(9, 3) = -GJ / L;
  // deflection in local y couples to rotation about z
  K(1, 1) = K(7, 7) = a;
  K(1, 7) = K(7, 1) = -a;
  K(1, 5) = K(5, 1) = K(1, 11) = K(11, 1) = b;
  K(5, 7) = K(7, 5) = K(7, 11) = K(11, 7) = -b;
  K(5, 5) = K(11, 11) = c;
  K(5, 11) = K(11, 5) = d;
  // deflection in local z couples to rotation about y (opposite sign)
  K(2, 2) = K(8, 8) = a;
  K(2, 8) = K(8, 2) = -a;
  K(2, 4) = K(4, 2) = K(2, 10) = K(10, 2) = -b;
  K(4, 8) = K(8, 4) = K(8, 10) = K(10, 8) = b;
  K(4, 4) = K(10, 10) = c;
  K(4, 10) = K(10, 4) = d;
  return K;
}

BeamState make_straight_beam(const Pose& base, double total_length,
                             double inserted_length,
                             const Vec3& tip_moment_body,
                             double max_element_length) {
  if (!(inserted_length > 0.0 && inserted_length <= total_length))
    throw std::range_error("beam: inserted length outside (0, total]");
  if (!(max_element_length > 0.0))
    throw std::invalid_argument("beam: max element length must be positive");

  BeamState s;
  s.total_length = total_length;
  s.inserted_length = inserted_length;
  s.max_element_length = max_element_length;
  s.tip_magnet.moment_body = tip_moment_body;

  const int n = std::max(
      1, static_cast<int>(std::ceil(inserted_length / max_element_length -
                                    1e-12)));
  const double remainder = inserted_length - (n - 1) * max_element_length;
  s.element_rest_lengths.assign(1, remainder);
  for (int e = 1; e < n; ++e) s.element_rest_lengths.push_back(max_element_length);

  const Vec3 tangent = base.orientation * Vec3::UnitX();
  double arc = 0.0;
  s.node_poses.push_back(base);
  for (double len : s.element_rest_lengths) {
    arc += len;
    Pose p = base;
    p.position = base.position + arc * tangent;
    s.node_poses.push_back(p);
  }
  return s;
}

Eigen::SparseMatrix<double> assemble_global(const BeamState& state,
                                            const BeamProperties& props) {
  props.validate();
  if (state.node_count() < 2)
    throw std::invalid_argument("beam assembly: need at least one element");
  std::vector<Eigen::Triplet<double>> trip;
  internal_forces(state, props, &trip);
  Eigen::SparseMatrix<double> K(free_dofs(state), free_dofs(state));
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

std::pair<BeamState, SolveReport> solve_equilibrium(
    const BeamState& state, const BeamProperties& props,
    const field::Wrench& tip_wrench, const std::vector<Vec3>& nodal_forces,
    double tol, int max_iter) {
  props.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("beam solve: tol must be > 0");

  BeamState cur = state;
  SolveReport report;
  const VecX f_ext = external_forces(cur, tip_wrench, nodal_forces);

  const auto residual_of = [&](const BeamState& s) -> VecX {
    return f_ext - internal_forces(s, props, nullptr);
  };

  double res_norm = residual_of(cur).norm();
  BeamState best = cur;
  double best_norm = res_norm;
  int best_iter = 0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;

  // Full Newton steps, accepted even when the residual transiently grows:
  // the axial stiffness of a slender tube dwarfs the bending scale, so the
  // residual spikes mid-solve and then collapses; a monotone line search
  // would stall. Halving is reserved for non-finite trial states, and a
  // watchdog flags true divergence.
  for (int it = 0; it < max_iter; ++it) {
    report.iterations = it;
    report.residual_norm = res_norm;
    if (res_norm < tol) {
      report.converged = true;
      return {cur, report};
    }
    std::vector<Eigen::Triplet<double>> trip;
    const VecX f_int = internal_forces(cur, props, &trip);
    Eigen::SparseMatrix<double> K(free_dofs(cur), free_dofs(cur));
    K.setFromTriplets(trip.begin(), trip.end());
    solver.compute(K);
    if (solver.info() != Eigen::Success) {
      report.diverged = true;  // factorization broke down (buckling-like)
      return {best, report};
    }
    const VecX du = solver.solve(f_ext - f_int);

    double scale = 1.0;
    bool finite = false;
    for (int half = 0; half < 12 && !finite; ++half) {
      BeamState trial = cur;
      apply_increment(trial, du, scale);
      const double trial_norm = residual_of(trial).norm();
      if (std::isfinite(trial_norm)) {
        cur = std::move(trial);
        res_norm = trial_norm;
        finite = true;
      } else {
        scale *= 0.5;
      }
    }
    if (!finite) {
      report.diverged = true;
      return {best, report};
    }
    if (res_norm < best_norm) {
      best = cur;
      best_norm = res_norm;
      best_iter = it;
    } else if (it - best_iter > 15) {
      report.diverged = true;  // watchdog: no progress for many steps
      report.residual_norm = best_norm;
      return {best, report};
    }
  }
  report.residual_norm = best_norm;
  report.iterations = max_iter;
  report.converged = best_norm < tol;
  return {best, report};
}

std::pair<BeamState, SolveReport> solve_equilibrium(
    const BeamState& state, const BeamProperties& props,
    const std::function<field::FieldSample(const Vec3&)>& field_at,
    const std::vector<Vec3>& nodal_forces, double tol, int max_iter) {
  props.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("beam solve: tol must be > 0");
  if (!field_at)
    throw std::invalid_argument("beam solve: field callback required");

  struct TipLoad {
    field::Wrench wrench;
    Vec3 m_world;
    Vec3 b;
  };
  const auto tip_load = [&](const BeamState& s) {
    const Pose tipf = tip_frame(s);
    const Vec3 m = tipf.orientation * s.tip_magnet.moment_body;
    const field::FieldSample fs = field_at(tipf.position);
    return TipLoad{field::magnetic_wrench(m, fs.b, fs.g), m, fs.b};
  };
  const auto residual_of = [&](const BeamState& s) -> VecX {
    return external_forces(s, tip_load(s).wrench, nodal_forces) -
           internal_forces(s, props, nullptr);
  };

  BeamState cur = state;
  SolveReport report;
  double res_norm = residual_of(cur).norm();
  BeamState best = cur;
  double best_norm = res_norm;
  int best_iter = 0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;

  for (int it = 0; it < max_iter; ++it) {
    report.iterations = it;
    report.residual_norm = res_norm;
    if (res_norm < tol) {
      report.converged = true;
      return {cur, report};
    }
    std::vector<Eigen::Triplet<double>> trip;
    const VecX f_int = internal_forces(cur, props, &trip);
    const TipLoad load = tip_load(cur);

    // Rotational stiffness of the follower torque, symmetrized for the
    // Cholesky path: d(m x b)/dtheta = m b^T - (m.b) I. Restoring near
    // alignment; carrying it in the tangent is what lets Newton converge
    // when the magnetic stiffness m B / L rivals the elastic EI / L^2.
    const Mat3 kl = 0.5 * (load.m_world * load.b.transpose() +
                           load.b * load.m_world.transpose()) -
                    load.m_world.dot(load.b) * Mat3::Identity();
    std::vector<Eigen::Triplet<double>> trip_full = trip;
    const int tip_rot = free_dofs(cur) - 3;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trip_full.emplace_back(tip_rot + i, tip_rot + j, -kl(i, j));

    Eigen::SparseMatrix<double> K(free_dofs(cur), free_dofs(cur));
    K.setFromTriplets(trip_full.begin(), trip_full.end());
    solver.compute(K);
    if (solver.info() != Eigen::Success) {
      // anti-aligned loads can push the tangent indefinite; the elastic
      // tangent alone still makes progress (residual stays exact)
      K.setFromTriplets(trip.begin(), trip.end());
      solver.compute(K);
      if (solver.info() != Eigen::Success) {
        report.diverged = true;
        return {best, report};
      }
    }
    const VecX f_ext = external_forces(cur, load.wrench, nodal_forces);
    const VecX du = solver.solve(f_ext - f_int);

    double scale = 1.0;
    bool finite = false;
    for (int half = 0; half < 12 && !finite; ++half) {
      BeamState trial = cur;
      apply_increment(trial, du, scale);
      const double trial_norm = residual_of(trial).norm();
      if (std::isfinite(trial_norm)) {
        cur = std::move(trial);
        res_norm = trial_norm;
        finite = true;
      } else {
        scale *= 0.5;
      }
    }
    if (!finite) {
      report.diverged = true;
      return {best, report};
    }
    if (res_norm < best_norm) {
      best = cur;
      best_norm = res_norm;
      best_iter = it;
    } else if (it - best_iter > 15) {
      report.diverged = true;
      report.residual_norm = best_norm;
      return {best, report};
    }
  }
  report.residual_norm = best_norm;
  report.iterations = max_iter;
  report.converged = best_norm < tol;
  return {best, report};
}

BeamState advance(const BeamState& state, double delta_length) {
  const double new_len = state.inserted_length + delta_length;
  if (!(new_len > 0.0))
    throw std::range_error("beam advance: retraction past the port");
  if (new_len > state.total_length + 1e-12)
    throw std::range_error("beam advance: inserted length exceeds total");

  // material arc coordinates (rest lengths) of the current polyline, port = 0
  std::vector<double> arc{0.0};
  for (double len : state.element_rest_lengths)
    arc.push_back(arc.back() + len);
  const double old_len = arc.back();

  const auto sample = [&](double s) -> Pose {
    if (s >= old_len) {  // newly exposed material extends along tip tangent
      const Pose& tip = state.node_poses.back();
      Pose p = tip;
      p.position += (s - old_len) * (tip.orientation * Vec3::UnitX());
      return p;
    }
    size_t seg = 0;
    while (seg + 2 < arc.size() && s > arc[seg + 1]) ++seg;
    const double lambda = (s - arc[seg]) / (arc[seg + 1] - arc[seg]);
    const Pose& a = state.node_poses[seg];
    const Pose& b = state.node_poses[seg + 1];
    Pose p;
    p.position = (1.0 - lambda) * a.position + lambda * b.position;
    p.orientation = a.orientation.slerp(lambda, b.orientation);
    return p;
  };

  BeamState out = state;
  out.inserted_length = new_len;
  const int n = std::max(
      1, static_cast<int>(
             std::ceil(new_len / state.max_element_length - 1e-12)));
  const double remainder = new_len - (n - 1) * state.max_element_length;
  out.element_rest_lengths.assign(1, remainder);
  for (int e = 1; e < n; ++e)
    out.element_rest_lengths.push_back(state.max_element_length);

  out.node_poses.clear();
  out.node_poses.push_back(state.node_poses.front());
  double s = 0.0;
  for (double len : out.element_rest_lengths) {
    s += len;
    out.node_poses.push_back(sample(s));
  }
  return out;
}

Pose tip_frame(const BeamState& state) { return state.node_poses.back(); }

Vec3 tip_tangent(const BeamState& state) {
  return state.node_poses.back().orientation * Vec3::UnitX();
}

double deviation_angle(const BeamState& state, const Vec3& b) {
  if (b.norm() < 1e-15)
    throw std::invalid_argument("deviation angle undefined for zero field");
  const Vec3 m = state.tip_magnet.moment_body.norm() > 0.0
                     ? Vec3(state.node_poses.back().orientation *
                            state.tip_magnet.moment_body)
                     : tip_tangent(state);
  const double c = m.normalized().dot(b.normalized());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

std::vector<Vec3> gravity_nodal_forces(const BeamState& state,
                                       const BeamProperties& props,
                                       const Vec3& gravity) {
  std::vector<Vec3> f(size_t(state.node_count()), Vec3::Zero());
  const double rho_a = props.density * props.area();
  for (int e = 0; e < state.element_count(); ++e) {
    const Vec3 half = 0.5 * rho_a * state.element_rest_lengths[size_t(e)] * gravity;
    f[size_t(e)] += half;
    f[size_t(e) + 1] += half;
  }
  return f;
}

}  // namespace magnav::beam
