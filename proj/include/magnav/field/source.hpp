#pragma once

// Field source catalogue: permanent dipole magnets (robot-arm actuators),
// current-scaled dipole coils, and Helmholtz / Maxwell coil pairs, plus
// superposition and the per-current field map used by coil allocation.

#include "magnav/core.hpp"
#include "magnav/field/dipole.hpp"
#include "magnav/field/gradient5.hpp"

#include <stdexcept>
#include <variant>
#include <vector>

namespace magnav::field {

// Permanent magnet; moment is fixed in the source frame and reoriented by
// the pose (robot-arm wrist motion).
struct DipoleMagnet {
  Pose pose;
  Vec3 moment = Vec3::Zero();  // A*m^2, source frame
};

// Electromagnet small enough for a dipole model; world moment scales with
// coil current.
struct DipoleCoil {
  Pose pose;
  Vec3 moment_per_amp = Vec3::Zero();  // A*m^2/A, source frame
};

// Coaxial coil pair with matched currents; near-uniform field, zero gradient
// in the central region. Centered on the world origin.
struct HelmholtzPair {
  Vec3 axis = Vec3::UnitZ();
  double field_gain = 0.0;  // T/A
  double radius = 0.0;      // m
};

// Coaxial pair with opposed currents; zero field, near-uniform gradient in
// the central region. Centered on the world origin.
struct MaxwellPair {
  Vec3 axis = Vec3::UnitZ();
  double gradient_gain = 0.0;  // (T/m)/A
  double radius = 0.0;         // m
};

using MagneticSource =
    std::variant<DipoleMagnet, DipoleCoil, HelmholtzPair, MaxwellPair>;

struct FieldSample {
  Vec3 b = Vec3::Zero();
  Gradient5 g = Gradient5::Zero();
  // Set when a coil-pair sample is taken outside the region where the
  // uniform-field/-gradient approximation is trusted; ORs under superposition.
  bool outside_workspace = false;
};

// The uniformity approximation for a coil pair is trusted inside a sphere of
// this fraction of the coil radius around the center.
inline constexpr double kCoilWorkspaceFraction = 0.3;

// Single-turn gain of a Helmholtz pair of given radius (field per amp),
// scaled by a turn count.
inline double helmholtz_field_gain(double radius, double turns = 1.0) {
  return 0.72 * kMu0 / radius * turns;
}

// Single-turn axial-gradient gain of a Maxwell pair of given radius.
inline double maxwell_gradient_gain(double radius, double turns = 1.0) {
  return 0.64 * kMu0 / (radius * radius) * turns;
}

inline bool is_current_controlled(const MagneticSource& src) {
  return !std::holds_alternative<DipoleMagnet>(src);
}

// Sample one source at p. `input` is the coil current in amps; for a
// permanent magnet it is a plain moment multiplier (pass 1).
inline FieldSample source_field(const MagneticSource& src, double input,
                                const Vec3& p) {
  FieldSample out;
  if (const auto* pm = std::get_if<DipoleMagnet>(&src)) {
    const Vec3 m = input * (pm->pose.orientation * pm->moment);
    const Vec3 r = p - pm->pose.position;
    out.b = dipole_field(r, m);
    out.g = pack_gradient(dipole_gradient(r, m));
  } else if (const auto* coil = std::get_if<DipoleCoil>(&src)) {
    const Vec3 m = input * (coil->pose.orientation * coil->moment_per_amp);
    const Vec3 r = p - coil->pose.position;
    out.b = dipole_field(r, m);
    out.g = pack_gradient(dipole_gradient(r, m));
  } else if (const auto* hh = std::get_if<HelmholtzPair>(&src)) {
    out.b = hh->field_gain * input * hh->axis;
    out.outside_workspace = p.norm() > kCoilWorkspaceFraction * hh->radius;
  } else {
    const auto& mx = std::get<MaxwellPair>(src);
    const Mat3 G = mx.gradient_gain * input *
                   (1.5 * mx.axis * mx.axis.transpose() - 0.5 * Mat3::Identity());
    out.g = pack_gradient(G);
    out.outside_workspace = p.norm() > kCoilWorkspaceFraction * mx.radius;
  }
  return out;
}

// Superpose sources in list order (fixed order keeps runs bit-identical).
inline FieldSample total_field(const std::vector<MagneticSource>& sources,
                               const std::vector<double>& inputs,
                               const Vec3& p) {
  if (sources.size() != inputs.size())
    throw std::invalid_argument("total_field: one input per source required");
  FieldSample sum;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const FieldSample s = source_field(sources[i], inputs[i], p);
    sum.b += s.b;
    sum.g += s.g;
    sum.outside_workspace = sum.outside_workspace || s.outside_workspace;
  }
  return sum;
}

// 8xN per-amp field map at p over current-controlled sources: column j is
// the stacked [b; g] of source j at unit current, so map * currents gives
// the superposed stacked sample.
inline MatX field_map_matrix(const std::vector<MagneticSource>& sources,
                             const Vec3& p) {
  if (sources.empty())
    throw std::invalid_argument("field_map_matrix: needs at least one source");
  MatX map(8, static_cast<Eigen::Index>(sources.size()));
  for (std::size_t j = 0; j < sources.size(); ++j) {
    if (!is_current_controlled(sources[j]))
      throw std::invalid_argument(
          "field_map_matrix: source " + std::to_string(j) +
          " is a permanent magnet, not current-controlled");
    const FieldSample s = source_field(sources[j], 1.0, p);
    map.col(static_cast<Eigen::Index>(j)) << s.b, s.g;
  }
  return map;
}

}  // namespace magnav::field
