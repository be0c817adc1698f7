#pragma once

#include "magnav/core.hpp"

#include <string>
#include <vector>

namespace magnav::world {

struct TrajectorySample {
  double time = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 heading = Vec3::UnitX();  // unit
};

// A B-spline path traversed at constant speed. `samples` holds the
// pre-computed reference at a fixed tick interval, ending with the sample
// that reaches the end of the path (clamped there if the duration is not a
// multiple of the tick).
struct PathTrajectory {
  std::vector<Vec3> waypoints;
  int degree = 3;
  double speed = 0.0;       // m/s along the curve
  double dt = 0.0;          // s between samples
  double arc_length = 0.0;  // m
  double duration = 0.0;    // s, arc_length / speed
  std::vector<TrajectorySample> samples;

  // Reference at an arbitrary time (clamped to [0, duration]).
  TrajectorySample at(double time) const;

  // Filled by bspline_trajectory, consumed by at().
  std::vector<double> knots;
  std::vector<double> table_u, table_s;  // cumulative arc length
  std::vector<Vec3> headings;            // unit; empty = follow the tangent
};

// Builds the constant-speed trajectory through `waypoints` (B-spline control
// points, clamped ends). `headings`, when given, must match `waypoints` in
// length; the reference heading is then interpolated between them instead of
// following the curve tangent.
PathTrajectory bspline_trajectory(const std::vector<Vec3>& waypoints,
                                  int degree, double speed, double dt,
                                  const std::vector<Vec3>& headings = {});

// Reads one "x y z" triple per line (SI metres). '#' starts a comment;
// blank lines are skipped. Errors carry the 1-based line number.
std::vector<Vec3> load_centerline(const std::string& path);

}  // namespace magnav::world
