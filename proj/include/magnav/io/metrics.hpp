#pragma once

// Error statistics over a closed-loop run: the localization channel
// compares the estimated pose against the true pose, the actuation channel
// the true pose against the reference. Orientation error is the angle
// between heading (moment) axes, so 5-DoF and 6-DoF states compare alike.

#include "magnav/core.hpp"
#include "magnav/engine/engine.hpp"

#include "nlohmann/json.hpp"

#include <string>
#include <vector>

namespace magnav::io {

struct ErrorSeries {
  std::vector<double> t;                    // s, one entry per tick
  std::vector<Vec3> localization_position;  // estimate - truth [m]
  std::vector<double> localization_angle;   // [0, pi] rad
  std::vector<Vec3> actuation_position;     // truth - reference [m]
  std::vector<double> actuation_angle;      // [0, pi] rad

  size_t size() const { return t.size(); }
};

ErrorSeries compute_errors(const std::vector<engine::TelemetryRecord>& telemetry,
                           int robot = 0);

// Order-free statistics of one channel pair. Angles get both the RMS and
// the plain mean, reported side by side (published error tables use either
// convention without saying which).
struct SeriesSummary {
  Vec3 position_abs_max = Vec3::Zero();   // per-axis max |e|
  Vec3 position_rms = Vec3::Zero();       // per-axis sqrt(mean e^2)
  double position_rms_euclidean = 0.0;    // sqrt(mean ||e||^2)
  double angle_max = 0.0;
  double angle_rms = 0.0;
  double angle_mean = 0.0;
};

struct ErrorSummary {
  int samples = 0;
  SeriesSummary localization;
  SeriesSummary actuation;
};

ErrorSummary summarize(const ErrorSeries& series);

nlohmann::json summary_json(const ErrorSummary& summary);
void write_summary(const ErrorSummary& summary, const std::string& path);

}  // namespace magnav::io
