#include "magnav/io/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace magnav::io {
namespace {

// Angle between two axes, scale-invariant and safe near alignment.
double axis_angle(const Vec3& a, const Vec3& b) {
  if (a.norm() < 1e-15 || b.norm() < 1e-15) return 0.0;
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

SeriesSummary channel_stats(const std::vector<Vec3>& pos,
                            const std::vector<double>& ang) {
  SeriesSummary s;
  const double n = static_cast<double>(pos.size());
  Vec3 sq = Vec3::Zero();
  double esq = 0.0;
  for (const Vec3& e : pos) {
    s.position_abs_max = s.position_abs_max.cwiseMax(e.cwiseAbs());
    sq += e.cwiseAbs2();
    esq += e.squaredNorm();
  }
  s.position_rms = (sq / n).cwiseSqrt();
  s.position_rms_euclidean = std::sqrt(esq / n);
  double asq = 0.0, asum = 0.0;
  for (double a : ang) {
    s.angle_max = std::max(s.angle_max, std::abs(a));
    asq += a * a;
    asum += a;
  }
  s.angle_rms = std::sqrt(asq / n);
  s.angle_mean = asum / n;
  return s;
}

nlohmann::json channel_json(const SeriesSummary& s) {
  return {
      {"position_abs_max_m",
       {s.position_abs_max.x(), s.position_abs_max.y(), s.position_abs_max.z()}},
      {"position_rms_m",
       {s.position_rms.x(), s.position_rms.y(), s.position_rms.z()}},
      {"position_rms_euclidean_m", s.position_rms_euclidean},
      {"angle_max_rad", s.angle_max},
      {"angle_rms_rad", s.angle_rms},
      {"angle_mean_rad", s.angle_mean},
  };
}

}  // namespace

ErrorSeries compute_errors(const std::vector<engine::TelemetryRecord>& telemetry,
                           int robot) {
  ErrorSeries out;
  out.t.reserve(telemetry.size());
  for (const auto& rec : telemetry) {
    if (robot < 0 || robot >= static_cast<int>(rec.robots.size()))
      throw std::out_of_range("compute_errors: robot " + std::to_string(robot) +
                              " not in telemetry");
    const auto& r = rec.robots[static_cast<size_t>(robot)];
    out.t.push_back(rec.t);
    out.localization_position.push_back(r.est_position - r.position);
    out.localization_angle.push_back(axis_angle(r.est_heading, r.heading));
    out.actuation_position.push_back(r.position - r.ref_position);
    out.actuation_angle.push_back(axis_angle(r.heading, r.ref_heading));
  }
  return out;
}

ErrorSummary summarize(const ErrorSeries& series) {
  if (series.size() == 0)
    throw std::invalid_argument("summarize: empty error series");
  ErrorSummary out;
  out.samples = static_cast<int>(series.size());
  out.localization =
      channel_stats(series.localization_position, series.localization_angle);
  out.actuation =
      channel_stats(series.actuation_position, series.actuation_angle);
  return out;
}

nlohmann::json summary_json(const ErrorSummary& summary) {
  return {
      {"samples", summary.samples},
      {"localization", channel_json(summary.localization)},
      {"actuation", channel_json(summary.actuation)},
  };
}

void write_summary(const ErrorSummary& summary, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error("summary: cannot open '" + path + "' for writing");
  f << summary_json(summary).dump(2) << "\n";
  if (!f) throw std::runtime_error("summary: write failed for '" + path + "'");
}

}  // namespace magnav::io
