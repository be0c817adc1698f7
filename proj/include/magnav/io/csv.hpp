#pragma once

// Plot-ready CSV persistence. Numeric tables with one header row, comma
// separators, LF endings, and %.17g values, so every double survives a
// write/read round trip bit-exactly.
//
// Telemetry schema (one row per control tick, column order fixed):
//   t_s, tick
//   per robot i (i = 0..robots-1):
//     r{i}_px_m  r{i}_py_m  r{i}_pz_m      true position
//     r{i}_hx    r{i}_hy    r{i}_hz        true heading (unit)
//     r{i}_vx_m_s ..._vy ..._vz            linear velocity
//     r{i}_est_px_m ... r{i}_est_pz_m      estimated position
//     r{i}_est_hx ... r{i}_est_hz          estimated heading
//     r{i}_ref_px_m ... r{i}_ref_pz_m      reference position
//     r{i}_ref_hx ... r{i}_ref_hz          reference heading
//     r{i}_fx_N  r{i}_fy_N  r{i}_fz_N      applied magnetic force
//     r{i}_taux_Nm ..._tauy ..._tauz       applied magnetic torque
//     r{i}_contact_N                       summed contact force magnitude
//   cmd_bx cmd_by cmd_bz cmd_b_T           commanded field direction + magnitude
//   i{j}_A                                 coil currents (coil rigs)
//   m{j}_px_m m{j}_py_m m{j}_pz_m          actuator magnet poses (magnet rigs;
//   m{j}_qw m{j}_qx m{j}_qy m{j}_qz        orientation as w-first quaternion)
//   dropped_tau_Nm                         unattainable torque magnitude
//   flag_saturated flag_singular flag_held
//   flag_solver_failed flag_estimator_failed flag_fatal

#include "magnav/core.hpp"
#include "magnav/engine/engine.hpp"
#include "magnav/io/metrics.hpp"

#include <string>
#include <utility>
#include <vector>

namespace magnav::io {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int columns() const { return static_cast<int>(header.size()); }
};

// Index of a named column; throws listing the name when absent.
int column_index(const Csv& csv, const std::string& name);

// Header + rows with %.17g formatting and LF endings; empty tables produce
// a header-only file.
void write_csv(const Csv& csv, const std::string& path);

// Inverse of write_csv. Rejects ragged rows and non-numeric fields with
// the offending line number.
Csv read_csv(const std::string& path);

// Telemetry table per the schema above.
Csv telemetry_csv(const std::vector<engine::TelemetryRecord>& records,
                  const engine::TelemetryLayout& layout);

// Rebuilds records from a schema-conforming table; the layout is recovered
// from the header. Bit-exact against the original records.
std::pair<std::vector<engine::TelemetryRecord>, engine::TelemetryLayout>
telemetry_from_csv(const Csv& csv);

// Error-series table: t_s, eL_{x,y,z}_m, eL_angle_rad, eA_{x,y,z}_m,
// eA_angle_rad.
Csv errors_csv(const ErrorSeries& series);

}  // namespace magnav::io
