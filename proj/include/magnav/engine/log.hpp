#pragma once

// Timestamped command streams for open-loop replay. A log captured from a
// closed-loop run feeds the same pipeline again with the reference stage
// swapped out, so a replay reproduces the original run bit for bit.

#include "magnav/core.hpp"

#include <string>
#include <vector>

namespace magnav::engine {

// One zero-order-hold interval. Which fields carry meaning depends on the
// controller mode the log belongs to:
//   capsule-pose:     primary = desired position, secondary = desired heading
//   capsule-rolling:  primary = rolling axis (unit)
//   continuum-field:  primary = field direction (unit), field = magnitude
//                     [T], insertion = insertion velocity [m/s]
struct CommandRecord {
  double t = 0.0;  // s
  Vec3 primary = Vec3::Zero();
  Vec3 secondary = Vec3::Zero();
  double field = 0.0;
  double insertion = 0.0;
};

struct CommandLog {
  std::string mode;  // capsule-pose | capsule-rolling | continuum-field
  std::vector<CommandRecord> records;

  // Record in force at time t (hold of the latest record with t_rec <= t).
  const CommandRecord& at(double t) const;

  // Throws std::runtime_error naming the first violated invariant:
  // known mode, at least one record, first record at t = 0, strictly
  // increasing timestamps.
  void validate() const;
};

// File format: one header line `# magnav-commands v1 <mode>`, then one
// whitespace-separated record per line. Column layout per mode:
//   capsule-pose:     t px py pz hx hy hz
//   capsule-rolling:  t ax ay az
//   continuum-field:  t bx by bz field_T insertion_m_s
// Additional '#' lines and blank lines are ignored. Numbers are written
// with 17 significant digits so a save/load cycle is bit-exact.
CommandLog load_command_log(const std::string& path);
void save_command_log(const CommandLog& log, const std::string& path);

}  // namespace magnav::engine
