#include "magnav/io/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace magnav::io {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void push3(std::vector<double>& row, const Vec3& v) {
  row.push_back(v.x());
  row.push_back(v.y());
  row.push_back(v.z());
}

Vec3 take3(const std::vector<double>& row, size_t& k) {
  const Vec3 v(row[k], row[k + 1], row[k + 2]);
  k += 3;
  return v;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> telemetry_header(const engine::TelemetryLayout& layout) {
  std::vector<std::string> h{"t_s", "tick"};
  for (int i = 0; i < layout.robots; ++i) {
    const std::string r = "r" + std::to_string(i) + "_";
    for (const char* c :
         {"px_m", "py_m", "pz_m", "hx", "hy", "hz", "vx_m_s", "vy_m_s",
          "vz_m_s", "est_px_m", "est_py_m", "est_pz_m", "est_hx", "est_hy",
          "est_hz", "ref_px_m", "ref_py_m", "ref_pz_m", "ref_hx", "ref_hy",
          "ref_hz", "fx_N", "fy_N", "fz_N", "taux_Nm", "tauy_Nm", "tauz_Nm",
          "contact_N"})
      h.push_back(r + c);
  }
  for (const char* c : {"cmd_bx", "cmd_by", "cmd_bz", "cmd_b_T"}) h.push_back(c);
  for (int j = 0; j < layout.coil_channels; ++j)
    h.push_back("i" + std::to_string(j) + "_A");
  for (int j = 0; j < layout.magnet_actuators; ++j) {
    const std::string m = "m" + std::to_string(j) + "_";
    for (const char* c : {"px_m", "py_m", "pz_m", "qw", "qx", "qy", "qz"})
      h.push_back(m + c);
  }
  h.push_back("dropped_tau_Nm");
  for (const char* c : {"flag_saturated", "flag_singular", "flag_held",
                        "flag_solver_failed", "flag_estimator_failed",
                        "flag_fatal"})
    h.push_back(c);
  return h;
}

}  // namespace

int column_index(const Csv& csv, const std::string& name) {
  for (size_t i = 0; i < csv.header.size(); ++i)
    if (csv.header[i] == name) return static_cast<int>(i);
  throw std::out_of_range("csv: no column named '" + name + "'");
}

void write_csv(const Csv& csv, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error("csv: cannot open '" + path + "' for writing");
  for (size_t i = 0; i < csv.header.size(); ++i) {
    if (i) f << ',';
    f << csv.header[i];
  }
  f << '\n';
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != csv.header.size())
      throw std::invalid_argument(
          "csv: row " + std::to_string(r) + " has " +
          std::to_string(row.size()) + " fields, header has " +
          std::to_string(csv.header.size()));
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) f << ',';
      f << fmt(row[i]);
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("csv: write failed for '" + path + "'");
}

Csv read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("csv: cannot open '" + path + "'");

  Csv csv;
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      csv.header = split_line(line);
      continue;
    }
    if (line.empty()) continue;  // trailing blank line
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != csv.header.size())
      throw std::runtime_error("csv: line " + std::to_string(lineno) +
                               ": expected " +
                               std::to_string(csv.header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const std::string& s : fields) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size())
        throw std::runtime_error("csv: line " + std::to_string(lineno) +
                                 ": not a number: '" + s + "'");
      row.push_back(v);
    }
    csv.rows.push_back(std::move(row));
  }
  if (lineno == 0) throw std::runtime_error("csv: '" + path + "': missing header");
  return csv;
}

Csv telemetry_csv(const std::vector<engine::TelemetryRecord>& records,
                  const engine::TelemetryLayout& layout) {
  Csv csv;
  csv.header = telemetry_header(layout);
  csv.rows.reserve(records.size());

  for (const auto& rec : records) {
    if (static_cast<int>(rec.robots.size()) != layout.robots ||
        static_cast<int>(rec.currents.size()) != layout.coil_channels ||
        static_cast<int>(rec.magnet_poses.size()) != layout.magnet_actuators)
      throw std::invalid_argument(
          "telemetry csv: record shape does not match the layout");

    std::vector<double> row;
    row.reserve(csv.header.size());
    row.push_back(rec.t);
    row.push_back(static_cast<double>(rec.tick));
    for (const auto& rb : rec.robots) {
      push3(row, rb.position);
      push3(row, rb.heading);
      push3(row, rb.velocity);
      push3(row, rb.est_position);
      push3(row, rb.est_heading);
      push3(row, rb.ref_position);
      push3(row, rb.ref_heading);
      push3(row, rb.wrench.force);
      push3(row, rb.wrench.torque);
      row.push_back(rb.contact_force);
    }
    push3(row, rec.field_direction);
    row.push_back(rec.field_magnitude);
    for (int j = 0; j < layout.coil_channels; ++j) row.push_back(rec.currents[j]);
    for (const Pose& p : rec.magnet_poses) {
      push3(row, p.position);
      row.push_back(p.orientation.w());
      row.push_back(p.orientation.x());
      row.push_back(p.orientation.y());
      row.push_back(p.orientation.z());
    }
    row.push_back(rec.dropped_torque);
    row.push_back(rec.flags.saturated ? 1.0 : 0.0);
    row.push_back(rec.flags.singular ? 1.0 : 0.0);
    row.push_back(rec.flags.held ? 1.0 : 0.0);
    row.push_back(rec.flags.solver_failed ? 1.0 : 0.0);
    row.push_back(rec.flags.estimator_failed ? 1.0 : 0.0);
    row.push_back(rec.flags.fatal ? 1.0 : 0.0);
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

std::pair<std::vector<engine::TelemetryRecord>, engine::TelemetryLayout>
telemetry_from_csv(const Csv& csv) {
  engine::TelemetryLayout layout;
  for (const std::string& name : csv.header) {
    if (name.size() > 1 && name[0] == 'r' && name.find("_px_m") != std::string::npos &&
        name.find("est") == std::string::npos && name.find("ref") == std::string::npos)
      ++layout.robots;
    else if (name.size() > 2 && name[0] == 'i' && name.rfind("_A") == name.size() - 2)
      ++layout.coil_channels;
    else if (name.size() > 1 && name[0] == 'm' && name.find("_px_m") != std::string::npos)
      ++layout.magnet_actuators;
  }
  if (csv.header != telemetry_header(layout))
    throw std::runtime_error("csv: header does not match the telemetry schema");

  std::vector<engine::TelemetryRecord> records;
  records.reserve(csv.rows.size());
  for (const auto& row : csv.rows) {
    engine::TelemetryRecord rec;
    size_t k = 0;
    rec.t = row[k++];
    rec.tick = static_cast<long>(row[k++]);
    rec.robots.resize(static_cast<size_t>(layout.robots));
    for (auto& rb : rec.robots) {
      rb.position = take3(row, k);
      rb.heading = take3(row, k);
      rb.velocity = take3(row, k);
      rb.est_position = take3(row, k);
      rb.est_heading = take3(row, k);
      rb.ref_position = take3(row, k);
      rb.ref_heading = take3(row, k);
      rb.wrench.force = take3(row, k);
      rb.wrench.torque = take3(row, k);
      rb.contact_force = row[k++];
    }
    rec.field_direction = take3(row, k);
    rec.field_magnitude = row[k++];
    rec.currents.resize(layout.coil_channels);
    for (int j = 0; j < layout.coil_channels; ++j) rec.currents[j] = row[k++];
    rec.magnet_poses.resize(static_cast<size_t>(layout.magnet_actuators));
    for (Pose& p : rec.magnet_poses) {
      p.position = take3(row, k);
      const double w = row[k], x = row[k + 1], y = row[k + 2], z = row[k + 3];
      k += 4;
      p.orientation = Quat(w, x, y, z);  // verbatim, not renormalized
    }
    rec.dropped_torque = row[k++];
    rec.flags.saturated = row[k++] != 0.0;
    rec.flags.singular = row[k++] != 0.0;
    rec.flags.held = row[k++] != 0.0;
    rec.flags.solver_failed = row[k++] != 0.0;
    rec.flags.estimator_failed = row[k++] != 0.0;
    rec.flags.fatal = row[k++] != 0.0;
    records.push_back(std::move(rec));
  }
  return {std::move(records), layout};
}

Csv errors_csv(const ErrorSeries& series) {
  Csv csv;
  csv.header = {"t_s",    "eL_x_m", "eL_y_m", "eL_z_m", "eL_angle_rad",
                "eA_x_m", "eA_y_m", "eA_z_m", "eA_angle_rad"};
  csv.rows.reserve(series.size());
  for (size_t i = 0; i < series.size(); ++i) {
    std::vector<double> row{series.t[i]};
    push3(row, series.localization_position[i]);
    row.push_back(series.localization_angle[i]);
    push3(row, series.actuation_position[i]);
    row.push_back(series.actuation_angle[i]);
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

}  // namespace magnav::io
