#include "magnav/engine/log.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace magnav::engine {

namespace {

int columns_for(const std::string& mode) {
  if (mode == "capsule-pose") return 7;
  if (mode == "capsule-rolling") return 4;
  if (mode == "continuum-field") return 6;
  return 0;
}

[[noreturn]] void fail(const std::string& what) {
  throw std::runtime_error("command log: " + what);
}

}  // namespace

const CommandRecord& CommandLog::at(double t) const {
  if (records.empty()) fail("no records");
  // first record with t_rec > t, step back one; t before the first record
  // clamps to the first (the engine never asks for negative time)
  auto it = std::upper_bound(
      records.begin(), records.end(), t,
      [](double value, const CommandRecord& r) { return value < r.t; });
  if (it != records.begin()) --it;
  return *it;
}

void CommandLog::validate() const {
  if (columns_for(mode) == 0) fail("unknown mode '" + mode + "'");
  if (records.empty()) fail("no records");
  if (records.front().t != 0.0) fail("first record must be at t = 0");
  for (size_t i = 1; i < records.size(); ++i)
    if (!(records[i].t > records[i - 1].t)) {
      std::ostringstream os;
      os << "record " << i << ": time " << records[i].t
         << " not greater than previous " << records[i - 1].t;
      fail(os.str());
    }
}

CommandLog load_command_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);

  CommandLog log;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  const std::string magic = "# magnav-commands v1 ";

  while (std::getline(in, line)) {
    ++line_no;
    const size_t first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    if (!have_header) {
      if (line.compare(0, magic.size(), magic) != 0)
        fail("line " + std::to_string(line_no) +
             ": expected header '# magnav-commands v1 <mode>'");
      std::istringstream hs(line.substr(magic.size()));
      hs >> log.mode;
      if (columns_for(log.mode) == 0)
        fail("line " + std::to_string(line_no) + ": unknown mode '" +
             log.mode + "'");
      have_header = true;
      continue;
    }
    if (line[first] == '#') continue;

    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    std::string trailing;
    const int want = columns_for(log.mode);
    if (static_cast<int>(v.size()) != want || (ls.clear(), ls >> trailing))
      fail("line " + std::to_string(line_no) + ": expected " +
           std::to_string(want) + " numbers for mode '" + log.mode + "'");

    CommandRecord r;
    r.t = v[0];
    r.primary = Vec3(v[1], v[2], v[3]);
    if (log.mode == "capsule-pose") r.secondary = Vec3(v[4], v[5], v[6]);
    if (log.mode == "continuum-field") {
      r.field = v[4];
      r.insertion = v[5];
    }
    log.records.push_back(r);
  }
  if (!have_header) fail("missing header line in " + path);
  log.validate();
  return log;
}

void save_command_log(const CommandLog& log, const std::string& path) {
  log.validate();
  std::ofstream out(path, std::ios::binary);  // binary: keep LF on all hosts
  if (!out) fail("cannot write " + path);

  out << "# magnav-commands v1 " << log.mode << "\n";
  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ' ' << buf;
  };
  for (const CommandRecord& r : log.records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.t);
    out << buf;
    put(r.primary.x());
    put(r.primary.y());
    put(r.primary.z());
    if (log.mode == "capsule-pose") {
      put(r.secondary.x());
      put(r.secondary.y());
      put(r.secondary.z());
    } else if (log.mode == "continuum-field") {
      put(r.field);
      put(r.insertion);
    }
    out << "\n";
  }
  if (!out) fail("write failed for " + path);
}

}  // namespace magnav::engine
