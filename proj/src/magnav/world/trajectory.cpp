#include "magnav/world/trajectory.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace magnav::world {

namespace {

// Clamped uniform knot vector on [0, 1] for n control points, given degree.
std::vector<double> clamped_knots(int n, int degree) {
  const int spans = n - degree;
  std::vector<double> knots(size_t(n + degree + 1));
  for (int i = 0; i <= degree; ++i) knots[size_t(i)] = 0.0;
  for (int i = 1; i < spans; ++i)
    knots[size_t(degree + i)] = double(i) / double(spans);
  for (int i = n; i <= n + degree; ++i) knots[size_t(i)] = 1.0;
  return knots;
}

int find_span(const std::vector<double>& knots, int n, int degree, double u) {
  if (u >= knots[size_t(n)]) return n - 1;
  int lo = degree, hi = n;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    (u < knots[size_t(mid)] ? hi : lo) = mid;
  }
  return lo;
}

Vec3 de_boor(const std::vector<Vec3>& ctrl, const std::vector<double>& knots,
             int degree, double u) {
  const int n = int(ctrl.size());
  const int k = find_span(knots, n, degree, u);
  std::vector<Vec3> d(size_t(degree) + 1);
  for (int j = 0; j <= degree; ++j) d[size_t(j)] = ctrl[size_t(j + k - degree)];
  for (int r = 1; r <= degree; ++r) {
    for (int j = degree; j >= r; --j) {
      const int i = j + k - degree;
      const double den = knots[size_t(i + degree - r + 1)] - knots[size_t(i)];
      const double alpha = (u - knots[size_t(i)]) / den;
      d[size_t(j)] = (1.0 - alpha) * d[size_t(j - 1)] + alpha * d[size_t(j)];
    }
  }
  return d[size_t(degree)];
}

struct Curve {
  std::vector<Vec3> ctrl;
  std::vector<double> knots;
  int degree;

  Vec3 operator()(double u) const { return de_boor(ctrl, knots, degree, u); }

  // Hodograph: the derivative is itself a B-spline of degree-1.
  Curve derivative() const {
    Curve d;
    d.degree = degree - 1;
    const int n = int(ctrl.size());
    d.ctrl.resize(size_t(n - 1));
    for (int i = 0; i + 1 < n; ++i) {
      const double den =
          knots[size_t(i + degree + 1)] - knots[size_t(i + 1)];
      d.ctrl[size_t(i)] = double(degree) / den * (ctrl[size_t(i + 1)] - ctrl[size_t(i)]);
    }
    d.knots.assign(knots.begin() + 1, knots.end() - 1);
    return d;
  }
};

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGlNode[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                               0.5384693101056831, 0.9061798459386640};
constexpr double kGlWeight[5] = {0.2369268850561891, 0.4786286704993665,
                                 0.5688888888888889, 0.4786286704993665,
                                 0.2369268850561891};

double segment_length(const Curve& vel, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (int i = 0; i < 5; ++i)
    sum += kGlWeight[i] * vel(mid + half * kGlNode[i]).norm();
  return half * sum;
}

}  // namespace

TrajectorySample PathTrajectory::at(double time) const {
  if (table_s.size() < 2) throw std::logic_error("trajectory: not built");
  const double t = std::clamp(time, 0.0, duration);
  const double s = std::min(speed * t, arc_length);

  // Bracket s in the cumulative table, then polish the parameter with a few
  // Newton steps on the quadrature-based length.
  const auto it = std::upper_bound(table_s.begin(), table_s.end(), s);
  size_t j = size_t(std::max<ptrdiff_t>(0, it - table_s.begin() - 1));
  j = std::min(j, table_s.size() - 2);

  Curve curve{waypoints, knots, degree};
  const Curve vel = curve.derivative();

  double u_lo = table_u[j], u_hi = table_u[j + 1];
  const double ds = table_s[j + 1] - table_s[j];
  double u = ds > 0.0
                 ? u_lo + (u_hi - u_lo) * (s - table_s[j]) / ds
                 : u_lo;
  for (int iter = 0; iter < 8; ++iter) {
    const double f = table_s[j] + segment_length(vel, u_lo, u) - s;
    if (std::abs(f) < 1e-14 * std::max(arc_length, 1.0)) break;
    const double dfdu = vel(u).norm();
    double step = dfdu > 1e-12 ? -f / dfdu : 0.0;
    double u_new = u + step;
    if (step == 0.0 || u_new <= table_u[j] || u_new >= table_u[j + 1] + 1e-15) {
      // Bisection fallback keeps us inside the bracket.
      if (f > 0.0) u_hi = u; else u_lo = u;
      u_new = 0.5 * (u_lo + u_hi);
    }
    u = u_new;
  }
  u = std::clamp(u, 0.0, 1.0);
  if (s >= arc_length) u = 1.0;

  TrajectorySample out;
  out.time = t;
  out.position = curve(u);
  if (headings.empty()) {
    out.heading = vel(u).normalized();
  } else {
    // Headings ride along arc length, uniformly spaced over the waypoints.
    const double x = arc_length > 0.0
                         ? s / arc_length * double(headings.size() - 1)
                         : 0.0;
    const size_t i =
        std::min(size_t(std::floor(x)), headings.size() - 2);
    const double f = x - double(i);
    out.heading = ((1.0 - f) * headings[i] + f * headings[i + 1]).normalized();
  }
  return out;
}

PathTrajectory bspline_trajectory(const std::vector<Vec3>& waypoints,
                                  int degree, double speed, double dt,
                                  const std::vector<Vec3>& headings) {
  const int n = int(waypoints.size());
  if (n < 2) throw std::invalid_argument("trajectory: need at least 2 waypoints");
  if (degree < 1)
    throw std::invalid_argument("trajectory: degree must be at least 1");
  if (degree > n - 1)
    throw std::invalid_argument("trajectory: degree " + std::to_string(degree) +
                                " needs at least " + std::to_string(degree + 1) +
                                " waypoints, have " + std::to_string(n));
  if (!(speed > 0.0) || !std::isfinite(speed))
    throw std::invalid_argument("trajectory: speed must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("trajectory: dt must be positive");
  for (int i = 0; i + 1 < n; ++i) {
    if ((waypoints[size_t(i + 1)] - waypoints[size_t(i)]).norm() == 0.0)
      throw std::invalid_argument("trajectory: waypoints " + std::to_string(i) +
                                  " and " + std::to_string(i + 1) + " coincide");
  }
  for (const Vec3& w : waypoints)
    if (!w.allFinite())
      throw std::invalid_argument("trajectory: non-finite waypoint");
  if (!headings.empty() && headings.size() != waypoints.size())
    throw std::invalid_argument(
        "trajectory: headings must match waypoints in count");

  PathTrajectory traj;
  traj.waypoints = waypoints;
  traj.degree = degree;
  traj.speed = speed;
  traj.dt = dt;
  traj.knots = clamped_knots(n, degree);
  traj.headings.reserve(headings.size());
  for (const Vec3& h : headings) {
    if (!(h.norm() > 0.0) || !h.allFinite())
      throw std::invalid_argument("trajectory: headings must be nonzero");
    // Keep exact unit vectors untouched so a normalized value survives a
    // config echo/reload cycle bit-for-bit.
    const double n2 = h.squaredNorm();
    traj.headings.push_back(
        std::abs(n2 - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()
            ? h
            : Vec3(h / std::sqrt(n2)));
  }

  Curve curve{traj.waypoints, traj.knots, degree};
  const Curve vel = curve.derivative();

  // Cumulative arc length over a fine parameter grid; each cell integrated
  // with Gauss-Legendre so the table itself is quadrature-accurate.
  const int cells = 64 * (n - degree);
  traj.table_u.resize(size_t(cells) + 1);
  traj.table_s.resize(size_t(cells) + 1);
  traj.table_u[0] = 0.0;
  traj.table_s[0] = 0.0;
  for (int i = 1; i <= cells; ++i) {
    const double u0 = double(i - 1) / double(cells);
    const double u1 = double(i) / double(cells);
    traj.table_u[size_t(i)] = u1;
    traj.table_s[size_t(i)] =
        traj.table_s[size_t(i - 1)] + segment_length(vel, u0, u1);
  }
  traj.arc_length = traj.table_s.back();
  if (!(traj.arc_length > 0.0))
    throw std::invalid_argument("trajectory: degenerate path (zero length)");
  traj.duration = traj.arc_length / speed;

  const int ticks = int(std::ceil(traj.duration / dt - 1e-9));
  traj.samples.reserve(size_t(ticks) + 1);
  for (int k = 0; k <= ticks; ++k)
    traj.samples.push_back(traj.at(double(k) * dt));
  return traj;
}

std::vector<Vec3> load_centerline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("centerline: cannot open " + path);

  std::vector<Vec3> points;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      throw std::runtime_error("centerline: parse error at line " +
                               std::to_string(lineno) +
                               ": expected three numbers");
    std::string extra;
    if (ls >> extra)
      throw std::runtime_error("centerline: parse error at line " +
                               std::to_string(lineno) + ": trailing '" +
                               extra + "'");
    points.emplace_back(x, y, z);
  }
  if (points.empty())
    throw std::runtime_error("centerline: " + path + " contains no points");
  return points;
}

}  // namespace magnav::world
