#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "magnav/core.hpp"
#include "magnav/world/contact.hpp"
#include "magnav/world/mesh.hpp"
#include "magnav/world/scenario.hpp"
#include "magnav/world/trajectory.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace magnav;
namespace fs = std::filesystem;

namespace {

std::string data_dir() {
  const char* d = std::getenv("MAGNAV_TEST_DATA");
  REQUIRE(d != nullptr);
  return d;
}

fs::path tmp_dir() {
  const fs::path d = fs::temp_directory_path() / "magnav_world_tests";
  fs::create_directories(d);
  return d;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

template <class F>
std::string thrown_message(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// ---- independent closest-point oracle: plane projection + signed
// barycentric areas, falling back to the three edge segments. Deliberately a
// different construction from the library's Voronoi-region walk.
Vec3 oracle_segment_closest(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double dd = d.squaredNorm();
  double t = dd > 0.0 ? (p - a).dot(d) / dd : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return a + t * d;
}

Vec3 oracle_triangle_closest(const Vec3& p, const Vec3& a, const Vec3& b,
                             const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double nn = n.squaredNorm();
  const Vec3 q = p - n * ((p - a).dot(n) / nn);
  const double wa = (b - q).cross(c - q).dot(n);
  const double wb = (c - q).cross(a - q).dot(n);
  const double wc = (a - q).cross(b - q).dot(n);
  if (wa >= 0.0 && wb >= 0.0 && wc >= 0.0) return q;
  Vec3 best = oracle_segment_closest(p, a, b);
  for (const Vec3& cand :
       {oracle_segment_closest(p, b, c), oracle_segment_closest(p, c, a)}) {
    if ((p - cand).squaredNorm() < (p - best).squaredNorm()) best = cand;
  }
  return best;
}

Vec3 oracle_mesh_closest(const world::EnvironmentMesh& mesh, const Vec3& p) {
  Vec3 best = Vec3::Zero();
  double best_sq = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles) {
    const Vec3 cand = oracle_triangle_closest(
        p, mesh.vertices[size_t(t[0])], mesh.vertices[size_t(t[1])],
        mesh.vertices[size_t(t[2])]);
    const double d = (p - cand).squaredNorm();
    if (d < best_sq) {
      best_sq = d;
      best = cand;
    }
  }
  return best;
}

world::EnvironmentMesh floor_mesh(double friction = 0.0) {
  world::EnvironmentMesh m;
  m.vertices = {Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(1, 1, 0),
                Vec3(-1, 1, 0)};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.friction = friction;
  m.stiffness = 500.0;
  m.damping = 5.0;
  m.contact_margin = 1e-3;
  m.build();
  return m;
}

void write_binary_stl(const fs::path& path,
                      const world::EnvironmentMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  char header[80] = {};
  std::memcpy(header, "binary fixture", 14);
  out.write(header, 80);
  const uint32_t n = uint32_t(mesh.triangles.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& t : mesh.triangles) {
    const float zero[3] = {0.f, 0.f, 0.f};
    out.write(reinterpret_cast<const char*>(zero), 12);
    for (int k = 0; k < 3; ++k) {
      const Vec3& v = mesh.vertices[size_t(t[size_t(k)])];
      const float f[3] = {float(v.x()), float(v.y()), float(v.z())};
      out.write(reinterpret_cast<const char*>(f), 12);
    }
    const uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

}  // namespace

TEST_SUITE("stl loading") {
  TEST_CASE("ascii cube") {
    const auto mesh = world::load_mesh(data_dir() + "/cube_ascii.stl");
    CHECK(mesh.triangles.size() == 12);
    CHECK(mesh.vertices.size() == 36);
    const auto [lo, hi] = mesh.bounds();
    CHECK(lo.isApprox(Vec3::Zero(), 1e-12));
    CHECK(hi.isApprox(Vec3::Constant(0.1), 1e-12));
    for (const auto& t : mesh.triangles) {
      const Vec3 a = mesh.vertices[size_t(t[0])];
      const Vec3 area = (mesh.vertices[size_t(t[1])] - a)
                            .cross(mesh.vertices[size_t(t[2])] - a);
      CHECK(area.norm() > 0.0);
    }
    CHECK(mesh.built());
  }

  TEST_CASE("binary gives the same soup as ascii") {
    const auto ascii = world::load_mesh(data_dir() + "/cube_ascii.stl");
    const fs::path bin = tmp_dir() / "cube_bin.stl";
    write_binary_stl(bin, ascii);
    const auto binary = world::load_mesh(bin.string());
    REQUIRE(binary.triangles.size() == ascii.triangles.size());
    for (size_t i = 0; i < ascii.triangles.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        const Vec3 va = ascii.vertices[size_t(ascii.triangles[i][size_t(k)])];
        const Vec3 vb = binary.vertices[size_t(binary.triangles[i][size_t(k)])];
        CHECK((va - vb).norm() < 1e-7);  // float storage rounding only
      }
    }
  }

  TEST_CASE("truncated binary reports the byte offset") {
    const auto ascii = world::load_mesh(data_dir() + "/cube_ascii.stl");
    const fs::path bin = tmp_dir() / "cube_trunc.stl";
    write_binary_stl(bin, ascii);
    std::ifstream in(bin, std::ios::binary);
    std::string buf((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    in.close();
    buf.resize(buf.size() - 10);
    const fs::path cut = tmp_dir() / "cube_cut.stl";
    write_file(cut, buf);

    const std::string msg =
        thrown_message([&] { world::load_mesh(cut.string()); });
    CHECK(contains(msg, "stl parse error at byte"));
    CHECK(contains(msg, "truncated"));
    CHECK(contains(msg, "12 facets"));
  }

  TEST_CASE("ascii keyword typo reports position and expectation") {
    const fs::path bad = tmp_dir() / "bad_keyword.stl";
    write_file(bad,
               "solid t\n"
               "facet normal 0 0 1\n"
               "outer lop\n"
               "vertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\n"
               "endloop\nendfacet\nendsolid t\n");
    const std::string msg =
        thrown_message([&] { world::load_mesh(bad.string()); });
    CHECK(contains(msg, "stl parse error at byte"));
    CHECK(contains(msg, "expected 'loop', got 'lop'"));
  }

  TEST_CASE("ascii non-numeric vertex is rejected") {
    const fs::path bad = tmp_dir() / "bad_number.stl";
    write_file(bad,
               "solid t\nfacet normal 0 0 1\nouter loop\n"
               "vertex 0 zero 0\nvertex 1 0 0\nvertex 0 1 0\n"
               "endloop\nendfacet\nendsolid t\n");
    const std::string msg =
        thrown_message([&] { world::load_mesh(bad.string()); });
    CHECK(contains(msg, "expected a number, got 'zero'"));
  }

  TEST_CASE("degenerate facets are dropped") {
    std::ifstream in(data_dir() + "/cube_ascii.stl");
    std::string cube((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    const std::string degen =
        "facet normal 0 0 1\nouter loop\n"
        "vertex 0 0 0\nvertex 0.05 0.05 0.05\nvertex 0.1 0.1 0.1\n"
        "endloop\nendfacet\n";
    const size_t at = cube.find("endsolid");
    cube.insert(at, degen);
    const fs::path p = tmp_dir() / "cube_degen.stl";
    write_file(p, cube);
    CHECK(world::load_mesh(p.string()).triangles.size() == 12);
  }

  TEST_CASE("empty and missing inputs") {
    const fs::path empty = tmp_dir() / "empty.stl";
    write_file(empty, "solid nothing\nendsolid nothing\n");
    CHECK(contains(thrown_message([&] { world::load_mesh(empty.string()); }),
                   "no usable facets"));
    CHECK(contains(
        thrown_message([&] { world::load_mesh("/nonexistent/q.stl"); }),
        "cannot open"));
  }

  TEST_CASE("unrecognizable content is rejected") {
    const fs::path junk = tmp_dir() / "junk.stl";
    write_file(junk, "PK\x03\x04 definitely not a mesh");
    const std::string msg =
        thrown_message([&] { world::load_mesh(junk.string()); });
    CHECK(contains(msg, "not an stl file"));
  }
}

TEST_SUITE("closest point") {
  TEST_CASE("matches brute force on a random soup") {
    GaussianRng rng(42);
    world::EnvironmentMesh mesh;
    for (int i = 0; i < 60; ++i) {
      const Vec3 center(rng.uniform01() * 0.8 - 0.4,
                        rng.uniform01() * 0.8 - 0.4,
                        rng.uniform01() * 0.8 - 0.4);
      const int base = int(mesh.vertices.size());
      for (int k = 0; k < 3; ++k) {
        mesh.vertices.push_back(center +
                                Vec3(rng.uniform01() - 0.5,
                                     rng.uniform01() - 0.5,
                                     rng.uniform01() - 0.5) *
                                    0.25);
      }
      mesh.triangles.push_back({base, base + 1, base + 2});
    }
    mesh.build();

    for (int i = 0; i < 1000; ++i) {
      const Vec3 q(rng.uniform01() * 1.2 - 0.6, rng.uniform01() * 1.2 - 0.6,
                   rng.uniform01() * 1.2 - 0.6);
      const auto fast = world::closest_point(mesh, q);
      const Vec3 slow = oracle_mesh_closest(mesh, q);
      REQUIRE((fast.point - slow).norm() <= 1e-12);
      REQUIRE(fast.distance ==
              doctest::Approx((q - slow).norm()).epsilon(1e-12));
    }
  }

  TEST_CASE("known cube answers") {
    const auto mesh = world::load_mesh(data_dir() + "/cube_ascii.stl");

    SUBCASE("outside, facing +x") {
      const auto r = world::closest_point(mesh, Vec3(0.14, 0.03, 0.04));
      CHECK((r.point - Vec3(0.1, 0.03, 0.04)).norm() < 1e-14);
      CHECK(r.distance == doctest::Approx(0.04).epsilon(1e-12));
      CHECK(std::abs(r.normal.x()) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(r.normal.norm() == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("interior point maps to the nearest face") {
      const auto r = world::closest_point(mesh, Vec3(0.02, 0.03, 0.04));
      CHECK((r.point - Vec3(0.0, 0.03, 0.04)).norm() < 1e-14);
      CHECK(r.distance == doctest::Approx(0.02).epsilon(1e-12));
    }
    SUBCASE("corner region") {
      const Vec3 q(0.15, -0.04, 0.13);
      const auto r = world::closest_point(mesh, q);
      CHECK((r.point - Vec3(0.1, 0.0, 0.1)).norm() < 1e-14);
      CHECK(r.distance ==
            doctest::Approx(std::sqrt(0.05 * 0.05 + 0.04 * 0.04 + 0.03 * 0.03))
                .epsilon(1e-12));
    }
  }

  TEST_CASE("misuse throws") {
    world::EnvironmentMesh empty;
    CHECK_THROWS_AS(world::closest_point(empty, Vec3::Zero()),
                    std::logic_error);
    world::EnvironmentMesh unbuilt;
    unbuilt.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    unbuilt.triangles = {{0, 1, 2}};
    CHECK_THROWS_AS(world::closest_point(unbuilt, Vec3::Zero()),
                    std::logic_error);
  }
}

TEST_SUITE("contact") {
  TEST_CASE("clear of the surface: no force") {
    const auto mesh = floor_mesh();
    world::BodySample body{Vec3(0.1, 0.2, 0.02), 0.005, Vec3::Zero()};
    const auto f = world::sphere_contact(body, mesh);
    CHECK(!f.active);
    CHECK(f.force.norm() == 0.0);
  }

  TEST_CASE("inside the margin but not touching: still no force") {
    const auto mesh = floor_mesh();
    // gap of half a margin above touch
    world::BodySample body{Vec3(0, 0, 0.005 + 0.5e-3), 0.005, Vec3::Zero()};
    const auto f = world::sphere_contact(body, mesh);
    CHECK(!f.active);
    CHECK(f.force.norm() == 0.0);
  }

  TEST_CASE("static penetration gives the spring force") {
    const auto mesh = floor_mesh();
    const double delta = 2e-3;
    world::BodySample body{Vec3(0.3, -0.2, 0.005 - delta), 0.005,
                           Vec3::Zero()};
    const auto f = world::sphere_contact(body, mesh);
    REQUIRE(f.active);
    CHECK(f.penetration == doctest::Approx(delta).epsilon(1e-12));
    // normal reconstruction rounds at ~1e-14 away from the vertices
    CHECK(std::abs(f.force.x()) < 1e-12);
    CHECK(std::abs(f.force.y()) < 1e-12);
    CHECK(f.force.z() == doctest::Approx(500.0 * delta).epsilon(1e-12));
    CHECK((f.point - Vec3(0.3, -0.2, 0.0)).norm() < 1e-12);
  }

  TEST_CASE("normal damping only while approaching") {
    const auto mesh = floor_mesh();
    const double delta = 1e-3;
    world::BodySample down{Vec3(0, 0, 0.005 - delta), 0.005,
                           Vec3(0, 0, -0.05)};
    world::BodySample up{Vec3(0, 0, 0.005 - delta), 0.005, Vec3(0, 0, 0.05)};
    const auto fd = world::sphere_contact(down, mesh);
    const auto fu = world::sphere_contact(up, mesh);
    CHECK(fd.force.z() ==
          doctest::Approx(500.0 * delta + 5.0 * 0.05).epsilon(1e-12));
    CHECK(fu.force.z() == doctest::Approx(500.0 * delta).epsilon(1e-12));
  }

  TEST_CASE("friction opposes sliding and saturates") {
    const auto mesh = floor_mesh(0.4);
    const double delta = 1e-3;
    const double fn = 500.0 * delta;

    SUBCASE("fast slide: full Coulomb value") {
      world::BodySample body{Vec3(0, 0, 0.005 - delta), 0.005,
                             Vec3(0.02, 0, 0)};
      const auto f = world::sphere_contact(body, mesh);
      // v / v_eps = 200, tanh saturated
      CHECK(f.force.x() == doctest::Approx(-0.4 * fn).epsilon(1e-9));
      CHECK(f.force.z() == doctest::Approx(fn).epsilon(1e-12));
    }
    SUBCASE("creeping slide: linear in speed") {
      const double v = 1e-8;
      world::BodySample body{Vec3(0, 0, 0.005 - delta), 0.005, Vec3(v, 0, 0)};
      const auto f = world::sphere_contact(body, mesh);
      CHECK(f.force.x() ==
            doctest::Approx(-0.4 * fn * (v / 1e-4)).epsilon(1e-6));
    }
    SUBCASE("oblique velocity splits into normal damping and friction") {
      world::BodySample body{Vec3(0, 0, 0.005 - delta), 0.005,
                             Vec3(0.05, 0, -0.02)};
      const auto f = world::sphere_contact(body, mesh);
      const double fn2 = 500.0 * delta + 5.0 * 0.02;
      CHECK(f.force.z() == doctest::Approx(fn2).epsilon(1e-12));
      CHECK(f.force.x() == doctest::Approx(-0.4 * fn2).epsilon(1e-7));
      CHECK(f.force.y() == 0.0);
    }
  }

  TEST_CASE("batch helper matches single evaluations") {
    const auto mesh = floor_mesh(0.2);
    std::vector<world::BodySample> bodies = {
        {Vec3(0, 0, 0.004), 0.005, Vec3(0.01, 0, 0)},
        {Vec3(0.5, 0.5, 0.1), 0.005, Vec3::Zero()}};
    const auto all = world::contact_forces(bodies, mesh);
    REQUIRE(all.size() == 2);
    const auto one = world::sphere_contact(bodies[0], mesh);
    CHECK(all[0].force == one.force);
    CHECK(all[0].active);
    CHECK(!all[1].active);
  }
}

namespace {

// Cox-de-Boor basis recursion: the textbook definition, independent of the
// library's de Boor evaluation.
double oracle_basis(int i, int p, double u, const std::vector<double>& knots) {
  if (p == 0)
    return (u >= knots[size_t(i)] && u < knots[size_t(i + 1)]) ? 1.0 : 0.0;
  double acc = 0.0;
  const double dl = knots[size_t(i + p)] - knots[size_t(i)];
  if (dl > 0.0)
    acc += (u - knots[size_t(i)]) / dl * oracle_basis(i, p - 1, u, knots);
  const double dr = knots[size_t(i + p + 1)] - knots[size_t(i + 1)];
  if (dr > 0.0)
    acc += (knots[size_t(i + p + 1)] - u) / dr *
           oracle_basis(i + 1, p - 1, u, knots);
  return acc;
}

Vec3 oracle_curve(const std::vector<Vec3>& ctrl,
                  const std::vector<double>& knots, int p, double u) {
  Vec3 acc = Vec3::Zero();
  for (int i = 0; i < int(ctrl.size()); ++i)
    acc += oracle_basis(i, p, u, knots) * ctrl[size_t(i)];
  return acc;
}

std::vector<double> oracle_clamped_knots(int n, int p) {
  std::vector<double> knots;
  for (int i = 0; i <= p; ++i) knots.push_back(0.0);
  for (int i = 1; i < n - p; ++i) knots.push_back(double(i) / double(n - p));
  for (int i = 0; i <= p; ++i) knots.push_back(1.0);
  return knots;
}

const std::vector<Vec3> square_waypoints = {
    {0.02, 0.0, 0.01},  {0.02, 0.02, 0.01},  {-0.02, 0.02, 0.01},
    {-0.02, -0.02, 0.01}, {0.02, -0.02, 0.01}, {0.02, 0.0, 0.01}};

}  // namespace

TEST_SUITE("trajectory") {
  TEST_CASE("straight line at constant speed") {
    const std::vector<Vec3> w = {Vec3::Zero(), Vec3(0.1, 0, 0)};
    const auto traj = world::bspline_trajectory(w, 1, 0.02, 0.1);
    CHECK(traj.arc_length == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(traj.duration == doctest::Approx(5.0).epsilon(1e-12));
    REQUIRE(traj.samples.size() == 51);
    for (size_t k = 0; k < traj.samples.size(); ++k) {
      const auto& s = traj.samples[k];
      CHECK(s.time == doctest::Approx(0.1 * double(k)).epsilon(1e-15));
      CHECK(s.position.x() ==
            doctest::Approx(0.002 * double(k)).epsilon(1e-10));
      CHECK(std::abs(s.position.y()) < 1e-15);
      CHECK((s.heading - Vec3::UnitX()).norm() < 1e-12);
    }
    CHECK((traj.samples.back().position - w.back()).norm() < 1e-12);
  }

  TEST_CASE("clamped cubic hits both end waypoints") {
    const auto traj = world::bspline_trajectory(square_waypoints, 3, 0.01, 0.02);
    CHECK((traj.at(0.0).position - square_waypoints.front()).norm() < 1e-15);
    CHECK((traj.samples.back().position - square_waypoints.back()).norm() <
          1e-9);
    CHECK(traj.samples.back().time >= traj.duration - 1e-12);
    // beyond-range queries clamp
    CHECK((traj.at(-3.0).position - traj.at(0.0).position).norm() == 0.0);
    CHECK((traj.at(traj.duration + 9.0).position -
           square_waypoints.back()).norm() < 1e-9);
  }

  TEST_CASE("speed is constant to 0.1 percent") {
    const auto traj = world::bspline_trajectory(square_waypoints, 3, 0.01, 0.02);
    REQUIRE(traj.samples.size() > 100);
    for (size_t k = 1; k + 1 < traj.samples.size(); ++k) {
      const double step =
          (traj.samples[k].position - traj.samples[k - 1].position).norm();
      CHECK(step / 0.02 == doctest::Approx(0.01).epsilon(1e-3));
    }
  }

  TEST_CASE("curve agrees with the basis-function definition") {
    const int degree = 3;
    const auto traj =
        world::bspline_trajectory(square_waypoints, degree, 0.01, 0.02);
    const auto knots =
        oracle_clamped_knots(int(square_waypoints.size()), degree);

    // Dense polyline from the independent evaluator.
    const int M = 60000;
    std::vector<Vec3> poly;
    poly.reserve(size_t(M) + 2);
    double oracle_len = 0.0;
    for (int j = 0; j <= M; ++j) {
      const double u = std::min(double(j) / double(M), 1.0 - 1e-12);
      poly.push_back(oracle_curve(square_waypoints, knots, degree, u));
      if (j > 0) oracle_len += (poly[size_t(j)] - poly[size_t(j) - 1]).norm();
    }
    poly.push_back(square_waypoints.back());
    oracle_len += (poly[poly.size() - 1] - poly[poly.size() - 2]).norm();

    CHECK(traj.arc_length == doctest::Approx(oracle_len).epsilon(1e-6));

    // Every 20th reference sample must sit on the oracle polyline.
    for (size_t k = 0; k < traj.samples.size(); k += 20) {
      const Vec3 p = traj.samples[k].position;
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : poly) best = std::min(best, (p - q).norm());
      CHECK(best < 4e-6);
    }
  }

  TEST_CASE("heading interpolation between waypoints") {
    const std::vector<Vec3> w = {Vec3::Zero(), Vec3(0.1, 0, 0)};
    const std::vector<Vec3> h = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
    const auto traj = world::bspline_trajectory(w, 1, 0.02, 0.05, h);
    CHECK((traj.at(0.0).heading - Vec3::UnitX()).norm() < 1e-12);
    CHECK((traj.at(traj.duration).heading - Vec3::UnitY()).norm() < 1e-12);
    const Vec3 mid = traj.at(0.5 * traj.duration).heading;
    CHECK((mid - Vec3(std::sqrt(0.5), std::sqrt(0.5), 0)).norm() < 1e-9);
    CHECK(mid.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("tangent heading without explicit headings") {
    const auto traj = world::bspline_trajectory(square_waypoints, 3, 0.01, 0.02);
    for (size_t k = 0; k < traj.samples.size(); k += 50)
      CHECK(traj.samples[k].heading.norm() ==
            doctest::Approx(1.0).epsilon(1e-12));
    // at the clamped start the tangent points at the second control point
    const Vec3 d0 = (square_waypoints[1] - square_waypoints[0]).normalized();
    CHECK((traj.at(0.0).heading - d0).norm() < 1e-12);
  }

  TEST_CASE("input validation") {
    const std::vector<Vec3> two = {Vec3::Zero(), Vec3(0.1, 0, 0)};
    CHECK(contains(thrown_message([&] {
                     world::bspline_trajectory({Vec3::Zero()}, 1, 0.01, 0.01);
                   }),
                   "at least 2 waypoints"));
    CHECK(contains(thrown_message([&] {
                     world::bspline_trajectory(two, 3, 0.01, 0.01);
                   }),
                   "degree 3 needs at least 4 waypoints"));
    CHECK(contains(thrown_message([&] {
                     world::bspline_trajectory(two, 1, 0.0, 0.01);
                   }),
                   "speed"));
    CHECK(contains(thrown_message([&] {
                     world::bspline_trajectory(two, 1, 0.01, -1.0);
                   }),
                   "dt"));
    const std::vector<Vec3> dup = {Vec3::Zero(), Vec3(0.1, 0, 0),
                                   Vec3(0.1, 0, 0), Vec3(0.2, 0, 0)};
    CHECK(contains(thrown_message([&] {
                     world::bspline_trajectory(dup, 1, 0.01, 0.01);
                   }),
                   "waypoints 1 and 2 coincide"));
    CHECK(contains(thrown_message([&] {
                     world::bspline_trajectory(two, 1, 0.01, 0.01,
                                               {Vec3::UnitX()});
                   }),
                   "headings must match waypoints"));
    CHECK(contains(thrown_message([&] {
                     world::bspline_trajectory(
                         two, 1, 0.01, 0.01,
                         {Vec3::UnitX(), Vec3::Zero()});
                   }),
                   "headings must be nonzero"));
  }

  TEST_CASE("centerline loading") {
    const fs::path ok = tmp_dir() / "centerline_ok.txt";
    write_file(ok,
               "# aortic arch extract\n"
               "0.1 0.2 0.3\n"
               "\n"
               "0.4 0.5 0.6   # inline note\n");
    const auto pts = world::load_centerline(ok.string());
    REQUIRE(pts.size() == 2);
    CHECK(pts[0] == Vec3(0.1, 0.2, 0.3));
    CHECK(pts[1] == Vec3(0.4, 0.5, 0.6));

    const fs::path bad = tmp_dir() / "centerline_bad.txt";
    write_file(bad, "0.0 0.0 0.0\n0.1 0.2\n");
    CHECK(contains(
        thrown_message([&] { world::load_centerline(bad.string()); }),
        "line 2"));

    const fs::path trail = tmp_dir() / "centerline_trail.txt";
    write_file(trail, "1 2 3 oops\n");
    const std::string msg =
        thrown_message([&] { world::load_centerline(trail.string()); });
    CHECK(contains(msg, "line 1"));
    CHECK(contains(msg, "oops"));

    CHECK(contains(
        thrown_message([&] { world::load_centerline("/nonexistent/c.txt"); }),
        "cannot open"));
  }
}

TEST_SUITE("scenario") {
  TEST_CASE("fixture loads, defaults filled, files resolved") {
    const auto s =
        world::load_scenario(data_dir() + "/scenario_capsule.json");
    CHECK(s.name == "capsule-square-fixture");
    CHECK(s.dt == 0.02);
    CHECK(s.duration == 2.0);
    CHECK(s.seed == 7);
    CHECK(s.substeps == 10);  // default
    CHECK(s.gravity == Vec3(0, 0, -9.81));

    REQUIRE(s.environment.present);
    CHECK(fs::path(s.environment.mesh_stl).is_absolute());
    CHECK(s.environment.mesh.triangles.size() == 12);
    CHECK(s.environment.mesh.friction == 0.4);
    const auto [lo, hi] = s.environment.mesh.bounds();
    CHECK((lo - Vec3(-0.05, -0.05, -0.105)).norm() < 1e-12);
    CHECK((hi - Vec3(0.05, 0.05, -0.005)).norm() < 1e-12);

    REQUIRE(s.robots.size() == 1);
    const auto& r = s.robots[0];
    REQUIRE(r.is_capsule());
    CHECK(r.capsule().mass == 0.005);
    CHECK(r.capsule().magnet_moment == 0.13);
    CHECK(r.capsule().rotational_damping == 1e-6);  // default
    REQUIRE(r.trajectory.has_value());
    CHECK(r.trajectory->speed == 0.01);
    CHECK(r.trajectory->samples.size() > 100);

    REQUIRE(s.sources.size() == 5);
    CHECK(s.sources[0].type == "helmholtz");
    CHECK(s.sources[0].gain == 8.9e-4);
    CHECK(s.sources[4].type == "maxwell");
    CHECK(s.current_limit == 20.0);

    REQUIRE(s.sensors.size() == 4);
    CHECK(s.sensors[1].noise_sigma == Vec3::Constant(1.3e-8));

    CHECK(s.controller.mode == "capsule-pose");
    CHECK(s.controller.field_magnitude == 0.004);
    CHECK(s.controller.position_gains.kp == Vec3::Constant(2.0));
    CHECK(s.controller.position_gains.integral_clamp == 0.02);
    CHECK(s.controller.orientation_gains.kp == Vec3::Constant(1.0));
    CHECK(s.controller.allocation_damping == 1e-4);

    CHECK(s.estimator.type == "ekf");
    CHECK(s.estimator.accel_sigma == Vec3::Constant(1.0));

    const auto sources = world::build_sources(s);
    REQUIRE(sources.size() == 5);
    CHECK(std::holds_alternative<field::HelmholtzPair>(sources[0]));
    CHECK(std::holds_alternative<field::MaxwellPair>(sources[3]));
    const auto specs = world::sensor_specs(s);
    REQUIRE(specs.size() == 4);
    CHECK(specs[0].rotation.coeffs() == Quat::Identity().coeffs());
  }

  TEST_CASE("echo round-trips to the byte") {
    const auto s1 =
        world::load_scenario(data_dir() + "/scenario_capsule.json");
    const std::string echo1 = world::scenario_echo(s1);

    const fs::path echoed = tmp_dir() / "echoed_scenario.json";
    write_file(echoed, echo1);
    const auto s2 = world::load_scenario(echoed.string());
    const std::string echo2 = world::scenario_echo(s2);
    CHECK(echo1 == echo2);

    // The echo parses and carries the resolved defaults explicitly.
    const auto j = nlohmann::json::parse(echo1);
    CHECK(j["physics_substeps"] == 10);
    CHECK(j["environment"]["rigid_approximation"] == true);
    CHECK(j["estimator"]["initial_position_sigma_m"] == 0.01);
    CHECK(fs::path(j["environment"]["mesh_stl"].get<std::string>())
              .is_absolute());
  }

  TEST_CASE("every problem is collected, with paths") {
    const fs::path bad = tmp_dir() / "broken_scenario.json";
    write_file(bad, R"({
      "name": "broken",
      "dt_s": 0.02,
      "robots": [
        {"type": "capsule",
         "capsule": {"mass_kg": -1, "inertia_kg_m2": 1e-7, "length_m": 0.02,
                     "diameter_m": 0.01, "magnet_moment_A_m2": 0.1,
                     "magnetic_axis": [1, 0, 0]},
         "trajectory": {"speed_m_s": 0.01, "degree": 5,
                        "waypoints_m": [[0, 0, 0], [0.1, 0, 0]]}}
      ],
      "actuators": {"sources": [{"type": "banana"}]},
      "controller": {"mode": "warp-drive", "field_magnitude_T": 0.004},
      "estimator": {"type": "ekf"}
    })");

    try {
      world::load_scenario(bad.string());
      FAIL("expected ScenarioValidationError");
    } catch (const world::ScenarioValidationError& e) {
      const auto& p = e.problems();
      REQUIRE(p.size() >= 6);
      auto any = [&](const std::string& needle) {
        for (const auto& msg : p)
          if (contains(msg, needle)) return true;
        return false;
      };
      CHECK(any("missing required key 'duration_s'"));
      CHECK(any("robots[0].capsule.mass_kg"));
      CHECK(any("unknown key 'magnetic_axis'"));
      CHECK(any("degree 5 needs at least 6 waypoints"));
      CHECK(any("unknown source type 'banana'"));
      CHECK(any("unknown mode 'warp-drive'"));
      CHECK(any("at least one sensor"));
      CHECK(contains(e.what(), "scenario validation failed"));
    }
  }

  TEST_CASE("missing referenced files are reported in place") {
    const fs::path p = tmp_dir() / "missing_mesh.json";
    write_file(p, R"({
      "dt_s": 0.02, "duration_s": 1.0,
      "environment": {"mesh_stl": "definitely_not_here.stl"},
      "robots": [{"type": "capsule",
        "capsule": {"mass_kg": 0.005, "inertia_kg_m2": 1e-7, "length_m": 0.02,
                    "diameter_m": 0.01, "magnet_moment_A_m2": 0.1},
        "trajectory": {"speed_m_s": 0.01, "degree": 1,
                       "waypoints_m": [[0, 0, 0], [0.1, 0, 0]]}}],
      "actuators": {"sources": [{"type": "helmholtz", "axis": [0, 0, 1],
                                 "field_gain_T_A": 1e-3, "radius_m": 0.2}]},
      "controller": {"mode": "capsule-pose", "field_magnitude_T": 0.004},
      "command_log": "also_missing.log"
    })");
    try {
      world::load_scenario(p.string());
      FAIL("expected ScenarioValidationError");
    } catch (const world::ScenarioValidationError& e) {
      auto any = [&](const std::string& needle) {
        for (const auto& msg : e.problems())
          if (contains(msg, needle)) return true;
        return false;
      };
      CHECK(any("definitely_not_here.stl"));
      CHECK(any("environment.mesh_stl"));
      CHECK(any("command_log"));
      CHECK(any("also_missing.log"));
    }
  }

  TEST_CASE("control rate must match the tick") {
    const fs::path p = tmp_dir() / "rate_mismatch.json";
    write_file(p, R"({
      "dt_s": 0.02, "duration_s": 1.0,
      "robots": [{"type": "capsule",
        "capsule": {"mass_kg": 0.005, "inertia_kg_m2": 1e-7, "length_m": 0.02,
                    "diameter_m": 0.01, "magnet_moment_A_m2": 0.1},
        "trajectory": {"speed_m_s": 0.01, "degree": 1,
                       "waypoints_m": [[0, 0, 0], [0.1, 0, 0]]}}],
      "actuators": {"sources": [{"type": "helmholtz", "axis": [0, 0, 1],
                                 "field_gain_T_A": 1e-3, "radius_m": 0.2}]},
      "controller": {"mode": "capsule-pose", "rate_hz": 30,
                     "field_magnitude_T": 0.004}
    })");
    const std::string msg =
        thrown_message([&] { world::load_scenario(p.string()); });
    CHECK(contains(msg, "rate_hz"));
    CHECK(contains(msg, "inconsistent with dt_s"));
  }

  TEST_CASE("continuum scenario with a relative centerline") {
    const fs::path dir = tmp_dir() / "continuum_case";
    fs::create_directories(dir);
    write_file(dir / "centerline.txt",
               "0 0 0\n0.01 0 0.002\n0.02 0 0.006\n0.03 0 0.012\n");
    write_file(dir / "scn.json", R"({
      "dt_s": 0.005, "duration_s": 1.0,
      "robots": [{"type": "continuum",
        "continuum": {"youngs_modulus_Pa": 3e9, "outer_diameter_m": 0.002,
                      "inner_diameter_m": 0.001, "total_length_m": 0.2,
                      "inserted_length_m": 0.05, "tip_moment_A_m2": 0.05,
                      "advance_speed_m_s": 0.035},
        "trajectory": {"centerline_file": "centerline.txt", "degree": 2,
                       "speed_m_s": 0.035}}],
      "actuators": {"sources": [{"type": "dipole_magnet",
                                 "position_m": [0, 0, 0.25],
                                 "moment_A_m2": [0, 0, 700]}]},
      "controller": {"mode": "continuum-field", "rate_hz": 200,
                     "field_magnitude_T": 0.0024}
    })");
    const auto s = world::load_scenario((dir / "scn.json").string());
    REQUIRE(s.robots.size() == 1);
    CHECK(!s.robots[0].is_capsule());
    CHECK(s.robots[0].continuum().advance_speed == 0.035);
    CHECK(fs::path(s.robots[0].centerline_file).is_absolute());
    REQUIRE(s.robots[0].trajectory.has_value());
    CHECK(s.robots[0].trajectory->waypoints.size() == 4);
    CHECK(s.sources[0].moment == Vec3(0, 0, 700));

    // echo keeps the centerline reference, not inlined waypoints
    const auto j = nlohmann::json::parse(world::scenario_echo(s));
    CHECK(j["robots"][0]["trajectory"].contains("centerline_file"));
    CHECK(!j["robots"][0]["trajectory"].contains("waypoints_m"));
  }

  TEST_CASE("command log enables trajectory-free robots") {
    const fs::path dir = tmp_dir() / "teleop_case";
    fs::create_directories(dir);
    write_file(dir / "cmd.log", "# magnav-commands v1 capsule-pose\n");
    write_file(dir / "scn.json", R"({
      "dt_s": 0.02, "duration_s": 1.0,
      "robots": [{"type": "capsule",
        "capsule": {"mass_kg": 0.005, "inertia_kg_m2": 1e-7, "length_m": 0.02,
                    "diameter_m": 0.01, "magnet_moment_A_m2": 0.1}}],
      "actuators": {"sources": [{"type": "helmholtz", "axis": [0, 0, 1],
                                 "field_gain_T_A": 1e-3, "radius_m": 0.2}]},
      "controller": {"mode": "capsule-pose", "field_magnitude_T": 0},
      "command_log": "cmd.log"
    })");
    const auto s = world::load_scenario((dir / "scn.json").string());
    CHECK(!s.robots[0].trajectory.has_value());
    CHECK(fs::path(s.command_log).is_absolute());
  }

  TEST_CASE("mode and robot-count cross checks") {
    const fs::path p = tmp_dir() / "cross_checks.json";
    write_file(p, R"({
      "dt_s": 0.02, "duration_s": 1.0,
      "robots": [
        {"type": "capsule",
         "capsule": {"mass_kg": 0.005, "inertia_kg_m2": 1e-7, "length_m": 0.02,
                     "diameter_m": 0.01, "magnet_moment_A_m2": 0.1},
         "trajectory": {"speed_m_s": 0.01, "degree": 1,
                        "waypoints_m": [[0, 0, 0], [0.1, 0, 0]]}},
        {"type": "capsule",
         "capsule": {"mass_kg": 0.005, "inertia_kg_m2": 1e-7, "length_m": 0.02,
                     "diameter_m": 0.01, "magnet_moment_A_m2": 0.1},
         "trajectory": {"speed_m_s": 0.01, "degree": 1,
                        "waypoints_m": [[0, 0, 0], [0.1, 0, 0]]}}
      ],
      "actuators": {"sources": [{"type": "helmholtz", "axis": [0, 0, 1],
                                 "field_gain_T_A": 1e-3, "radius_m": 0.2}]},
      "sensors": [{"position_m": [0, 0, -0.05]}],
      "controller": {"mode": "continuum-field", "field_magnitude_T": 0.004},
      "estimator": {"type": "lm"}
    })");
    try {
      world::load_scenario(p.string());
      FAIL("expected ScenarioValidationError");
    } catch (const world::ScenarioValidationError& e) {
      auto any = [&](const std::string& needle) {
        for (const auto& msg : e.problems())
          if (contains(msg, needle)) return true;
        return false;
      };
      CHECK(any("exactly one continuum robot"));
      CHECK(any("exactly one robot"));
    }
  }
}
