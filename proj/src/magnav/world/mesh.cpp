#include "magnav/world/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace magnav::world {

namespace {

// Closest point on triangle abc to p, via the Voronoi-region walk
// (Ericson, Real-Time Collision Detection, 5.1.5).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                         const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double box_distance_sq(const Vec3& lo, const Vec3& hi, const Vec3& p) {
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double e = std::max({lo[k] - p[k], 0.0, p[k] - hi[k]});
    d += e * e;
  }
  return d;
}

constexpr int kLeafSize = 4;

}  // namespace

void EnvironmentMesh::build() {
  nodes.clear();
  order.resize(triangles.size());
  std::iota(order.begin(), order.end(), 0);
  if (triangles.empty()) return;

  std::vector<Vec3> centroid(triangles.size());
  for (size_t i = 0; i < triangles.size(); ++i) {
    const auto& t = triangles[i];
    centroid[i] =
        (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
  }

  struct Job {
    int node;
    int begin, end;
  };
  nodes.emplace_back();
  std::vector<Job> stack{{0, 0, int(order.size())}};
  while (!stack.empty()) {
    const Job job = stack.back();
    stack.pop_back();

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    Vec3 clo = lo, chi = hi;
    for (int i = job.begin; i < job.end; ++i) {
      for (int v : triangles[order[i]]) {
        lo = lo.cwiseMin(vertices[v]);
        hi = hi.cwiseMax(vertices[v]);
      }
      clo = clo.cwiseMin(centroid[order[i]]);
      chi = chi.cwiseMax(centroid[order[i]]);
    }
    nodes[job.node].lo = lo;
    nodes[job.node].hi = hi;

    const int count = job.end - job.begin;
    int axis;
    (chi - clo).maxCoeff(&axis);
    if (count <= kLeafSize || chi[axis] - clo[axis] <= 0.0) {
      nodes[job.node].begin = job.begin;
      nodes[job.node].end = job.end;
      continue;
    }

    const int mid = job.begin + count / 2;
    std::nth_element(order.begin() + job.begin, order.begin() + mid,
                     order.begin() + job.end, [&](int ia, int ib) {
                       return centroid[ia][axis] < centroid[ib][axis];
                     });
    const int left = int(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    nodes[job.node].left = left;
    nodes[job.node].right = left + 1;
    stack.push_back({left, job.begin, mid});
    stack.push_back({left + 1, mid, job.end});
  }
}

std::pair<Vec3, Vec3> EnvironmentMesh::bounds() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

ClosestPointResult closest_point(const EnvironmentMesh& mesh,
                                 const Vec3& query) {
  if (mesh.triangles.empty())
    throw std::logic_error("mesh: closest_point on empty mesh");
  if (mesh.nodes.empty())
    throw std::logic_error("mesh: build() not called before closest_point");

  ClosestPointResult best;
  double best_sq = std::numeric_limits<double>::infinity();

  // Depth-first with near-child-first ordering and box-distance pruning.
  std::vector<int> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const auto& node = mesh.nodes[stack.back()];
    stack.pop_back();
    if (box_distance_sq(node.lo, node.hi, query) >= best_sq) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int tri = mesh.order[i];
        const auto& t = mesh.triangles[tri];
        const Vec3 cp = closest_on_triangle(query, mesh.vertices[t[0]],
                                            mesh.vertices[t[1]],
                                            mesh.vertices[t[2]]);
        const double d_sq = (query - cp).squaredNorm();
        if (d_sq < best_sq) {
          best_sq = d_sq;
          best.point = cp;
          best.triangle = tri;
        }
      }
      continue;
    }
    const double dl =
        box_distance_sq(mesh.nodes[node.left].lo, mesh.nodes[node.left].hi, query);
    const double dr = box_distance_sq(mesh.nodes[node.right].lo,
                                      mesh.nodes[node.right].hi, query);
    // Push the far child first so the near one is explored first.
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }

  best.distance = std::sqrt(best_sq);
  const auto& t = mesh.triangles[best.triangle];
  const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                     .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
  best.normal = n.normalized();
  return best;
}

namespace {

[[noreturn]] void stl_fail(size_t offset, const std::string& what) {
  throw std::runtime_error("stl parse error at byte " + std::to_string(offset) +
                           ": " + what);
}

float read_f32(const std::string& buf, size_t offset) {
  float f;
  std::memcpy(&f, buf.data() + offset, 4);
  return f;
}

uint32_t read_u32(const std::string& buf, size_t offset) {
  uint32_t u;
  std::memcpy(&u, buf.data() + offset, 4);
  return u;
}

void push_triangle(EnvironmentMesh& mesh, const Vec3& a, const Vec3& b,
                   const Vec3& c) {
  // Silently drop zero-area facets; they contribute nothing to contact.
  if ((b - a).cross(c - a).norm() <= 0.0) return;
  const int base = int(mesh.vertices.size());
  mesh.vertices.push_back(a);
  mesh.vertices.push_back(b);
  mesh.vertices.push_back(c);
  mesh.triangles.push_back({base, base + 1, base + 2});
}

void parse_binary_stl(const std::string& buf, EnvironmentMesh& mesh) {
  const uint32_t count = read_u32(buf, 80);
  size_t off = 84;
  for (uint32_t i = 0; i < count; ++i) {
    // 12 bytes facet normal (ignored; recomputed from the winding), then
    // three vertices, then a 2-byte attribute count.
    Vec3 v[3];
    for (int k = 0; k < 3; ++k) {
      const size_t at = off + 12 + 12 * size_t(k);
      v[k] = Vec3(read_f32(buf, at), read_f32(buf, at + 4),
                  read_f32(buf, at + 8));
      if (!v[k].allFinite())
        stl_fail(at, "non-finite vertex in facet " + std::to_string(i));
    }
    push_triangle(mesh, v[0], v[1], v[2]);
    off += 50;
  }
}

struct AsciiScanner {
  const std::string& buf;
  size_t pos = 0;

  void skip_space() {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos])))
      ++pos;
  }
  bool done() {
    skip_space();
    return pos >= buf.size();
  }
  // Returns the next whitespace-delimited token; offset_out is its position.
  std::string token(size_t* offset_out = nullptr) {
    skip_space();
    if (offset_out) *offset_out = pos;
    const size_t start = pos;
    while (pos < buf.size() &&
           !std::isspace(static_cast<unsigned char>(buf[pos])))
      ++pos;
    return buf.substr(start, pos - start);
  }
  void expect(const char* keyword) {
    size_t at;
    const std::string tok = token(&at);
    if (tok != keyword)
      stl_fail(at, "expected '" + std::string(keyword) + "', got '" +
                       (tok.empty() ? "<end of file>" : tok) + "'");
  }
  double number() {
    size_t at;
    const std::string tok = token(&at);
    try {
      size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      stl_fail(at, "expected a number, got '" +
                       (tok.empty() ? "<end of file>" : tok) + "'");
    }
  }
};

void parse_ascii_stl(const std::string& buf, EnvironmentMesh& mesh) {
  AsciiScanner sc{buf};
  sc.expect("solid");
  // Optional solid name: consume tokens until 'facet' or 'endsolid'.
  for (;;) {
    const size_t save = sc.pos;
    size_t at;
    const std::string tok = sc.token(&at);
    if (tok == "facet" || tok == "endsolid") {
      sc.pos = save;
      break;
    }
    if (tok.empty()) stl_fail(at, "unterminated solid: expected 'endsolid'");
  }
  for (;;) {
    size_t at;
    const size_t save = sc.pos;
    const std::string tok = sc.token(&at);
    if (tok == "endsolid") break;
    if (tok != "facet")
      stl_fail(at, "expected 'facet' or 'endsolid', got '" +
                       (tok.empty() ? "<end of file>" : tok) + "'");
    sc.pos = save;
    sc.expect("facet");
    sc.expect("normal");
    sc.number();
    sc.number();
    sc.number();
    sc.expect("outer");
    sc.expect("loop");
    Vec3 v[3];
    for (auto& vert : v) {
      sc.expect("vertex");
      vert.x() = sc.number();
      vert.y() = sc.number();
      vert.z() = sc.number();
    }
    sc.expect("endloop");
    sc.expect("endfacet");
    push_triangle(mesh, v[0], v[1], v[2]);
  }
}

}  // namespace

EnvironmentMesh load_mesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("mesh: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  EnvironmentMesh mesh;
  // Binary detection: the file is exactly the 84-byte prologue plus 50 bytes
  // per facet. ASCII files that coincidentally match are vanishingly rare.
  bool binary = false;
  if (buf.size() >= 84) {
    const uint32_t count = read_u32(buf, 80);
    if (buf.size() == 84 + 50 * size_t(count)) binary = true;
  }

  if (binary) {
    parse_binary_stl(buf, mesh);
  } else {
    AsciiScanner probe{buf};
    size_t at;
    const std::string head = probe.token(&at);
    if (head == "solid") {
      parse_ascii_stl(buf, mesh);
    } else if (buf.size() >= 84) {
      const uint32_t count = read_u32(buf, 80);
      const size_t expect = 84 + 50 * size_t(count);
      stl_fail(std::min(buf.size(), expect),
               "truncated binary file: header claims " + std::to_string(count) +
                   " facets (" + std::to_string(expect) + " bytes), file has " +
                   std::to_string(buf.size()));
    } else {
      stl_fail(at, "not an stl file (no binary prologue, no 'solid' keyword)");
    }
  }

  if (mesh.triangles.empty())
    throw std::runtime_error("mesh: " + path + " contains no usable facets");
  mesh.build();
  return mesh;
}

}  // namespace magnav::world
