#include "sopose/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace sopose {

TriangleMesh make_box(const Vec3& size, const Vec3& center) {
  std::vector<Vec3> v;
  v.reserve(8);
  for (int i = 0; i < 8; ++i) {
    const Vec3 corner((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5,
                      (i & 4) ? 0.5 : -0.5);
    v.push_back(center + corner.cwiseProduct(size));
  }
  std::vector<std::array<int, 3>> f = {
      {0, 2, 1}, {1, 2, 3},  // z-
      {4, 5, 6}, {5, 7, 6},  // z+
      {0, 1, 4}, {1, 5, 4},  // y-
      {2, 6, 3}, {3, 6, 7},  // y+
      {0, 4, 2}, {2, 4, 6},  // x-
      {1, 3, 5}, {3, 7, 5},  // x+
  };
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh make_icosphere(double radius, int subdivisions) {
  return make_ellipsoid(Vec3::Constant(radius), subdivisions);
}

TriangleMesh make_ellipsoid(const Vec3& radii, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
  };
  for (Vec3& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
      {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
      {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
  };
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int ab = mid(tri[0], tri[1]);
      const int bc = mid(tri[1], tri[2]);
      const int ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (Vec3& p : v) p = p.cwiseProduct(radii);
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh make_cylinder(double radius, double height, int segments) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;
  const double h = 0.5 * height;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * M_PI * i / segments;
    v.emplace_back(radius * std::cos(a), radius * std::sin(a), -h);
    v.emplace_back(radius * std::cos(a), radius * std::sin(a), h);
  }
  const int bottom = static_cast<int>(v.size());
  v.emplace_back(0, 0, -h);
  const int top = bottom + 1;
  v.emplace_back(0, 0, h);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    f.push_back({b0, b1, t0});
    f.push_back({t0, b1, t1});
    f.push_back({bottom, b1, b0});
    f.push_back({top, t0, t1});
  }
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> f;
  for (const TriangleMesh& m : parts) {
    const int base = static_cast<int>(v.size());
    v.insert(v.end(), m.vertices.begin(), m.vertices.end());
    for (const auto& tri : m.faces)
      f.push_back({tri[0] + base, tri[1] + base, tri[2] + base});
  }
  return make_mesh(std::move(v), std::move(f));
}

TriangleMesh make_l_shape(double size) {
  const double s = size;
  const TriangleMesh base = make_box(Vec3(s, 0.3 * s, 0.3 * s), Vec3::Zero());
  const TriangleMesh arm =
      make_box(Vec3(0.3 * s, 0.7 * s, 0.3 * s), Vec3(0.35 * s, 0.5 * s, 0.0));
  return merge_meshes({base, arm});
}

TriangleMesh translate_mesh(const TriangleMesh& mesh, const Vec3& offset) {
  std::vector<Vec3> v = mesh.vertices;
  for (Vec3& p : v) p += offset;
  return make_mesh(std::move(v), mesh.faces);
}

bool is_builtin_mesh_name(const std::string& name) {
  return name.rfind("builtin:", 0) == 0;
}

TriangleMesh builtin_mesh(const std::string& name) {
  const std::string key = is_builtin_mesh_name(name) ? name.substr(8) : name;
  if (key == "cube") return make_box(Vec3::Constant(0.1));
  if (key == "box") return make_box(Vec3(0.12, 0.08, 0.05));
  if (key == "sphere") return make_icosphere(0.05, 3);
  if (key == "ellipsoid") return make_ellipsoid(Vec3(0.06, 0.04, 0.03), 3);
  if (key == "cylinder") return make_cylinder(0.03, 0.1, 32);
  if (key == "lshape") return make_l_shape(0.1);
  throw Error(ErrorKind::kUsage, "unknown builtin mesh '" + name + "'");
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, size_t count,
                                 std::uint64_t seed) {
  if (mesh.faces.empty())
    throw Error(ErrorKind::kInvalidMesh, "surface sampling needs faces");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    total += 0.5 * (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
    cumulative.push_back(total);
  }
  if (!(total > 0.0))
    throw Error(ErrorKind::kInvalidMesh, "mesh has zero surface area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const double pick = uni(rng) * total;
    size_t idx = static_cast<size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
        cumulative.begin());
    idx = std::min(idx, mesh.faces.size() - 1);
    const auto& f = mesh.faces[idx];
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    out.push_back((1.0 - r1) * mesh.vertices[f[0]] +
                  r1 * (1.0 - r2) * mesh.vertices[f[1]] +
                  r1 * r2 * mesh.vertices[f[2]]);
  }
  return out;
}

}  // namespace sopose
