#include "sopose/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sopose {

void RenderConfig::validate() const {
  if (width <= 0 || height <= 0 || width > 65535 || height > 65535)
    throw Error(ErrorKind::kUsage, "render resolution out of range");
  if (!(near > 0.0) || !(far > near))
    throw Error(ErrorKind::kUsage, "render clip planes must satisfy 0 < near < far");
  if (!(omega_margin >= 1.0))
    throw Error(ErrorKind::kUsage, "omega_margin must be >= 1");
}

TwoLayerMaps::TwoLayerMaps(int w, int h)
    : width(w), height(h), pixels(static_cast<size_t>(w) * h) {}

size_t TwoLayerMaps::mask_count() const {
  return static_cast<size_t>(std::count_if(
      pixels.begin(), pixels.end(), [](const LayerPixel& p) { return p.mask; }));
}

size_t TwoLayerMaps::q_valid_count() const {
  size_t n = 0;
  for (const LayerPixel& p : pixels)
    for (bool v : p.q_valid) n += v ? 1 : 0;
  return n;
}

Vec3 lift_plane_point(const Vec2& q, int axis) {
  Vec3 out = Vec3::Zero();
  out[kPlaneFreeAxes[axis][0]] = q[0];
  out[kPlaneFreeAxes[axis][1]] = q[1];
  return out;
}

Vec2 drop_plane_point(const Vec3& q, int axis) {
  return Vec2(q[kPlaneFreeAxes[axis][0]], q[kPlaneFreeAxes[axis][1]]);
}

namespace {

struct TriangleHit {
  double range;
  double u;
  double v;
};

// Moller-Trumbore; edges are inclusive so rays through shared edges hit.
std::optional<TriangleHit> intersect_triangle(const Vec3& dir, const Vec3& a,
                                              const Vec3& b, const Vec3& c) {
  constexpr double kEdge = 1e-12;
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  const double scale = e1.squaredNorm() + e2.squaredNorm();
  if (std::abs(det) <= 1e-14 * scale) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tvec = -a;  // ray origin is the camera center
  const double u = tvec.dot(pvec) * inv;
  if (u < -kEdge || u > 1.0 + kEdge) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv;
  if (v < -kEdge || u + v > 1.0 + kEdge) return std::nullopt;
  const double range = e2.dot(qvec) * inv;
  if (!(range > 0.0)) return std::nullopt;
  return TriangleHit{range, u, v};
}

struct CameraMesh {
  std::vector<Vec3> vertices;
};

CameraMesh to_camera(const TriangleMesh& mesh, const RigidPose& pose) {
  CameraMesh out;
  out.vertices.reserve(mesh.vertices.size());
  for (const Vec3& p : mesh.vertices) out.vertices.push_back(pose.transform(p));
  return out;
}

struct PixelRange {
  int x0, x1, y0, y1;  // inclusive
};

// Pixels whose centers may fall inside the projected triangle; the whole image
// when the triangle reaches behind the camera.
PixelRange candidate_pixels(const CameraIntrinsics& K, const Vec3& a,
                            const Vec3& b, const Vec3& c, int width, int height) {
  PixelRange all{0, width - 1, 0, height - 1};
  if (a.z() <= kDepthEpsilon || b.z() <= kDepthEpsilon || c.z() <= kDepthEpsilon)
    return all;
  double min_x = std::numeric_limits<double>::infinity();
  double max_x = -min_x, min_y = min_x, max_y = -min_x;
  for (const Vec3* p : {&a, &b, &c}) {
    const Vec2 q = project(K, *p);
    min_x = std::min(min_x, q.x());
    max_x = std::max(max_x, q.x());
    min_y = std::min(min_y, q.y());
    max_y = std::max(max_y, q.y());
  }
  // One pixel of slack covers rounding at the triangle boundary.
  auto clampi = [](double v, int lo, int hi) {
    if (v < lo) return lo;
    if (v > hi) return hi;
    return static_cast<int>(v);
  };
  PixelRange r;
  r.x0 = clampi(std::floor(min_x - 0.5) - 1.0, 0, width - 1);
  r.x1 = clampi(std::ceil(max_x - 0.5) + 1.0, -1, width - 1);
  r.y0 = clampi(std::floor(min_y - 0.5) - 1.0, 0, height - 1);
  r.y1 = clampi(std::ceil(max_y - 0.5) + 1.0, -1, height - 1);
  if (max_x < -1.0 || max_y < -1.0 || min_x > width + 1.0 || min_y > height + 1.0)
    r.x1 = r.x0 - 1;
  return r;
}

}  // namespace

std::optional<RayHit> cast_ray(const TriangleMesh& mesh, const RigidPose& pose,
                               const CameraIntrinsics& K, const Vec2& pixel) {
  const CameraMesh cam = to_camera(mesh, pose);
  const Vec3 dir = backproject_ray(K, pixel);
  std::optional<RayHit> best;
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    const auto hit = intersect_triangle(dir, cam.vertices[f[0]], cam.vertices[f[1]],
                                        cam.vertices[f[2]]);
    if (hit && (!best || hit->range < best->range)) {
      best = RayHit{hit->range, hit->range * dir, static_cast<int>(i)};
    }
  }
  return best;
}

VisibleLayer rasterize_visible(const TriangleMesh& mesh, const RigidPose& pose,
                               const CameraIntrinsics& K, const RenderConfig& cfg) {
  cfg.validate();
  if (mesh.vertices.empty())
    throw Error(ErrorKind::kInvalidMesh, "cannot render an empty mesh");
  if (!(mesh.diameter > 0.0))
    throw Error(ErrorKind::kInvalidMesh, "mesh diameter must be positive");

  const int w = cfg.width;
  const int h = cfg.height;
  const size_t n = static_cast<size_t>(w) * h;
  std::vector<Vec3> rays(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      rays[static_cast<size_t>(y) * w + x] = backproject_ray(K, Vec2(x + 0.5, y + 0.5));

  const CameraMesh cam = to_camera(mesh, pose);
  std::vector<double> best_range(n, std::numeric_limits<double>::infinity());
  std::vector<int> best_face(n, -1);
  std::vector<Vec2> best_bary(n, Vec2::Zero());

  for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    const Vec3& a = cam.vertices[f[0]];
    const Vec3& b = cam.vertices[f[1]];
    const Vec3& c = cam.vertices[f[2]];
    if (a.z() < cfg.near && b.z() < cfg.near && c.z() < cfg.near) continue;
    if (a.z() > cfg.far && b.z() > cfg.far && c.z() > cfg.far) continue;
    const PixelRange r = candidate_pixels(K, a, b, c, w, h);
    for (int y = r.y0; y <= r.y1; ++y) {
      for (int x = r.x0; x <= r.x1; ++x) {
        const size_t idx = static_cast<size_t>(y) * w + x;
        const auto hit = intersect_triangle(rays[idx], a, b, c);
        if (!hit || !(hit->range < best_range[idx])) continue;
        const double z = hit->range * rays[idx].z();
        if (z < cfg.near || z > cfg.far) continue;
        best_range[idx] = hit->range;
        best_face[idx] = static_cast<int>(fi);
        best_bary[idx] = Vec2(hit->u, hit->v);
      }
    }
  }

  VisibleLayer out;
  out.width = w;
  out.height = h;
  out.mask.assign(n, false);
  out.depth.assign(n, 0.0);
  out.p0.assign(n, Vec3::Zero());
  for (size_t idx = 0; idx < n; ++idx) {
    if (best_face[idx] < 0) continue;
    const auto& f = mesh.faces[best_face[idx]];
    const double u = best_bary[idx].x();
    const double v = best_bary[idx].y();
    const Vec3 p_obj = (1.0 - u - v) * mesh.vertices[f[0]] +
                       u * mesh.vertices[f[1]] + v * mesh.vertices[f[2]];
    out.mask[idx] = true;
    out.depth[idx] = best_range[idx] * rays[idx].z();
    out.p0[idx] = p_obj / mesh.diameter;
  }
  return out;
}

std::optional<Vec3> intersect_coordinate_plane(const RigidPose& pose,
                                               const CameraIntrinsics& K,
                                               const Vec2& pixel, Axis axis) {
  const Vec3 normal = pose.R.col(static_cast<int>(axis));
  const Vec3 ray = K.unproject(pixel);
  const double denom = normal.dot(ray);
  if (std::abs(denom) < kParallelEpsilon) return std::nullopt;
  return (normal.dot(pose.t) / denom) * ray;
}

void gen_self_occlusion(const RigidPose& pose, const CameraIntrinsics& K,
                        const TriangleMesh& mesh, const RenderConfig& cfg,
                        TwoLayerMaps& maps) {
  const double d = mesh.diameter;
  const double slack = kOmegaSlack * d;
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    LayerPixel& px = maps.pixels[idx];
    for (int k = 0; k < 3; ++k) {
      px.q_valid[k] = false;
      px.q0[k] = Vec2::Zero();
    }
    if (!px.mask) continue;
    const Vec2 rho = maps.center(idx);
    for (int k = 0; k < 3; ++k) {
      const auto q = intersect_coordinate_plane(pose, K, rho, static_cast<Axis>(k));
      if (!q || !(q->z() > kDepthEpsilon)) continue;
      const Vec2 in_plane = drop_plane_point(pose.inverse_transform(*q), k);
      if (!mesh.cuboid.contains(lift_plane_point(in_plane, k), cfg.omega_margin, slack))
        continue;
      px.q0[k] = in_plane / d;
      px.q_valid[k] = true;
    }
  }
}

TwoLayerMaps generate_maps(const TriangleMesh& mesh, const RigidPose& pose,
                           const CameraIntrinsics& K, const RenderConfig& cfg) {
  const VisibleLayer vis = rasterize_visible(mesh, pose, K, cfg);
  TwoLayerMaps maps(vis.width, vis.height);
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    LayerPixel& px = maps.pixels[idx];
    px.mask = vis.mask[idx];
    px.depth = vis.depth[idx];
    px.p0 = vis.p0[idx];
  }
  gen_self_occlusion(pose, K, mesh, cfg, maps);
  return maps;
}

namespace {

TwoLayerMaps scale_maps(const TwoLayerMaps& maps, double factor) {
  TwoLayerMaps out = maps;
  for (LayerPixel& px : out.pixels) {
    px.p0 *= factor;
    for (Vec2& q : px.q0) q *= factor;
  }
  return out;
}

}  // namespace

TwoLayerMaps normalize_maps(const TwoLayerMaps& maps, double diameter) {
  if (!(diameter > 0.0))
    throw Error(ErrorKind::kInvalidMesh, "diameter must be positive");
  return scale_maps(maps, 1.0 / diameter);
}

TwoLayerMaps denormalize_maps(const TwoLayerMaps& maps, double diameter) {
  if (!(diameter > 0.0))
    throw Error(ErrorKind::kInvalidMesh, "diameter must be positive");
  return scale_maps(maps, diameter);
}

}  // namespace sopose
