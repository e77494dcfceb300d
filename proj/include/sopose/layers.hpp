#pragma once

#include <array>
#include <optional>
#include <vector>

#include "sopose/geometry.hpp"

namespace sopose {

// Coordinate-plane axis; plane k is the object plane with normal e_k
// (x -> o-yz, y -> o-xz, z -> o-xy).
enum class Axis : int { kX = 0, kY = 1, kZ = 2 };

inline constexpr double kParallelEpsilon = 1e-9;
inline constexpr double kOmegaSlack = 1e-7;  // fraction of the diameter

// Object-frame coordinate indices kept for each plane (the suppressed one is 0).
inline constexpr std::array<std::array<int, 2>, 3> kPlaneFreeAxes = {
    {{1, 2}, {0, 2}, {0, 1}}};

struct RenderConfig {
  int width = 64;
  int height = 64;
  double near = 0.01;
  double far = 100.0;
  double omega_margin = 1.0;

  void validate() const;
};

struct LayerPixel {
  bool mask = false;
  double depth = 0.0;
  Vec3 p0 = Vec3::Zero();
  std::array<Vec2, 3> q0 = {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  std::array<bool, 3> q_valid = {false, false, false};
};

// Two-layer maps. By convention p0 and q0 hold diameter-normalized object
// coordinates; denormalize_maps() produces metric copies.
struct TwoLayerMaps {
  int width = 0;
  int height = 0;
  std::vector<LayerPixel> pixels;

  TwoLayerMaps() = default;
  TwoLayerMaps(int w, int h);

  LayerPixel& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  const LayerPixel& at(int x, int y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  // Pixel center the sample was generated from.
  Vec2 center(size_t index) const {
    return Vec2(static_cast<double>(index % width) + 0.5,
                static_cast<double>(index / width) + 0.5);
  }
  size_t mask_count() const;
  size_t q_valid_count() const;
};

// Lift the two stored in-plane coordinates back to a 3-vector.
Vec3 lift_plane_point(const Vec2& q, int axis);
Vec2 drop_plane_point(const Vec3& q, int axis);

struct RayHit {
  double range = 0.0;  // along the unit ray
  Vec3 point_cam = Vec3::Zero();
  int triangle = -1;
};

// Nearest triangle hit along the pixel's viewing ray.
std::optional<RayHit> cast_ray(const TriangleMesh& mesh, const RigidPose& pose,
                               const CameraIntrinsics& K, const Vec2& pixel);

struct VisibleLayer {
  int width = 0;
  int height = 0;
  std::vector<bool> mask;
  std::vector<double> depth;
  std::vector<Vec3> p0;  // normalized
};

VisibleLayer rasterize_visible(const TriangleMesh& mesh, const RigidPose& pose,
                               const CameraIntrinsics& K, const RenderConfig& cfg);

// Camera-frame intersection of the pixel ray with the object coordinate plane
// of `axis`; empty when the ray is parallel to the plane.
std::optional<Vec3> intersect_coordinate_plane(const RigidPose& pose,
                                               const CameraIntrinsics& K,
                                               const Vec2& pixel, Axis axis);

// Fills q0 / q_valid for every masked pixel of `maps`.
void gen_self_occlusion(const RigidPose& pose, const CameraIntrinsics& K,
                        const TriangleMesh& mesh, const RenderConfig& cfg,
                        TwoLayerMaps& maps);

// rasterize_visible followed by gen_self_occlusion.
TwoLayerMaps generate_maps(const TriangleMesh& mesh, const RigidPose& pose,
                           const CameraIntrinsics& K, const RenderConfig& cfg);

TwoLayerMaps normalize_maps(const TwoLayerMaps& maps, double diameter);
TwoLayerMaps denormalize_maps(const TwoLayerMaps& maps, double diameter);

}  // namespace sopose
