#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sopose/geometry.hpp"
#include "sopose/layers.hpp"

namespace sopose {

// All P3P solutions for three unit bearings and their object points.
std::vector<RigidPose> p3p(const std::array<Vec3, 3>& bearings,
                           const std::array<Vec3, 3>& points);

// Least-squares reprojection refinement over an SO(3) x R^3 increment.
RigidPose refine_reprojection(const RigidPose& init, std::span<const Vec3> points,
                              std::span<const Vec2> pixels, const CameraIntrinsics& K,
                              int max_iters = 50);

struct PnpOptions {
  double inlier_threshold = 2.0;  // pixels
  double confidence = 0.99;
  int max_iterations = 1000;
};

struct PnpResult {
  RigidPose pose;
  size_t inliers = 0;
  size_t correspondences = 0;
  int iterations = 0;
  bool planar = false;  // all object points coplanar
};

PnpResult pnp_ransac(const TwoLayerMaps& maps, const CameraIntrinsics& K,
                     const TriangleMesh& mesh, std::uint64_t seed,
                     const PnpOptions& opts = {});

}  // namespace sopose
