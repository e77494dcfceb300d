#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "sopose/layers.hpp"
#include "sopose/primitives.hpp"
#include "sopose/study.hpp"

namespace sopose::testing {

struct Scene {
  std::string mesh_name;
  TriangleMesh mesh;
  RigidPose pose;
  CameraIntrinsics K;
  RenderConfig cfg;
  TwoLayerMaps maps;
};

inline const std::vector<std::string>& scene_mesh_names() {
  static const std::vector<std::string> names = {"builtin:cube", "builtin:box",
                                                 "builtin:cylinder", "builtin:lshape",
                                                 "builtin:ellipsoid", "builtin:sphere"};
  return names;
}

inline const TriangleMesh& cached_mesh(const std::string& name) {
  static std::map<std::string, TriangleMesh> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, builtin_mesh(name)).first;
  return it->second;
}

// Random mesh, intrinsics and pose with at least `min_mask` visible pixels.
inline Scene random_scene(std::mt19937_64& rng, int res = 64, size_t min_mask = 40) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const auto& names = scene_mesh_names();
  Scene s;
  s.mesh_name = names[rng() % names.size()];
  s.mesh = cached_mesh(s.mesh_name);
  s.cfg.width = res;
  s.cfg.height = res;
  const double scale = res / 64.0;
  const double f = (100.0 + 40.0 * uni(rng)) * scale;
  s.K = CameraIntrinsics(f, f * (0.95 + 0.1 * uni(rng)), (30.0 + 4.0 * uni(rng)) * scale,
                         (30.0 + 4.0 * uni(rng)) * scale);
  for (;;) {
    s.pose = sample_scene_pose(s.mesh, s.K, s.cfg, rng);
    s.maps = generate_maps(s.mesh, s.pose, s.K, s.cfg);
    if (s.maps.mask_count() >= min_mask) break;
  }
  return s;
}

}  // namespace sopose::testing
