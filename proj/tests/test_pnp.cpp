#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "sopose/metrics.hpp"
#include "sopose/pnp.hpp"
#include "sopose/solver.hpp"
#include "sopose/study.hpp"
#include "support.hpp"

using namespace sopose;
using sopose::testing::random_scene;
using sopose::testing::Scene;

TEST_CASE("p3p recovers an exact pose among its solutions") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  int found = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const RigidPose gt(random_rotation(rng), Vec3(0.1 * n(rng), 0.1 * n(rng), 1.0 + std::abs(n(rng))));
    std::array<Vec3, 3> pts, bearings;
    for (int i = 0; i < 3; ++i) {
      pts[i] = 0.1 * Vec3(n(rng), n(rng), n(rng));
      bearings[i] = gt.transform(pts[i]).normalized();
    }
    double best = 1e9;
    for (const RigidPose& p : p3p(bearings, pts)) {
      CHECK(is_rotation(p.R, 1e-6));
      best = std::min(best, rotation_angle(p.R, gt.R) + (p.t - gt.t).norm());
    }
    found += best < 1e-6 ? 1 : 0;
  }
  CHECK(found >= 198);  // near-degenerate triples may lose precision
}

TEST_CASE("refine_reprojection converges from a perturbed pose") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  const CameraIntrinsics K(120, 120, 32, 32);
  const RigidPose gt(random_rotation(rng), Vec3(0.01, -0.02, 0.5));
  std::vector<Vec3> pts;
  std::vector<Vec2> px;
  for (int i = 0; i < 50; ++i) {
    pts.push_back(0.05 * Vec3(n(rng), n(rng), n(rng)));
    px.push_back(project(K, gt.transform(pts.back())));
  }
  const RigidPose init(axis_angle(Vec3::UnitX(), 0.1) * gt.R, gt.t + Vec3(0.01, 0, 0.02));
  const RigidPose r = refine_reprojection(init, pts, px, K);
  CHECK(rotation_angle(r.R, gt.R) < 1e-9);
  CHECK((r.t - gt.t).norm() < 1e-9);
}

TEST_CASE("pnp ransac on noiseless maps") {
  std::mt19937_64 rng(11);
  for (int s = 0; s < 30; ++s) {
    const Scene sc = random_scene(rng);
    const PnpResult r = pnp_ransac(sc.maps, sc.K, sc.mesh, 1234);
    CHECK(rotation_error_deg(r.pose, sc.pose) < 0.1);
    CHECK(r.inliers == sc.maps.mask_count());
    CHECK(r.correspondences == sc.maps.mask_count());
  }
}

TEST_CASE("pnp ransac is deterministic under its seed") {
  std::mt19937_64 rng(13);
  const Scene sc = random_scene(rng);
  const TwoLayerMaps noisy = add_noise(sc.maps, NoiseSpec{0.02, 0, 0.1, 4});
  const PnpResult a = pnp_ransac(noisy, sc.K, sc.mesh, 77);
  const PnpResult b = pnp_ransac(noisy, sc.K, sc.mesh, 77);
  CHECK(a.pose.R == b.pose.R);
  CHECK(a.pose.t == b.pose.t);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("pnp ransac handles planar correspondences") {
  const TriangleMesh square = make_mesh(
      {Vec3(-0.05, -0.05, 0), Vec3(0.05, -0.05, 0), Vec3(0.05, 0.05, 0), Vec3(-0.05, 0.05, 0)},
      {{0, 1, 2}, {0, 2, 3}});
  const CameraIntrinsics K(120, 120, 32, 32);
  const RigidPose gt(axis_angle(Vec3(1, 0.5, 0).normalized(), 0.6), Vec3(0.01, 0, 0.4));
  const TwoLayerMaps maps = generate_maps(square, gt, K, {});
  REQUIRE(maps.mask_count() > 20);
  const PnpResult r = pnp_ransac(maps, K, square, 3);
  CHECK(r.planar);
  CHECK(is_rotation(r.pose.R));
  CHECK(rotation_error_deg(r.pose, gt) < 1.0);
}

TEST_CASE("too few correspondences") {
  const TriangleMesh cube = builtin_mesh("builtin:cube");
  TwoLayerMaps maps(4, 4);
  for (int i = 0; i < 5; ++i) maps.pixels[i].mask = true;
  try {
    pnp_ransac(maps, CameraIntrinsics(100, 100, 2, 2), cube, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNoSolution);
  }
}

TEST_CASE("zero-weight solver matches the pnp baseline") {
  std::mt19937_64 rng(17);
  SolverConfig cfg;
  cfg.use_weight_defaults = false;
  cfg.weights.lambda1 = cfg.weights.lambda2 = cfg.weights.lambda3 = 0.0;
  for (int s = 0; s < 8; ++s) {
    const Scene sc = random_scene(rng);
    const TwoLayerMaps corr_only = strip_self_occlusion(sc.maps);
    const RigidPose base = pnp_ransac(corr_only, sc.K, sc.mesh, 5).pose;
    const RigidPose lm = solve_lm(corr_only, sc.K, sc.mesh, cfg).pose;
    CHECK(rotation_angle(base.R, lm.R) < 1e-4);
    CHECK((base.t - lm.t).norm() < 1e-5);
  }
}
