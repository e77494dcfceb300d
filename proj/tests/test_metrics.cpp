#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sopose/metrics.hpp"
#include "sopose/primitives.hpp"
#include "sopose/study.hpp"

using namespace sopose;

namespace {

std::vector<Vec3> cloud(std::mt19937_64& rng, size_t n) {
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<Vec3> out;
  for (size_t i = 0; i < n; ++i) out.emplace_back(g(rng), g(rng), g(rng));
  return out;
}

double brute_add_s(const RigidPose& est, const RigidPose& gt, const std::vector<Vec3>& pts) {
  double sum = 0;
  for (const Vec3& p : pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : pts) best = std::min(best, (est.transform(p) - gt.transform(q)).norm());
    sum += best;
  }
  return sum / static_cast<double>(pts.size());
}

// Rings of latitude with `per_ring` evenly spaced points each.
std::vector<Vec3> ring_sphere(double r, int rings, int per_ring) {
  std::vector<Vec3> out;
  for (int i = 0; i < rings; ++i) {
    const double th = M_PI * (i + 0.5) / rings;
    for (int j = 0; j < per_ring; ++j) {
      const double ph = 2.0 * M_PI * j / per_ring;
      out.emplace_back(r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph),
                       r * std::cos(th));
    }
  }
  return out;
}

RigidPose view(double z = 0.5) { return RigidPose(Mat3::Identity(), Vec3(0, 0, z)); }

}  // namespace

TEST_CASE("add and add_s against brute force") {
  std::mt19937_64 rng(3);
  const std::vector<Vec3> pts = cloud(rng, 500);
  for (int trial = 0; trial < 5; ++trial) {
    const RigidPose gt(random_rotation(rng), Vec3(0.01, 0.02, 0.6));
    const RigidPose est(axis_angle(Vec3(0, 1, 1).normalized(), 0.05 * (trial + 1)) * gt.R,
                        gt.t + Vec3(0.003, -0.001, 0.004));
    double s = 0;
    for (const Vec3& p : pts) s += (est.transform(p) - gt.transform(p)).norm();
    CHECK(std::abs(add(est, gt, pts) - s / 500.0) < 1e-12);
    CHECK(std::abs(add_s(est, gt, pts) - brute_add_s(est, gt, pts)) < 1e-12);
    CHECK(add_s(est, gt, pts) <= add(est, gt, pts) + 1e-15);
  }
}

TEST_CASE("pure translation") {
  std::mt19937_64 rng(4);
  const std::vector<Vec3> pts = cloud(rng, 200);
  const RigidPose gt(random_rotation(rng), Vec3(0, 0, 0.5));
  const RigidPose est(gt.R, gt.t + Vec3(0.01, 0, 0));
  CHECK(add(est, gt, pts) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(translation_error(est, gt) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(rotation_error_deg(est, gt) == 0.0);
}

TEST_CASE("add_s on a rotationally symmetric point set") {
  const std::vector<Vec3> pts = ring_sphere(0.05, 20, 25);
  const double d = 0.1;
  const RigidPose gt = view();
  const RigidPose est(axis_angle(Vec3::UnitZ(), 2.0 * M_PI * 3 / 25) * gt.R, gt.t);
  CHECK(add_s(est, gt, pts) < 1e-3 * d);
  CHECK(add(est, gt, pts) > 0.01 * d);
  SymmetrySet sym;
  sym.continuous_axes = {Vec3::UnitZ()};
  const RigidPose spun(axis_angle(Vec3::UnitZ(), 1.0) * gt.R, gt.t);
  // 360-step discretisation leaves at most half a degree of spin.
  CHECK(add_sym(spun, gt, pts, sym) < 0.05 * M_PI / 360.0);
}

TEST_CASE("model points") {
  const TriangleMesh cube = builtin_mesh("builtin:cube");
  CHECK(model_points(cube).size() == kModelPointCount);
  const TriangleMesh sphere = make_icosphere(0.05, 3);
  REQUIRE(sphere.vertices.size() >= kModelPointCount);
  CHECK(model_points(sphere).size() == sphere.vertices.size());
  CHECK(model_points(cube, 7) == model_points(cube, 7));
}

TEST_CASE("pass rate") {
  const std::vector<double> e = {0.001, 0.005, 0.02};
  CHECK(pass_rate_add(e, 0.1, 0.1) == doctest::Approx(2.0 / 3.0));
  CHECK(pass_rate_add(e, 0.1, 0.02) == doctest::Approx(1.0 / 3.0));
  CHECK(pass_rate_add(e, 1.0, 0.5) == 1.0);
  CHECK_THROWS_AS(pass_rate_add(std::vector<double>{}, 0.1, 0.1), Error);
  CHECK_THROWS_AS(pass_rate_add(e, 0.1, 0.0), Error);
}

TEST_CASE("deg cm") {
  const RigidPose gt = view();
  const RigidPose est(axis_angle(Vec3::UnitX(), 4.0 * M_PI / 180.0), gt.t + Vec3(0.04, 0, 0));
  CHECK(rotation_error_deg(est, gt) == doctest::Approx(4.0));
  CHECK(deg_cm(est, gt, 5, 5));
  CHECK_FALSE(deg_cm(est, gt, 2, 5));
  CHECK_FALSE(deg_cm(est, gt, 5, 2));
  CHECK_FALSE(deg_cm(est, gt, 4, 5));  // strict
}

TEST_CASE("auc") {
  CHECK(auc(std::vector<double>(10, 0.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(auc(std::vector<double>{0.05}) == doctest::Approx(0.5));
  CHECK(auc(std::vector<double>{0.5, 1.0}) == 0.0);
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> ex(30.0);
  std::vector<double> e(300);
  for (double& v : e) v = ex(rng);
  // Trapezoid integration of the accuracy curve.
  const int steps = 20000;
  double area = 0, prev = 0;
  for (int i = 0; i <= steps; ++i) {
    const double th = 0.1 * i / steps;
    const double acc = static_cast<double>(std::count_if(e.begin(), e.end(), [&](double v) {
                         return v <= th;
                       })) / e.size();
    if (i > 0) area += 0.5 * (acc + prev) * (0.1 / steps);
    prev = acc;
  }
  CHECK(std::abs(auc(e) - area / 0.1) < 1e-4);
  CHECK_THROWS_AS(auc(std::vector<double>{}), Error);
}

TEST_CASE("symmetry set expansion") {
  SymmetrySet s;
  CHECK(s.expand().size() == 1);
  s.continuous_axes = {Vec3::UnitZ()};
  CHECK(s.expand(360).size() == 360);
  s.discrete.push_back(axis_angle(Vec3::UnitX(), M_PI));
  CHECK(s.expand(360).size() == 720);
  for (const Mat3& R : s.expand(12)) CHECK(is_rotation(R));
  SymmetrySet bad;
  bad.discrete = {2.0 * Mat3::Identity()};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("vsd") {
  const TriangleMesh sphere = make_icosphere(0.05, 3);
  const CameraIntrinsics K(120, 120, 32, 32);
  const RenderConfig cfg;
  const RigidPose gt = view();
  VsdDiagnostics diag;
  CHECK(vsd(gt, gt, sphere, K, cfg, 0.01, bop::kVsdDelta, &diag) == 0.0);
  CHECK(diag.union_pixels == diag.overlap_pixels);
  CHECK(diag.union_pixels > 100);

  const double tau = 0.01;
  const RigidPose behind(Mat3::Identity(), gt.t + Vec3(0, 0, 2 * tau));
  CHECK(vsd(behind, gt, sphere, K, cfg, tau, bop::kVsdDelta) == 1.0);
  // Error grows with the depth offset and shrinks with tau.
  const RigidPose near_off(Mat3::Identity(), gt.t + Vec3(0, 0, 0.5 * tau));
  CHECK(vsd(near_off, gt, sphere, K, cfg, tau, bop::kVsdDelta) <= 0.2);

  const RigidPose gone(Mat3::Identity(), Vec3(5, 0, 0.5));
  CHECK(vsd(gone, gt, sphere, K, cfg, tau, bop::kVsdDelta, &diag) == 1.0);
  CHECK(diag.overlap_pixels == 0);
  CHECK_FALSE(diag.empty_overlap);
  CHECK(vsd(gone, gone, sphere, K, cfg, tau, bop::kVsdDelta, &diag) == 1.0);
  CHECK(diag.empty_overlap);

  const std::vector<double> taus(bop::kVsdTaus.begin(), bop::kVsdTaus.end());
  const std::vector<double> multi = vsd_multi(near_off, gt, sphere, K, cfg, taus, bop::kVsdDelta);
  for (size_t k = 0; k < taus.size(); ++k)
    CHECK(multi[k] == vsd(near_off, gt, sphere, K, cfg, taus[k], bop::kVsdDelta));
  for (size_t k = 1; k < taus.size(); ++k) CHECK(multi[k] <= multi[k - 1]);
}

TEST_CASE("mssd and mspd with a two-fold cuboid") {
  const TriangleMesh box = make_box(Vec3(0.1, 0.06, 0.04));
  const CameraIntrinsics K(500, 500, 320, 240);
  const RigidPose gt(axis_angle(Vec3(1, 2, 3).normalized(), 0.4), Vec3(0.02, 0, 0.7));
  const RigidPose flipped(gt.R * axis_angle(Vec3::UnitZ(), M_PI), gt.t);
  SymmetrySet none;
  SymmetrySet two;
  two.discrete.push_back(axis_angle(Vec3::UnitZ(), M_PI));
  CHECK(mssd(flipped, gt, box, two) < 1e-12);
  CHECK(mspd(flipped, gt, box, two, K) < 1e-9);
  // Opposite corners swap: the farthest vertex moves by the xy diagonal.
  CHECK(mssd(flipped, gt, box, none) == doctest::Approx(std::hypot(0.1, 0.06)));
  CHECK(mspd(flipped, gt, box, none, K) > 10.0);

  const RigidPose shifted(gt.R, gt.t + Vec3(0.003, 0.004, 0));
  CHECK(mssd(shifted, gt, box, none) == doctest::Approx(0.005));
}

TEST_CASE("ar scores") {
  const TriangleMesh cube = builtin_mesh("builtin:cube");
  const CameraIntrinsics K(120, 120, 32, 32);
  const RenderConfig cfg;
  const RigidPose gt(axis_angle(Vec3(1, 1, 0).normalized(), 0.5), Vec3(0, 0, 0.4));
  const BopErrors same = bop_errors(gt, gt, cube, SymmetrySet{}, K, cfg);
  const std::vector<BopErrors> ones = {same, same};
  const ArScores s = ar_scores(ones, cfg.width);
  CHECK(s.vsd == 1.0);
  CHECK(s.mssd == 1.0);
  CHECK(s.mspd == 1.0);
  CHECK(s.mean == 1.0);

  // Scaling every error up never raises any score.
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 0.6);
  std::vector<BopErrors> rs(20);
  for (BopErrors& r : rs) {
    r.diameter = 0.1;
    r.vsd.resize(bop::kVsdTaus.size());
    for (double& v : r.vsd) v = u(rng);
    r.mssd = u(rng) * 0.1;
    r.mspd = u(rng) * 10;
  }
  ArScores prev = ar_scores(rs, 64);
  for (int k = 0; k < 10; ++k) {
    for (BopErrors& r : rs) {
      for (double& v : r.vsd) v *= 1.2;
      r.mssd *= 1.2;
      r.mspd *= 1.2;
    }
    const ArScores cur = ar_scores(rs, 64);
    CHECK(cur.vsd <= prev.vsd);
    CHECK(cur.mssd <= prev.mssd);
    CHECK(cur.mspd <= prev.mspd);
    prev = cur;
  }
  CHECK_THROWS_AS(ar_scores(std::vector<BopErrors>{}, 64), Error);
}
