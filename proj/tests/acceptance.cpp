// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "golden_fixtures.hpp"
#include "sopose/commands.hpp"
#include "sopose/io.hpp"
#include "sopose/metrics.hpp"
#include "sopose/pnp.hpp"
#include "sopose/residuals.hpp"
#include "sopose/solver.hpp"
#include "sopose/study.hpp"
#include "support.hpp"

using namespace sopose;
using sopose::testing::random_scene;
using sopose::testing::Scene;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// The 100 scenes shared by the geometry and zero-at-GT criteria.
const std::vector<Scene>& hundred_scenes() {
  static const std::vector<Scene> scenes = [] {
    std::mt19937_64 rng(2024);
    std::vector<Scene> out;
    for (int i = 0; i < 100; ++i) out.push_back(random_scene(rng));
    return out;
  }();
  return scenes;
}

Outcome geometry_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Scene>& scenes = hundred_scenes();
  double worst_ray = 0, worst_col = 0;
  size_t nonzero_coord = 0, checked = 0;
  for (const Scene& sc : scenes) {
    const TwoLayerMaps metric = denormalize_maps(sc.maps, sc.mesh.diameter);
    for (const LayerPixel& px : metric.pixels) {
      if (!px.mask) continue;
      const Vec3 P = sc.pose.transform(px.p0);
      for (int a = 0; a < 3; ++a) {
        if (!px.q_valid[a]) continue;
        const Vec3 q0 = lift_plane_point(px.q0[a], a);
        if (q0[a] != 0.0) ++nonzero_coord;
        const Vec3 Q = sc.pose.transform(q0);
        const Vec3 n = sc.pose.R.col(a);
        worst_ray = std::max(worst_ray, (n.dot(sc.pose.t) * P - n.dot(P) * Q).cwiseAbs().maxCoeff());
        worst_col = std::max(worst_col, Q.cross(P).norm() / (Q.norm() * P.norm()));
        ++checked;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = checked > 0 && worst_ray < 1e-7 && worst_col < 1e-9 && nonzero_coord == 0 && secs < 60;
  o.detail = fmt("%zu intersections, ray identity %.2e m^2, collinearity %.2e, nonzero coords %zu, %.1fs",
                 checked, worst_ray, worst_col, nonzero_coord, secs);
  return o;
}

Outcome zero_at_gt() {
  double cl3d = 0, cl2d = 0, q1 = 0, q2 = 0, corr = 0, cdpn = 0;
  for (const Scene& sc : hundred_scenes()) {
    cl3d = std::max(cl3d, res_cl3d(sc.pose, sc.maps, sc.mesh, sc.K).l1_mean());
    cl2d = std::max(cl2d, res_cl2d(sc.pose, sc.maps, sc.mesh, sc.K).l1_mean());
    q1 = std::max(q1, res_q1(sc.maps, sc.maps).l1_mean());
    q2 = std::max(q2, res_q2(sc.maps, sc.pose, sc.K, sc.mesh).l1_mean());
    corr = std::max(corr, res_corr(sc.pose, sc.maps, sc.K, sc.mesh).l1_mean());
    cdpn = std::max(cdpn, res_cdpn(sc.pose.R, sc.pose.t, sc.maps, sc.K, sc.mesh).loss());
  }
  Outcome o;
  o.pass = std::isfinite(cl3d + cl2d + q2 + corr + cdpn) && cl3d < 1e-7 && cl2d < 1e-6 &&
           q1 == 0.0 && q2 < 1e-6 && corr < 1e-6 && cdpn < 1e-6;
  o.detail = fmt("worst L1 means: cl3d %.1e cl2d %.1e q1 %.1e q2 %.1e corr %.1e cdpn %.1e", cl3d,
                 cl2d, q1, q2, corr, cdpn);
  return o;
}

PoseParam perturbed(const Scene& sc, std::mt19937_64& rng, double max_deg, double max_depth) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  const double angle = max_deg * M_PI / 180.0 * std::abs(u(rng));
  return pose_to_param(
      RigidPose(axis_angle(axis, angle) * sc.pose.R, sc.pose.t * (1.0 + max_depth * u(rng))), sc.K);
}

// Worst per-row relative error, rows scaled by max(|fd row|, 1e-3 |fd block|).
double fd_error(const PoseParam& p, const Scene& sc, const TermSelection& terms,
                ResidualBlock Linearization::*member, size_t& rows) {
  const ResidualBlock blk = jacobian(p, sc.maps, sc.mesh, sc.K, terms).*member;
  if (blk.rows() == 0) return 0.0;
  Eigen::MatrixXd fd(blk.rows(), PoseParam::kSize);
  const auto v = p.to_vector();
  for (int k = 0; k < PoseParam::kSize; ++k) {
    const double h = 1e-6;
    auto a = v, b = v;
    a[k] += h;
    b[k] -= h;
    const ResidualBlock ra = jacobian(PoseParam::from_vector(a), sc.maps, sc.mesh, sc.K, terms).*member;
    const ResidualBlock rb = jacobian(PoseParam::from_vector(b), sc.maps, sc.mesh, sc.K, terms).*member;
    if (ra.rows() != blk.rows() || rb.rows() != blk.rows())
      return std::numeric_limits<double>::infinity();
    for (size_t r = 0; r < blk.rows(); ++r) fd(r, k) = (ra.values[r] - rb.values[r]) / (2 * h);
  }
  const double global = fd.cwiseAbs().maxCoeff();
  double worst = 0;
  for (Eigen::Index r = 0; r < fd.rows(); ++r) {
    const double scale = std::max(fd.row(r).cwiseAbs().maxCoeff(), 1e-3 * global);
    worst = std::max(worst, (blk.jacobian.row(r) - fd.row(r)).cwiseAbs().maxCoeff() / scale);
  }
  rows += blk.rows();
  return worst;
}

Outcome jacobian_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  double worst = 0;
  size_t rows = 0;
  for (int s = 0; s < 100; ++s) {
    const Scene sc = random_scene(rng);
    const PoseParam p = perturbed(sc, rng, 8.0, 0.04);
    for (auto m : {&Linearization::corr, &Linearization::cl2d, &Linearization::cl3d, &Linearization::q2})
      worst = std::max(worst, fd_error(p, sc, {}, m, rows));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = rows > 0 && worst < 1e-4 && secs < 120;
  o.detail = fmt("100 points, %zu rows, worst relative error %.2e, %.1fs", rows, worst, secs);
  return o;
}

Outcome round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(404);
  int ok = 0;
  const int n = 200;
  for (int s = 0; s < n; ++s) {
    const Scene sc = random_scene(rng);
    const SolveResult r = solve_lm(sc.maps, sc.K, sc.mesh, SolverConfig{}, perturbed(sc, rng, 10.0, 0.05));
    ok += rotation_error_deg(r.pose, sc.pose) < 0.1 &&
                  translation_error(r.pose, sc.pose) < 1e-3 * sc.pose.t.z()
              ? 1
              : 0;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = ok >= 0.95 * n && secs < 300;
  o.detail = fmt("%d of %d recovered, %.1fs", ok, n, secs);
  return o;
}

Outcome baseline_equivalence() {
  std::mt19937_64 rng(505);
  SolverConfig cfg;
  cfg.use_weight_defaults = false;
  cfg.weights.lambda1 = cfg.weights.lambda2 = cfg.weights.lambda3 = 0.0;
  double worst_r = 0, worst_t = 0;
  for (int s = 0; s < 20; ++s) {
    const Scene sc = random_scene(rng);
    const TwoLayerMaps stripped = strip_self_occlusion(sc.maps);
    const RigidPose base = pnp_ransac(stripped, sc.K, sc.mesh, 1000 + s).pose;
    const RigidPose lm = solve_lm(stripped, sc.K, sc.mesh, cfg).pose;
    worst_r = std::max(worst_r, rotation_angle(base.R, lm.R));
    worst_t = std::max(worst_t, (base.t - lm.t).norm());
  }
  Outcome o;
  o.pass = worst_r < 1e-4 && worst_t < 1e-5;
  o.detail = fmt("20 scenes, worst %.2e rad / %.2e m", worst_r, worst_t);
  return o;
}

Outcome noise_study_check() {
  const auto t0 = std::chrono::steady_clock::now();
  StudyConfig cfg;
  cfg.sigmas = {0.0, 0.005, 0.01, 0.02};
  cfg.scenes = 20;
  const std::vector<StudyMesh> meshes = study_meshes_from_json(nlohmann::json::object(), ".");
  const StudyResult r = noise_study(meshes, sample_scene_pose, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << format_study_table(r);
  const bool monotone = r.monotone[0] && r.monotone[1] && r.monotone[2];
  Outcome o;
  o.pass = monotone && r.directional_fraction >= 0.6 && secs < 600;
  o.detail = fmt("monotone %s, two-layer <= corr-only in %.1f%% of %d cells at sigma=%.3g, %.1fs",
                 monotone ? "yes" : "no", 100.0 * r.directional_fraction, r.directional_cells,
                 cfg.directional_sigma, secs);
  return o;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<Vec3> pts(500);
  for (Vec3& p : pts) p = Vec3(g(rng), g(rng), g(rng));
  double add_err = 0, adds_err = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const RigidPose gt(random_rotation(rng), Vec3(0.02, -0.01, 0.7));
    const RigidPose est(axis_angle(Vec3(1, 0, 1).normalized(), 0.03 * (trial + 1)) * gt.R,
                        gt.t + Vec3(0.002, 0.003, -0.004));
    double s = 0, ss = 0;
    for (const Vec3& p : pts) {
      s += (est.transform(p) - gt.transform(p)).norm();
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : pts) best = std::min(best, (est.transform(p) - gt.transform(q)).norm());
      ss += best;
    }
    add_err = std::max(add_err, std::abs(add(est, gt, pts) - s / 500));
    adds_err = std::max(adds_err, std::abs(add_s(est, gt, pts) - ss / 500));
  }

  std::exponential_distribution<double> ex(25.0);
  std::vector<double> errs(400);
  for (double& e : errs) e = ex(rng);
  const int steps = 50000;
  double area = 0, prev = 0;
  for (int i = 0; i <= steps; ++i) {
    const double th = kAucMaxThreshold * i / steps;
    double acc = 0;
    for (double e : errs) acc += e <= th ? 1 : 0;
    acc /= errs.size();
    if (i > 0) area += 0.5 * (acc + prev) * kAucMaxThreshold / steps;
    prev = acc;
  }
  const double auc_err = std::abs(auc(errs) - area / kAucMaxThreshold);

  std::vector<BopErrors> ident;
  const CameraIntrinsics K(120, 120, 32, 32);
  const RenderConfig cfg;
  for (const char* name : {"builtin:cube", "builtin:cylinder", "builtin:lshape"}) {
    const TriangleMesh m = builtin_mesh(name);
    const RigidPose gt(random_rotation(rng), Vec3(0, 0, 4 * m.diameter));
    ident.push_back(bop_errors(gt, gt, m, SymmetrySet{}, K, cfg));
  }
  const ArScores ar = ar_scores(ident, cfg.width);
  Outcome o;
  o.pass = add_err < 1e-12 && adds_err < 1e-12 && auc_err < 1e-4 && ar.vsd == 1.0 &&
           ar.mssd == 1.0 && ar.mspd == 1.0;
  o.detail = fmt("add %.1e, add_s %.1e, auc %.1e, identity AR %.17g/%.17g/%.17g", add_err,
                 adds_err, auc_err, ar.vsd, ar.mssd, ar.mspd);
  return o;
}

Outcome format_goldens() {
  size_t mismatched = 0, files = 0;
  const auto first = golden::all_files();
  const auto second = golden::all_files();
  bool regen_same = first.size() == second.size();
  for (size_t i = 0; i < first.size(); ++i) {
    ++files;
    const fs::path p = fs::path(SOPOSE_GOLDEN_DIR) / first[i].name;
    if (!fs::exists(p) || read_file_bytes(p) != first[i].bytes) ++mismatched;
    regen_same = regen_same && first[i].bytes == second[i].bytes;
  }
  // Fixed-seed generation through the gen command, noise included.
  const fs::path tmp = fs::temp_directory_path() / ("sopose_acceptance_" + std::to_string(::getpid()));
  GenOptions g;
  g.mesh = "builtin:lshape";
  g.seed = 77;
  g.sigma_corr = 0.01;
  g.sigma_occ = 0.01;
  g.dropout = 0.1;
  g.out = tmp / "a";
  const std::uint32_t ca = cmd_gen(g).crc;
  g.out = tmp / "b";
  const std::uint32_t cb = cmd_gen(g).crc;
  const bool gen_same = ca == cb && read_file_bytes(tmp / "a" / "maps.sopm") ==
                                        read_file_bytes(tmp / "b" / "maps.sopm");
  std::error_code ec;
  fs::remove_all(tmp, ec);
  Outcome o;
  o.pass = mismatched == 0 && regen_same && gen_same;
  o.detail = fmt("%zu/%zu golden files byte-exact, regeneration %s, gen crc %08x/%08x",
                 files - mismatched, files, regen_same ? "stable" : "unstable", ca, cb);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"1 geometry identities", geometry_identities},
      {"2 zero at ground truth", zero_at_gt},
      {"3 jacobian vs finite differences", jacobian_check},
      {"4 round-trip recovery", round_trip},
      {"5 baseline equivalence", baseline_equivalence},
      {"6 noise study", noise_study_check},
      {"7 metric oracles", metric_oracles},
      {"8 format goldens", format_goldens},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << fmt("%.2fs", secs)
              << ")  " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : fmt("%d criteria failed", failed)) << "\n";
  return failed == 0 ? 0 : 1;
}
