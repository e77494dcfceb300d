#include "sopose/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "sopose/metrics.hpp"
#include "sopose/pnp.hpp"

namespace sopose {

const char* to_string(StudyMethod m) {
  switch (m) {
    case StudyMethod::kTwoLayer: return "two-layer";
    case StudyMethod::kCorrespondenceOnly: return "corr-only";
    case StudyMethod::kPnpRansac: return "pnp-ransac";
  }
  return "unknown";
}

void StudyConfig::validate() const {
  if (sigmas.size() < 2) throw Error(ErrorKind::kUsage, "noise study needs >= 2 noise levels");
  for (double s : sigmas)
    if (!(s >= 0.0)) throw Error(ErrorKind::kUsage, "noise levels must be nonnegative");
  if (scenes < 1 || trials < 1) throw Error(ErrorKind::kUsage, "scenes and trials must be >= 1");
  render.validate();
  solver.validate();
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(normal(rng), normal(rng), normal(rng), normal(rng));
  } while (q.norm() < 1e-6);
  return q.normalized().toRotationMatrix();
}

RigidPose sample_scene_pose(const TriangleMesh& mesh, const CameraIntrinsics& K,
                            const RenderConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  RigidPose pose;
  pose.R = random_rotation(rng);
  const double base = 4.0 * mesh.diameter;
  const double tz = base * (0.5 + 1.5 * uni(rng));
  const Vec2 uv(cfg.width * (0.2 + 0.6 * uni(rng)), cfg.height * (0.2 + 0.6 * uni(rng)));
  pose.t = tz * K.unproject(uv);
  return pose;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::max(1, std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency())));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

MethodError score(const RigidPose& est, const RigidPose& gt, std::span<const Vec3> pts) {
  MethodError e;
  e.ok = true;
  e.rot_deg = rotation_error_deg(est, gt);
  e.trans_m = translation_error(est, gt);
  e.add_m = add(est, gt, pts);
  return e;
}

}  // namespace

std::vector<std::array<MethodSummary, kStudyMethodCount>> summarize_cells(
    const std::vector<StudyCell>& cells, const std::vector<double>& sigmas, int scenes) {
  std::vector<std::array<MethodSummary, kStudyMethodCount>> out(sigmas.size());
  const double inf = std::numeric_limits<double>::infinity();
  for (size_t si = 0; si < sigmas.size(); ++si) {
    for (int m = 0; m < kStudyMethodCount; ++m) {
      std::vector<double> rot, trans, addv, rot_ok, trans_ok, add_ok;
      MethodSummary& s = out[si][m];
      for (int sc = 0; sc < scenes; ++sc) {
        const StudyCell& cell = cells[si * scenes + sc];
        for (const MethodError& e : cell.trials[m]) {
          ++s.samples;
          if (!e.ok) {
            ++s.failures;
            rot.push_back(inf);
            trans.push_back(inf);
            addv.push_back(inf);
            continue;
          }
          rot.push_back(e.rot_deg);
          trans.push_back(e.trans_m);
          addv.push_back(e.add_m);
          rot_ok.push_back(e.rot_deg);
          trans_ok.push_back(e.trans_m);
          add_ok.push_back(e.add_m);
        }
      }
      s.median_rot = median_of(rot);
      s.median_trans = median_of(trans);
      s.median_add = median_of(addv);
      s.mean_rot = mean_of(rot_ok);
      s.mean_trans = mean_of(trans_ok);
      s.mean_add = mean_of(add_ok);
    }
  }
  return out;
}

StudyResult noise_study(const std::vector<StudyMesh>& meshes, const PoseSampler& sampler,
                        const StudyConfig& cfg) {
  cfg.validate();
  if (meshes.empty()) throw Error(ErrorKind::kUsage, "noise study needs at least one mesh");

  StudyResult res;
  res.sigmas = cfg.sigmas;
  for (const StudyMesh& m : meshes) res.mesh_names.push_back(m.name);

  // Scene poses are drawn sequentially so they do not depend on threading.
  std::mt19937_64 rng(cfg.seed);
  std::vector<TwoLayerMaps> scene_maps;
  for (int s = 0; s < cfg.scenes; ++s) {
    const int mi = s % static_cast<int>(meshes.size());
    const TriangleMesh& mesh = meshes[mi].mesh;
    RigidPose pose;
    TwoLayerMaps maps;
    for (int attempt = 0; attempt < 50; ++attempt) {
      pose = sampler(mesh, cfg.K, cfg.render, rng);
      maps = generate_maps(mesh, pose, cfg.K, cfg.render);
      if (maps.mask_count() >= 30) break;
    }
    if (maps.mask_count() < 30) ++res.scene_failures;
    res.scene_poses.push_back(pose);
    res.scene_mesh.push_back(mi);
    scene_maps.push_back(std::move(maps));
  }

  std::vector<std::vector<Vec3>> points;
  for (const StudyMesh& m : meshes) points.push_back(model_points(m.mesh));

  const int nsig = static_cast<int>(cfg.sigmas.size());
  res.cells.resize(static_cast<size_t>(nsig) * cfg.scenes);
  parallel_for(cfg.scenes, [&](int s) {
    const int mi = res.scene_mesh[s];
    const TriangleMesh& mesh = meshes[mi].mesh;
    const RigidPose& gt = res.scene_poses[s];
    SolverConfig corr_cfg = cfg.solver;
    corr_cfg.correspondence_only = true;
    for (int si = 0; si < nsig; ++si) {
      StudyCell& cell = res.cells[static_cast<size_t>(si) * cfg.scenes + s];
      cell.scene = s;
      cell.mesh = mi;
      cell.sigma = cfg.sigmas[si];
      for (int tr = 0; tr < cfg.trials; ++tr) {
        NoiseSpec noise;
        noise.sigma_corr = cfg.sigmas[si];
        noise.sigma_occ = cfg.sigmas[si];
        noise.dropout = cfg.dropout;
        noise.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(s) * 1000003ULL + tr);
        const TwoLayerMaps noisy = add_noise(scene_maps[s], noise);

        std::array<MethodError, kStudyMethodCount> errs{};
        try {
          const PoseParam init = init_pose(noisy, cfg.K, mesh);
          try {
            errs[0] = score(solve_lm(noisy, cfg.K, mesh, cfg.solver, init).pose, gt, points[mi]);
          } catch (const Error&) {
          }
          try {
            errs[1] = score(solve_lm(noisy, cfg.K, mesh, corr_cfg, init).pose, gt, points[mi]);
          } catch (const Error&) {
          }
        } catch (const Error&) {
        }
        try {
          errs[2] = score(pnp_ransac(noisy, cfg.K, mesh, noise.seed).pose, gt, points[mi]);
        } catch (const Error&) {
        }
        for (int m = 0; m < kStudyMethodCount; ++m) cell.trials[m].push_back(errs[m]);
      }
      for (int m = 0; m < kStudyMethodCount; ++m) {
        std::vector<double> v;
        for (const MethodError& e : cell.trials[m])
          v.push_back(e.ok ? e.add_m : std::numeric_limits<double>::infinity());
        cell.median_add[m] = median_of(v);
      }
    }
  });

  res.summary = summarize_cells(res.cells, res.sigmas, cfg.scenes);

  // Monotonicity of the median cell ADD in sigma, allowing two bootstrap
  // standard errors of the paired median difference.
  std::mt19937_64 boot(mix_seed(cfg.seed, 0xb007));
  std::uniform_int_distribution<int> pick(0, cfg.scenes - 1);
  auto finite = [](double v) { return std::isfinite(v) ? v : 1e3; };
  for (int m = 0; m < kStudyMethodCount; ++m) {
    bool ok = true;
    for (int si = 0; si + 1 < nsig; ++si) {
      std::vector<double> a, b;
      for (int s = 0; s < cfg.scenes; ++s) {
        a.push_back(finite(res.cells[static_cast<size_t>(si) * cfg.scenes + s].median_add[m]));
        b.push_back(finite(res.cells[static_cast<size_t>(si + 1) * cfg.scenes + s].median_add[m]));
      }
      const double diff = median_of(b) - median_of(a);
      std::vector<double> diffs;
      for (int r = 0; r < cfg.bootstrap_resamples; ++r) {
        std::vector<double> ra, rb;
        for (int s = 0; s < cfg.scenes; ++s) {
          const int k = pick(boot);
          ra.push_back(a[k]);
          rb.push_back(b[k]);
        }
        diffs.push_back(median_of(rb) - median_of(ra));
      }
      const double mu = mean_of(diffs);
      double var = 0.0;
      for (double d : diffs) var += (d - mu) * (d - mu);
      const double se = std::sqrt(var / std::max<size_t>(1, diffs.size() - 1));
      if (diff < -2.0 * se) ok = false;
    }
    res.monotone[m] = ok;
  }

  int wins = 0;
  int cells = 0;
  for (const StudyCell& c : res.cells) {
    if (std::abs(c.sigma - cfg.directional_sigma) > 1e-12) continue;
    ++cells;
    if (c.median_add[0] <= c.median_add[1]) ++wins;
  }
  res.directional_cells = cells;
  res.directional_fraction = cells > 0 ? static_cast<double>(wins) / cells : 0.0;
  return res;
}

std::string format_study_table(const StudyResult& r) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-11s %10s %10s %12s %12s %12s %6s\n", "sigma",
                "method", "med_rot", "mean_rot", "med_trans_m", "med_add_m", "mean_add_m",
                "fail");
  out += line;
  for (size_t si = 0; si < r.sigmas.size(); ++si) {
    for (int m = 0; m < kStudyMethodCount; ++m) {
      const MethodSummary& s = r.summary[si][m];
      std::snprintf(line, sizeof line, "%-8.4g %-11s %10.4g %10.4g %12.4g %12.4g %12.4g %6d\n",
                    r.sigmas[si], to_string(static_cast<StudyMethod>(m)), s.median_rot,
                    s.mean_rot, s.median_trans, s.median_add, s.mean_add, s.failures);
      out += line;
    }
  }
  std::snprintf(line, sizeof line,
                "monotone: two-layer=%s corr-only=%s pnp-ransac=%s; two-layer <= corr-only in "
                "%.1f%% of %d cells\n",
                r.monotone[0] ? "yes" : "no", r.monotone[1] ? "yes" : "no",
                r.monotone[2] ? "yes" : "no", 100.0 * r.directional_fraction,
                r.directional_cells);
  out += line;
  return out;
}

}  // namespace sopose
