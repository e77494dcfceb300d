#include "sopose/solver.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <random>

namespace sopose {

void SolverConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorKind::kUsage, "max_iters must be >= 1");
  if (!(tol_step > 0.0) || !(tol_cost > 0.0) || !(lm_damping_init > 0.0))
    throw Error(ErrorKind::kUsage, "solver tolerances must be positive");
  if (!(irls_delta > 0.0) || !(irls_delta_norm > 0.0))
    throw Error(ErrorKind::kUsage, "IRLS transitions must be positive");
  if (!use_weight_defaults) weights.validate();
}

void NoiseSpec::validate() const {
  if (!(sigma_corr >= 0.0) || !(sigma_occ >= 0.0))
    throw Error(ErrorKind::kUsage, "noise sigmas must be nonnegative");
  if (!(dropout >= 0.0) || !(dropout < 1.0))
    throw Error(ErrorKind::kUsage, "dropout must lie in [0, 1)");
}

PoseParam init_pose(const TwoLayerMaps& maps, const CameraIntrinsics& K,
                    const TriangleMesh& mesh) {
  std::vector<Vec3> object_pts;
  std::vector<Vec3> rays;
  Vec2 centroid = Vec2::Zero();
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    const LayerPixel& px = maps.pixels[idx];
    if (!px.mask) continue;
    const Vec2 rho = maps.center(idx);
    centroid += rho;
    object_pts.push_back(px.p0 * mesh.diameter);
    rays.push_back(K.unproject(rho));
  }
  if (object_pts.empty()) throw Error(ErrorKind::kNoDetection, "mask is empty");
  const double count = static_cast<double>(object_pts.size());
  centroid /= count;

  // Mean silhouette area at unit distance: a quarter of the surface area
  // (exact for convex bodies).
  const double model_area = std::max(surface_area(mesh) / 4.0, 1e-12);
  const double dist = std::sqrt(K.fx * K.fy * model_area / count);

  // Orthogonal iteration: place samples on their rays, fit a rigid transform,
  // re-read depths from the fit.
  std::vector<Vec3> cam_pts(object_pts.size());
  for (size_t i = 0; i < rays.size(); ++i) cam_pts[i] = rays[i] * dist;
  Mat3 R = Mat3::Identity();
  if (object_pts.size() >= 3) {
    for (int iter = 0; iter < 20; ++iter) {
      const auto [Ri, ti] = fit_rigid(object_pts, cam_pts);
      R = Ri;
      for (size_t i = 0; i < rays.size(); ++i) {
        const double z = (Ri * object_pts[i] + ti).z();
        cam_pts[i] = rays[i] * (z > kDepthEpsilon ? z : dist);
      }
    }
  }

  PoseParam p;
  p.uv = centroid;
  p.dist = dist;
  p.r6d = rotation_to_r6d(ego_to_allo(R, dist * K.unproject(centroid)));
  return p;
}

TwoLayerMaps strip_self_occlusion(const TwoLayerMaps& maps) {
  TwoLayerMaps out = maps;
  for (LayerPixel& px : out.pixels) {
    px.q_valid = {false, false, false};
    px.q0 = {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  }
  return out;
}

TwoLayerMaps add_noise(const TwoLayerMaps& maps, const NoiseSpec& spec) {
  spec.validate();
  TwoLayerMaps out = maps;
  if (spec.is_identity()) return out;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (LayerPixel& px : out.pixels) {
    if (!px.mask) continue;
    const double keep = uni(rng);
    Vec3 dp;
    for (int i = 0; i < 3; ++i) dp[i] = normal(rng);
    std::array<Vec2, 3> dq;
    for (auto& q : dq) {
      q.x() = normal(rng);
      q.y() = normal(rng);
    }
    if (keep < spec.dropout) {
      px = LayerPixel{};
      continue;
    }
    px.p0 += spec.sigma_corr * dp;
    for (int k = 0; k < 3; ++k) {
      if (px.q_valid[k]) px.q0[k] += spec.sigma_occ * dq[k];
    }
  }
  return out;
}

namespace {

struct TermScale {
  double weight = 0.0;  // multiplies the per-entry robust cost
  double delta = 1.0;   // Huber transition
};

struct Objective {
  TermScale corr, cl2d, cl3d, q2;
  TermSelection terms;
};

Objective make_objective(const TwoLayerMaps& maps, const TriangleMesh& mesh,
                         const CameraIntrinsics& K, const SolverConfig& cfg,
                         const RigidPose& start) {
  const Weights w = cfg.use_weight_defaults ? Weights::defaults(K) : cfg.weights;
  Objective obj;
  const double n_corr = static_cast<double>(maps.mask_count());
  const double n_pairs = static_cast<double>(maps.q_valid_count());
  obj.corr = {n_corr > 0 ? 1.0 / n_corr : 0.0, cfg.irls_delta};
  if (!cfg.correspondence_only && n_pairs > 0) {
    obj.cl2d = {w.lambda1 / n_pairs, cfg.irls_delta};
    obj.cl3d = {w.lambda2 / n_pairs, cfg.irls_delta_norm * mesh.diameter * start.t.norm()};
    obj.q2 = {w.lambda3 / n_pairs, cfg.irls_delta};
  }
  obj.terms.corr = obj.corr.weight > 0;
  obj.terms.cl2d = obj.cl2d.weight > 0;
  obj.terms.cl3d = obj.cl3d.weight > 0;
  obj.terms.q2 = obj.q2.weight > 0;
  return obj;
}

double robust_cost(const ResidualBlock& b, const TermScale& s) {
  if (s.weight == 0.0) return 0.0;
  double sum = 0.0;
  for (double r : b.values) {
    const double a = std::abs(r);
    sum += a <= s.delta ? 0.5 * a * a / s.delta : a - 0.5 * s.delta;
  }
  return s.weight * sum;
}

double total_cost(const Linearization& lin, const Objective& obj) {
  return robust_cost(lin.corr, obj.corr) + robust_cost(lin.cl2d, obj.cl2d) +
         robust_cost(lin.cl3d, obj.cl3d) + robust_cost(lin.q2, obj.q2);
}

using Mat9 = Eigen::Matrix<double, PoseParam::kSize, PoseParam::kSize>;
using Vec9 = Eigen::Matrix<double, PoseParam::kSize, 1>;

void accumulate(const ResidualBlock& b, const TermScale& s, Mat9& H, Vec9& g) {
  if (s.weight == 0.0) return;
  for (Eigen::Index i = 0; i < b.jacobian.rows(); ++i) {
    const double r = b.values[static_cast<size_t>(i)];
    const double a = std::abs(r);
    const double w = s.weight / (a <= s.delta ? s.delta : a);
    const auto J = b.jacobian.row(i);
    H.noalias() += w * J.transpose() * J;
    g.noalias() += (w * r) * J.transpose();
  }
}

PoseParam canonical(const PoseParam& p, const CameraIntrinsics& K) {
  return pose_to_param(param_to_pose(p, K), K);
}

}  // namespace

double solver_cost(const PoseParam& param, const TwoLayerMaps& maps,
                   const TriangleMesh& mesh, const CameraIntrinsics& K,
                   const SolverConfig& cfg) {
  const Objective obj = make_objective(maps, mesh, K, cfg, param_to_pose(param, K));
  return total_cost(jacobian(param, maps, mesh, K, obj.terms), obj);
}

SolveResult solve_lm(const TwoLayerMaps& maps, const CameraIntrinsics& K,
                     const TriangleMesh& mesh, const SolverConfig& cfg,
                     std::optional<PoseParam> init) {
  cfg.validate();
  if (maps.mask_count() == 0) throw Error(ErrorKind::kNoDetection, "mask is empty");
  PoseParam x = canonical(init ? *init : init_pose(maps, K, mesh), K);
  const Objective obj = make_objective(maps, mesh, K, cfg, param_to_pose(x, K));

  Linearization lin = jacobian(x, maps, mesh, K, obj.terms);
  double cost = total_cost(lin, obj);

  SolveTrace trace;
  trace.initial_cost = cost;
  double mu = cfg.lm_damping_init;
  constexpr double kMaxDamping = 1e12;

  for (int it = 0; it < cfg.max_iters; ++it) {
    Mat9 H = Mat9::Zero();
    Vec9 g = Vec9::Zero();
    accumulate(lin.corr, obj.corr, H, g);
    accumulate(lin.cl2d, obj.cl2d, H, g);
    accumulate(lin.cl3d, obj.cl3d, H, g);
    accumulate(lin.q2, obj.q2, H, g);

    Vec9 diag = H.diagonal();
    const double floor = std::max(diag.maxCoeff(), 1e-300) * 1e-12;
    diag = diag.cwiseMax(floor);
    Mat9 A = H;
    A.diagonal() += mu * diag;
    const Vec9 step = A.ldlt().solve(-g);
    const double step_norm = step.norm();
    const double tol = cfg.tol_step * (1.0 + x.to_vector().norm());

    SolveIteration rec;
    rec.step_norm = step_norm;
    rec.damping = mu;

    bool accepted = false;
    double trial_cost = cost;
    PoseParam trial;
    Linearization trial_lin;
    if (step.allFinite()) {
      try {
        trial = canonical(PoseParam::from_vector(x.to_vector() + step), K);
        trial_lin = jacobian(trial, maps, mesh, K, obj.terms);
        trial_cost = total_cost(trial_lin, obj);
        accepted = std::isfinite(trial_cost) && trial_cost < cost;
      } catch (const Error&) {
        accepted = false;
      }
    }

    if (accepted) {
      const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
      x = trial;
      lin = std::move(trial_lin);
      cost = trial_cost;
      mu = std::max(mu / 3.0, 1e-12);
      rec.cost = cost;
      rec.accepted = true;
      trace.iterations.push_back(rec);
      if (step_norm < tol || rel < cfg.tol_cost || cost < 1e-30) {
        trace.converged = true;
        break;
      }
    } else {
      mu *= 4.0;
      rec.cost = cost;
      trace.iterations.push_back(rec);
      if (step_norm < tol) {
        trace.converged = true;
        break;
      }
      if (mu > kMaxDamping) break;
    }
  }

  trace.final_cost = cost;
  trace.final_param = x;
  trace.final_pose = param_to_pose(x, K);
  trace.excluded_behind = lin.corr.excluded_behind + lin.cl2d.excluded_behind +
                          lin.q2.excluded_behind;
  trace.excluded_parallel = lin.cl3d.excluded_parallel + lin.cl2d.excluded_parallel;
  return SolveResult{trace.final_pose, std::move(trace)};
}

}  // namespace sopose
