#include "sopose/pnp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>

namespace sopose {

namespace {

// Coefficients low to high.
using Poly = std::vector<double>;

Poly mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly add(const Poly& a, const Poly& b, double scale_b = 1.0) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) out[i] += scale_b * b[i];
  return out;
}

double eval(const Poly& p, double x) {
  double r = 0.0;
  for (size_t i = p.size(); i-- > 0;) r = r * x + p[i];
  return r;
}

std::vector<double> real_roots(Poly p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (p.size() > 1 && std::abs(p.back()) <= 1e-12 * scale) p.pop_back();
  const int deg = static_cast<int>(p.size()) - 1;
  if (deg < 1) return {};
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) C(i, deg - 1) = -p[i] / p[deg];
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  Poly dp;
  for (int i = 1; i <= deg; ++i) dp.push_back(i * p[i]);
  std::vector<double> roots;
  for (int i = 0; i < deg; ++i) {
    const std::complex<double> z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int k = 0; k < 5; ++k) {  // Newton polish
      const double d = eval(dp, x);
      if (d == 0.0) break;
      x -= eval(p, x) / d;
    }
    roots.push_back(x);
  }
  return roots;
}

Mat3 exp_so3(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

double reprojection_error(const RigidPose& pose, const CameraIntrinsics& K,
                          const Vec3& point, const Vec2& pixel) {
  const Vec3 X = pose.transform(point);
  if (!(X.z() > kDepthEpsilon)) return std::numeric_limits<double>::infinity();
  return (Vec2(K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy) - pixel).norm();
}

}  // namespace

std::vector<RigidPose> p3p(const std::array<Vec3, 3>& bearings,
                           const std::array<Vec3, 3>& points) {
  const double a2 = (points[1] - points[2]).squaredNorm();
  const double b2 = (points[0] - points[2]).squaredNorm();
  const double c2 = (points[0] - points[1]).squaredNorm();
  if (!(a2 > 0.0) || !(b2 > 0.0) || !(c2 > 0.0)) return {};
  const double ca = bearings[1].dot(bearings[2]);
  const double cb = bearings[0].dot(bearings[2]);
  const double cg = bearings[0].dot(bearings[1]);

  // Distances s2 = u s1, s3 = v s1. Eliminating s1 and u leaves a quartic in
  // v; u = N(v) / D(v).
  const double k1 = (a2 - c2) / b2;
  const Poly N = {1.0 + k1, -2.0 * k1 * cb, k1 - 1.0};
  const Poly D = {2.0 * cg, -2.0 * ca};
  const Poly E = {1.0, -2.0 * cb, 1.0};
  const Poly D2 = mul(D, D);
  Poly quartic = add(D2, mul(N, N));
  quartic = add(quartic, mul(N, D), -2.0 * cg);
  quartic = add(quartic, mul(E, D2), -c2 / b2);

  std::vector<RigidPose> out;
  for (double v : real_roots(quartic)) {
    const double e = eval(E, v);
    const double d = eval(D, v);
    if (!(e > 0.0) || std::abs(d) < 1e-14) continue;
    const double u = eval(N, v) / d;
    const double s1 = std::sqrt(b2 / e);
    const double s2 = u * s1;
    const double s3 = v * s1;
    if (!(s1 > 0.0) || !(s2 > 0.0) || !(s3 > 0.0)) continue;
    const std::array<Vec3, 3> cam = {s1 * bearings[0], s2 * bearings[1], s3 * bearings[2]};
    const auto [R, t] = fit_rigid(points, cam);
    if (!R.allFinite() || !t.allFinite()) continue;
    RigidPose pose;
    pose.R = R;
    pose.t = t;
    out.push_back(pose);
  }
  return out;
}

RigidPose refine_reprojection(const RigidPose& init, std::span<const Vec3> points,
                              std::span<const Vec2> pixels, const CameraIntrinsics& K,
                              int max_iters) {
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6d = Eigen::Matrix<double, 6, 1>;
  auto cost_of = [&](const RigidPose& pose) {
    double c = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      const Vec3 X = pose.transform(points[i]);
      if (!(X.z() > kDepthEpsilon)) return std::numeric_limits<double>::infinity();
      c += (Vec2(K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy) - pixels[i])
               .squaredNorm();
    }
    return c;
  };

  RigidPose pose = init;
  double cost = cost_of(pose);
  double mu = 1e-4;
  for (int it = 0; it < max_iters && std::isfinite(cost); ++it) {
    Mat6 H = Mat6::Zero();
    Vec6d g = Vec6d::Zero();
    for (size_t i = 0; i < points.size(); ++i) {
      const Vec3 Ra = pose.R * points[i];
      const Vec3 X = Ra + pose.t;
      const double iz = 1.0 / X.z();
      Eigen::Matrix<double, 2, 3> Jp;
      Jp << K.fx * iz, 0, -K.fx * X.x() * iz * iz, 0, K.fy * iz, -K.fy * X.y() * iz * iz;
      Eigen::Matrix<double, 2, 6> J;
      J << Jp * (-skew(Ra)), Jp;
      const Vec2 r = Vec2(K.fx * X.x() * iz + K.cx, K.fy * X.y() * iz + K.cy) - pixels[i];
      H.noalias() += J.transpose() * J;
      g.noalias() += J.transpose() * r;
    }
    bool accepted = false;
    Vec6d step = Vec6d::Zero();
    while (!accepted && mu < 1e12) {
      Mat6 A = H;
      A.diagonal() += mu * H.diagonal().cwiseMax(1e-12);
      step = A.ldlt().solve(-g);
      RigidPose trial;
      trial.R = exp_so3(step.head<3>()) * pose.R;
      trial.t = pose.t + step.tail<3>();
      const double trial_cost = cost_of(trial);
      if (trial_cost < cost) {
        pose = trial;
        cost = trial_cost;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted || step.norm() < 1e-14) break;
  }
  return pose;
}

PnpResult pnp_ransac(const TwoLayerMaps& maps, const CameraIntrinsics& K,
                     const TriangleMesh& mesh, std::uint64_t seed,
                     const PnpOptions& opts) {
  std::vector<Vec3> points;
  std::vector<Vec2> pixels;
  std::vector<Vec3> bearings;
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    const LayerPixel& px = maps.pixels[idx];
    if (!px.mask) continue;
    points.push_back(px.p0 * mesh.diameter);
    pixels.push_back(maps.center(idx));
    bearings.push_back(backproject_ray(K, pixels.back()));
  }
  const size_t n = points.size();
  if (n < 6) throw Error(ErrorKind::kNoSolution, "fewer than 6 correspondences");

  PnpResult result;
  result.correspondences = n;
  {
    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : points) mean += p;
    mean /= static_cast<double>(n);
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : points) cov += (p - mean) * (p - mean).transpose();
    const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    result.planar = es.eigenvalues()(0) <= 1e-12 * std::max(es.eigenvalues()(2), 1e-300);
  }

  auto count_inliers = [&](const RigidPose& pose) {
    size_t c = 0;
    for (size_t i = 0; i < n; ++i)
      if (reprojection_error(pose, K, points[i], pixels[i]) < opts.inlier_threshold) ++c;
    return c;
  };

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  size_t best_count = 0;
  RigidPose best;
  int needed = opts.max_iterations;
  int it = 0;
  for (; it < needed && it < opts.max_iterations; ++it) {
    std::array<size_t, 4> s;
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        s[k] = pick(rng);
        fresh = std::find(s.begin(), s.begin() + k, s[k]) == s.begin() + k;
      }
    }
    const auto sols = p3p({bearings[s[0]], bearings[s[1]], bearings[s[2]]},
                          {points[s[0]], points[s[1]], points[s[2]]});
    double best_check = std::numeric_limits<double>::infinity();
    const RigidPose* chosen = nullptr;
    for (const RigidPose& cand : sols) {
      const double e = reprojection_error(cand, K, points[s[3]], pixels[s[3]]);
      if (e < best_check) {
        best_check = e;
        chosen = &cand;
      }
    }
    if (!chosen) continue;
    const size_t count = count_inliers(*chosen);
    if (count > best_count) {
      best_count = count;
      best = *chosen;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double miss = 1.0 - std::pow(w, 4);
      if (miss <= 1e-12) {
        needed = it + 1;
      } else {
        const double k = std::log(1.0 - opts.confidence) / std::log(miss);
        needed = static_cast<int>(std::min<double>(std::ceil(k), opts.max_iterations));
      }
    }
  }
  result.iterations = it;
  if (best_count < 4) throw Error(ErrorKind::kNoSolution, "RANSAC found no consensus");

  RigidPose pose = best;
  for (int round = 0; round < 2; ++round) {
    std::vector<Vec3> in_pts;
    std::vector<Vec2> in_pix;
    for (size_t i = 0; i < n; ++i) {
      if (reprojection_error(pose, K, points[i], pixels[i]) < opts.inlier_threshold) {
        in_pts.push_back(points[i]);
        in_pix.push_back(pixels[i]);
      }
    }
    if (in_pts.size() < 4) break;
    pose = refine_reprojection(pose, in_pts, in_pix, K);
  }
  // Re-orthonormalize accumulated increments.
  const Eigen::JacobiSVD<Mat3> svd(pose.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  pose.R = svd.matrixU() * svd.matrixV().transpose();
  result.pose = pose;
  result.inliers = count_inliers(pose);
  return result;
}

}  // namespace sopose
