#include "sopose/residuals.hpp"

#include <cmath>

namespace sopose {

Weights Weights::defaults(double focal) {
  if (!(focal > 0.0)) throw Error(ErrorKind::kUsage, "focal length must be positive");
  Weights w;
  w.focal = focal;
  w.lambda1 = 1.0 / focal;
  w.lambda2 = 10.0;
  w.lambda3 = 1.0;
  return w;
}

void Weights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda3 >= 0.0))
    throw Error(ErrorKind::kUsage, "loss weights must be nonnegative");
}

double ResidualBlock::l1_mean() const {
  if (pixel.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += std::abs(v);
  return sum / static_cast<double>(pixel.size());
}

double ResidualBlock::component_mean_abs(int c) const {
  if (pixel.empty()) return 0.0;
  double sum = 0.0;
  for (size_t g = 0; g < pixel.size(); ++g)
    sum += std::abs(values[g * components + c]);
  return sum / static_cast<double>(pixel.size());
}

namespace {

using Row = Eigen::Matrix<double, 1, PoseParam::kSize>;

// Derivative source: either none (values only) or the per-parameter
// derivatives of R and t.
struct PoseContext {
  Mat3 R;
  Vec3 t;
  const PoseDerivative* deriv = nullptr;
};

class BlockBuilder {
 public:
  BlockBuilder(int components, bool with_jacobian) : with_jac_(with_jacobian) {
    block_.components = components;
  }

  // `entries` residual values and, when linearizing, one row per value.
  template <int N>
  void add(size_t pixel, int axis, const Eigen::Matrix<double, N, 1>& value,
           const Eigen::Matrix<double, N, PoseParam::kSize>* jac) {
    block_.pixel.push_back(pixel);
    block_.axis.push_back(axis);
    for (int i = 0; i < N; ++i) block_.values.push_back(value[i]);
    if (with_jac_) {
      for (int i = 0; i < N; ++i) rows_.push_back(jac->row(i));
    }
  }

  ResidualBlock& block() { return block_; }

  ResidualBlock finish() {
    if (with_jac_) {
      block_.jacobian.resize(static_cast<Eigen::Index>(rows_.size()), PoseParam::kSize);
      for (size_t i = 0; i < rows_.size(); ++i)
        block_.jacobian.row(static_cast<Eigen::Index>(i)) = rows_[i];
    }
    return std::move(block_);
  }

 private:
  bool with_jac_;
  ResidualBlock block_;
  std::vector<Row> rows_;
};

Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraIntrinsics& K, const Vec3& X) {
  const double iz = 1.0 / X.z();
  Eigen::Matrix<double, 2, 3> J;
  J << K.fx * iz, 0, -K.fx * X.x() * iz * iz,
       0, K.fy * iz, -K.fy * X.y() * iz * iz;
  return J;
}

Vec2 project_unchecked(const CameraIntrinsics& K, const Vec3& X) {
  return Vec2(K.fx * X.x() / X.z() + K.cx, K.fy * X.y() / X.z() + K.cy);
}

// Derivative of R a + t along every parameter.
Eigen::Matrix<double, 3, PoseParam::kSize> point_derivative(const PoseDerivative& d,
                                                            const Vec3& a) {
  Eigen::Matrix<double, 3, PoseParam::kSize> J;
  for (int k = 0; k < PoseParam::kSize; ++k) J.col(k) = d.dR[k] * a + d.dt.col(k);
  return J;
}

void check_maps(const TwoLayerMaps& maps) {
  if (maps.width <= 0 || maps.height <= 0 ||
      maps.pixels.size() != static_cast<size_t>(maps.width) * maps.height)
    throw Error(ErrorKind::kShape, "map dimensions do not match pixel storage");
}

double checked_diameter(const TriangleMesh& mesh) {
  if (!(mesh.diameter > 0.0))
    throw Error(ErrorKind::kInvalidMesh, "mesh diameter must be positive");
  return mesh.diameter;
}

ResidualBlock cl3d_impl(const PoseContext& pc, const TwoLayerMaps& maps, double diam) {
  check_maps(maps);
  BlockBuilder b(3, pc.deriv != nullptr);
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    const LayerPixel& px = maps.pixels[idx];
    if (!px.mask) continue;
    const Vec3 p0 = px.p0 * diam;
    const Vec3 P = pc.R * p0 + pc.t;
    for (int k = 0; k < 3; ++k) {
      if (!px.q_valid[k]) continue;
      const Vec3 q0 = lift_plane_point(px.q0[k], k) * diam;
      const Vec3 Q = pc.R * q0 + pc.t;
      const Vec3 m = pc.R.col(k);
      const double mt = m.dot(pc.t);
      const double mp = m.dot(P);
      const Vec3 r = mt * P - mp * Q;
      if (!pc.deriv) {
        b.add<3>(idx, k, r, nullptr);
        continue;
      }
      const auto dP = point_derivative(*pc.deriv, p0);
      const auto dQ = point_derivative(*pc.deriv, q0);
      Eigen::Matrix<double, 3, PoseParam::kSize> J;
      for (int j = 0; j < PoseParam::kSize; ++j) {
        const Vec3 dm = pc.deriv->dR[j].col(k);
        const double dmt = dm.dot(pc.t) + m.dot(pc.deriv->dt.col(j));
        const double dmp = dm.dot(P) + m.dot(dP.col(j));
        J.col(j) = dmt * P + mt * dP.col(j) - dmp * Q - mp * dQ.col(j);
      }
      b.add<3>(idx, k, r, &J);
    }
  }
  return b.finish();
}

ResidualBlock cl2d_impl(const PoseContext& pc, const TwoLayerMaps& maps,
                        const CameraIntrinsics& K, double diam) {
  check_maps(maps);
  BlockBuilder b(4, pc.deriv != nullptr);
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    const LayerPixel& px = maps.pixels[idx];
    if (!px.mask) continue;
    const Vec2 rho = maps.center(idx);
    const Vec3 p0 = px.p0 * diam;
    const Vec3 P = pc.R * p0 + pc.t;
    for (int k = 0; k < 3; ++k) {
      if (!px.q_valid[k]) continue;
      const Vec3 q0 = lift_plane_point(px.q0[k], k) * diam;
      const Vec3 Q = pc.R * q0 + pc.t;
      if (!(P.z() > kDepthEpsilon) || !(Q.z() > kDepthEpsilon)) {
        ++b.block().excluded_behind;
        continue;
      }
      const Vec2 pq = project_unchecked(K, Q);
      const Vec2 pp = project_unchecked(K, P);
      Eigen::Matrix<double, 4, 1> r;
      r << pq - pp, pq - rho;
      if (!pc.deriv) {
        b.add<4>(idx, k, r, nullptr);
        continue;
      }
      const Eigen::Matrix<double, 2, PoseParam::kSize> dq =
          projection_jacobian(K, Q) * point_derivative(*pc.deriv, q0);
      const Eigen::Matrix<double, 2, PoseParam::kSize> dp =
          projection_jacobian(K, P) * point_derivative(*pc.deriv, p0);
      Eigen::Matrix<double, 4, PoseParam::kSize> J;
      J << dq - dp, dq;
      b.add<4>(idx, k, r, &J);
    }
  }
  return b.finish();
}

ResidualBlock q2_impl(const PoseContext& pc, const TwoLayerMaps& maps,
                      const CameraIntrinsics& K, double diam) {
  check_maps(maps);
  BlockBuilder b(2, pc.deriv != nullptr);
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    const LayerPixel& px = maps.pixels[idx];
    if (!px.mask) continue;
    const Vec2 rho = maps.center(idx);
    for (int k = 0; k < 3; ++k) {
      if (!px.q_valid[k]) continue;
      const Vec3 q0 = lift_plane_point(px.q0[k], k) * diam;
      const Vec3 Q = pc.R * q0 + pc.t;
      if (!(Q.z() > kDepthEpsilon)) {
        ++b.block().excluded_behind;
        continue;
      }
      const Vec2 r = project_unchecked(K, Q) - rho;
      if (!pc.deriv) {
        b.add<2>(idx, k, r, nullptr);
        continue;
      }
      const Eigen::Matrix<double, 2, PoseParam::kSize> J =
          projection_jacobian(K, Q) * point_derivative(*pc.deriv, q0);
      b.add<2>(idx, k, r, &J);
    }
  }
  return b.finish();
}

ResidualBlock corr_impl(const PoseContext& pc, const TwoLayerMaps& maps,
                        const CameraIntrinsics& K, double diam) {
  check_maps(maps);
  BlockBuilder b(2, pc.deriv != nullptr);
  for (size_t idx = 0; idx < maps.pixels.size(); ++idx) {
    const LayerPixel& px = maps.pixels[idx];
    if (!px.mask) continue;
    const Vec3 p0 = px.p0 * diam;
    const Vec3 P = pc.R * p0 + pc.t;
    if (!(P.z() > kDepthEpsilon)) {
      ++b.block().excluded_behind;
      continue;
    }
    const Vec2 r = project_unchecked(K, P) - maps.center(idx);
    if (!pc.deriv) {
      b.add<2>(idx, -1, r, nullptr);
      continue;
    }
    const Eigen::Matrix<double, 2, PoseParam::kSize> J =
        projection_jacobian(K, P) * point_derivative(*pc.deriv, p0);
    b.add<2>(idx, -1, r, &J);
  }
  return b.finish();
}

PoseContext values_only(const RigidPose& pose) { return PoseContext{pose.R, pose.t, nullptr}; }

}  // namespace

ResidualBlock res_cl3d(const RigidPose& pose, const TwoLayerMaps& maps,
                       const TriangleMesh& mesh, const CameraIntrinsics&) {
  return cl3d_impl(values_only(pose), maps, checked_diameter(mesh));
}

ResidualBlock res_cl2d(const RigidPose& pose, const TwoLayerMaps& maps,
                       const TriangleMesh& mesh, const CameraIntrinsics& K) {
  return cl2d_impl(values_only(pose), maps, K, checked_diameter(mesh));
}

ResidualBlock res_q1(const TwoLayerMaps& pred, const TwoLayerMaps& gt) {
  check_maps(pred);
  check_maps(gt);
  if (pred.width != gt.width || pred.height != gt.height)
    throw Error(ErrorKind::kShape, "predicted and reference maps differ in size");
  BlockBuilder b(2, false);
  for (size_t idx = 0; idx < pred.pixels.size(); ++idx) {
    const LayerPixel& p = pred.pixels[idx];
    const LayerPixel& g = gt.pixels[idx];
    for (int k = 0; k < 3; ++k) {
      if (!p.q_valid[k]) continue;
      if (!g.q_valid[k])
        throw Error(ErrorKind::kShape,
                    "predicted intersection has no reference counterpart");
      const Vec2 r = p.q0[k] - g.q0[k];
      b.add<2>(idx, k, r, nullptr);
    }
  }
  return b.finish();
}

ResidualBlock res_q2(const TwoLayerMaps& pred, const RigidPose& gt_pose,
                     const CameraIntrinsics& K, const TriangleMesh& mesh) {
  return q2_impl(values_only(gt_pose), pred, K, checked_diameter(mesh));
}

ResidualBlock res_corr(const RigidPose& pose, const TwoLayerMaps& maps,
                       const CameraIntrinsics& K, const TriangleMesh& mesh) {
  return corr_impl(values_only(pose), maps, K, checked_diameter(mesh));
}

CdpnResidual res_cdpn(const Mat3& gt_rotation, const Vec3& translation,
                      const TwoLayerMaps& maps, const CameraIntrinsics& K,
                      const TriangleMesh& mesh) {
  const double diam = checked_diameter(mesh);
  const PoseContext pc{gt_rotation, translation, nullptr};
  return CdpnResidual{cl3d_impl(pc, maps, diam), cl2d_impl(pc, maps, K, diam)};
}

ResidualReport total_objective(const RigidPose& pose, const TwoLayerMaps& pred,
                               const TwoLayerMaps& gt, const RigidPose& gt_pose,
                               const CameraIntrinsics& K, const TriangleMesh& mesh,
                               const Weights& w) {
  w.validate();
  ResidualReport rep;
  rep.cl3d = res_cl3d(pose, pred, mesh, K);
  rep.cl2d = res_cl2d(pose, pred, mesh, K);
  rep.q1 = res_q1(pred, gt);
  rep.q2 = res_q2(pred, gt_pose, K, mesh);
  rep.corr = res_corr(pose, pred, K, mesh);
  rep.mean_cl3d = rep.cl3d.l1_mean();
  rep.mean_cl2d = rep.cl2d.l1_mean();
  rep.mean_q1 = rep.q1.l1_mean();
  rep.mean_q2 = rep.q2.l1_mean();
  rep.mean_corr = rep.corr.l1_mean();
  rep.pose_term = rep.mean_corr;
  rep.cl_term = w.lambda1 * rep.mean_cl2d + w.lambda2 * rep.mean_cl3d;
  rep.occ_term = w.lambda3 * (rep.mean_q1 + rep.mean_q2);
  rep.total = rep.pose_term + rep.cl_term + rep.occ_term;
  return rep;
}

Linearization jacobian(const PoseParam& param, const TwoLayerMaps& maps,
                       const TriangleMesh& mesh, const CameraIntrinsics& K,
                       const TermSelection& terms) {
  const double diam = checked_diameter(mesh);
  PoseDerivative deriv;
  Linearization lin;
  lin.pose = param_to_pose(param, K, deriv);
  const PoseContext full{lin.pose.R, lin.pose.t, &deriv};

  PoseDerivative fixed_rotation = deriv;
  for (Mat3& m : fixed_rotation.dR) m.setZero();
  const PoseContext cl_ctx = terms.cdpn
                                 ? PoseContext{terms.reference_rotation, lin.pose.t,
                                               &fixed_rotation}
                                 : full;

  if (terms.corr) lin.corr = corr_impl(full, maps, K, diam);
  if (terms.cl2d) lin.cl2d = cl2d_impl(cl_ctx, maps, K, diam);
  if (terms.cl3d) lin.cl3d = cl3d_impl(cl_ctx, maps, diam);
  if (terms.q2) lin.q2 = q2_impl(full, maps, K, diam);
  return lin;
}

}  // namespace sopose
