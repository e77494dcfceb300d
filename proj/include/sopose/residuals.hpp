#pragma once

#include <Eigen/Core>
#include <vector>

#include "sopose/geometry.hpp"
#include "sopose/layers.hpp"

namespace sopose {

// Loss weights {lambda1, lambda2, lambda3}; lambda1 = 1/f.
struct Weights {
  double lambda1 = 1.0;
  double lambda2 = 10.0;
  double lambda3 = 1.0;
  double focal = 1.0;

  static Weights defaults(double focal);
  static Weights defaults(const CameraIntrinsics& K) { return defaults(K.mean_focal()); }
  void validate() const;
};

using JacobianRows = Eigen::Matrix<double, Eigen::Dynamic, PoseParam::kSize>;

// One residual family. Each group is one (pixel, plane) pair, or one pixel for
// terms without a plane, and holds `components` signed entries.
struct ResidualBlock {
  int components = 0;
  std::vector<double> values;
  std::vector<size_t> pixel;
  std::vector<int> axis;  // -1 for per-pixel terms
  JacobianRows jacobian;  // empty unless linearized
  size_t excluded_behind = 0;
  size_t excluded_parallel = 0;

  size_t groups() const { return pixel.size(); }
  size_t rows() const { return values.size(); }
  bool empty() const { return values.empty(); }
  // Per-group L1 norm averaged over groups; 0 for an empty block.
  double l1_mean() const;
  // Mean absolute value of one component over all groups.
  double component_mean_abs(int c) const;
};

ResidualBlock res_cl3d(const RigidPose& pose, const TwoLayerMaps& maps,
                       const TriangleMesh& mesh, const CameraIntrinsics& K);
ResidualBlock res_cl2d(const RigidPose& pose, const TwoLayerMaps& maps,
                       const TriangleMesh& mesh, const CameraIntrinsics& K);
ResidualBlock res_q1(const TwoLayerMaps& pred, const TwoLayerMaps& gt);
ResidualBlock res_q2(const TwoLayerMaps& pred, const RigidPose& gt_pose,
                     const CameraIntrinsics& K, const TriangleMesh& mesh);
ResidualBlock res_corr(const RigidPose& pose, const TwoLayerMaps& maps,
                       const CameraIntrinsics& K, const TriangleMesh& mesh);

// Cross-layer terms with the rotation replaced by the reference rotation.
struct CdpnResidual {
  ResidualBlock cl3d;
  ResidualBlock cl2d;
  double loss() const { return cl3d.l1_mean() + cl2d.l1_mean(); }
};
CdpnResidual res_cdpn(const Mat3& gt_rotation, const Vec3& translation,
                      const TwoLayerMaps& maps, const CameraIntrinsics& K,
                      const TriangleMesh& mesh);

struct ResidualReport {
  ResidualBlock cl3d, cl2d, q1, q2, corr;
  double mean_cl3d = 0, mean_cl2d = 0, mean_q1 = 0, mean_q2 = 0, mean_corr = 0;
  double pose_term = 0;  // mean |corr|
  double cl_term = 0;    // lambda1 cl2d + lambda2 cl3d
  double occ_term = 0;   // lambda3 (q1 + q2)
  double total = 0;
};

ResidualReport total_objective(const RigidPose& pose, const TwoLayerMaps& pred,
                               const TwoLayerMaps& gt, const RigidPose& gt_pose,
                               const CameraIntrinsics& K, const TriangleMesh& mesh,
                               const Weights& w);

// Families that depend on the pose and can be linearized.
struct TermSelection {
  bool corr = true;
  bool cl2d = true;
  bool cl3d = true;
  bool q2 = true;
  bool cdpn = false;  // cl terms with rotation held at `reference_rotation`
  Mat3 reference_rotation = Mat3::Identity();
};

struct Linearization {
  RigidPose pose;
  ResidualBlock corr, cl2d, cl3d, q2;
};

// Residuals at param_to_pose(param) with analytic d(residual)/d(param). q2
// uses the same pose (the unknown) in place of a reference pose.
Linearization jacobian(const PoseParam& param, const TwoLayerMaps& maps,
                       const TriangleMesh& mesh, const CameraIntrinsics& K,
                       const TermSelection& terms = {});

}  // namespace sopose
