#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <span>
#include <utility>
#include <vector>

#include "sopose/error.hpp"

namespace sopose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kDepthEpsilon = 1e-9;   // metres
inline constexpr double kRotationTolerance = 1e-9;

// Pinhole intrinsics, no distortion.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_);

  Mat3 matrix() const;
  // K^-1 (u, v, 1): the ray through a pixel with unit z-component.
  Vec3 unproject(const Vec2& pixel) const;
  double mean_focal() const { return 0.5 * (fx + fy); }
};

// Object-to-camera transform: X_cam = R X_obj + t.
struct RigidPose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3(0, 0, 1);

  RigidPose() = default;
  RigidPose(const Mat3& rotation, const Vec3& translation);

  Vec3 transform(const Vec3& p) const { return R * p + t; }
  Vec3 inverse_transform(const Vec3& x) const { return R.transpose() * (x - t); }
};

// Solver unknowns: allocentric 6D rotation, projected origin and depth.
struct PoseParam {
  Vec6 r6d = (Vec6() << 1, 0, 0, 0, 1, 0).finished();
  Vec2 uv = Vec2::Zero();
  double dist = 1.0;

  static constexpr int kSize = 9;
  Eigen::Matrix<double, kSize, 1> to_vector() const;
  static PoseParam from_vector(const Eigen::Matrix<double, kSize, 1>& v);
};

// Derivatives of (R, t) with respect to the nine PoseParam entries, ordered
// r6d[0..5], u, v, dist.
struct PoseDerivative {
  std::array<Mat3, PoseParam::kSize> dR;
  Eigen::Matrix<double, 3, PoseParam::kSize> dt;
};

struct BoundingCuboid {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 half_extent() const { return 0.5 * (max - min); }
  // Closed containment after inflating about the center by `scale` and
  // padding every side by `slack`.
  bool contains(const Vec3& p, double scale = 1.0, double slack = 0.0) const;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  double diameter = 0.0;
  BoundingCuboid cuboid;
};

struct MeshStats {
  double diameter = 0.0;
  BoundingCuboid cuboid;
};

bool is_rotation(const Mat3& R, double tol = kRotationTolerance);

Vec2 project(const CameraIntrinsics& K, const Vec3& p);
Vec3 backproject_ray(const CameraIntrinsics& K, const Vec2& pixel);

Mat3 r6d_to_rotation(const Vec6& r6d);
Vec6 rotation_to_r6d(const Mat3& R);
// Gram-Schmidt with derivatives of R with respect to each r6d entry.
Mat3 r6d_to_rotation(const Vec6& r6d, std::array<Mat3, 6>& dR);

// Minimal rotation carrying the optical axis onto t / |t|.
Mat3 viewing_correction(const Vec3& t);
Mat3 allo_to_ego(const Mat3& R_allo, const Vec3& t);
Mat3 ego_to_allo(const Mat3& R_ego, const Vec3& t);

// Translation decodes along the ray through uv with t_z = dist.
RigidPose param_to_pose(const PoseParam& p, const CameraIntrinsics& K);
RigidPose param_to_pose(const PoseParam& p, const CameraIntrinsics& K,
                        PoseDerivative& deriv);
PoseParam pose_to_param(const RigidPose& pose, const CameraIntrinsics& K);

MeshStats mesh_stats(const TriangleMesh& mesh);
// Validates topology and fills diameter and cuboid.
TriangleMesh make_mesh(std::vector<Vec3> vertices,
                       std::vector<std::array<int, 3>> faces);

double surface_area(const TriangleMesh& mesh);

// Least-squares rigid fit dst ~ R src + t (Kabsch, det(R) = +1).
std::pair<Mat3, Vec3> fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst);

// Geodesic angle between two rotations, radians.
double rotation_angle(const Mat3& Ra, const Mat3& Rb);
Mat3 axis_angle(const Vec3& axis, double angle);

}  // namespace sopose
