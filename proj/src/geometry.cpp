#include "sopose/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace sopose {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBehindCamera: return "behind-camera";
    case ErrorKind::kDegenerateParameterization: return "degenerate-parameterization";
    case ErrorKind::kDegenerateTranslation: return "degenerate-translation";
    case ErrorKind::kInvalidMesh: return "invalid-mesh";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNoDetection: return "no-detection";
    case ErrorKind::kNoSolution: return "no-solution";
    case ErrorKind::kUndefinedRate: return "undefined-rate";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kUsage: return "usage";
  }
  return "unknown";
}

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0, -v.z(), v.y(),
       v.z(), 0, -v.x(),
       -v.y(), v.x(), 0;
  return S;
}

}  // namespace

CameraIntrinsics::CameraIntrinsics(double fx_, double fy_, double cx_, double cy_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw Error(ErrorKind::kUsage, "focal lengths must be positive");
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 K;
  K << fx, 0, cx,
       0, fy, cy,
       0, 0, 1;
  return K;
}

Vec3 CameraIntrinsics::unproject(const Vec2& pixel) const {
  return Vec3((pixel.x() - cx) / fx, (pixel.y() - cy) / fy, 1.0);
}

RigidPose::RigidPose(const Mat3& rotation, const Vec3& translation)
    : R(rotation), t(translation) {
  if (!is_rotation(R))
    throw Error(ErrorKind::kDegenerateParameterization,
                "pose rotation is not orthonormal with det +1");
}

Eigen::Matrix<double, PoseParam::kSize, 1> PoseParam::to_vector() const {
  Eigen::Matrix<double, kSize, 1> v;
  v << r6d, uv, dist;
  return v;
}

PoseParam PoseParam::from_vector(const Eigen::Matrix<double, kSize, 1>& v) {
  PoseParam p;
  p.r6d = v.head<6>();
  p.uv = v.segment<2>(6);
  p.dist = v(8);
  return p;
}

bool BoundingCuboid::contains(const Vec3& p, double scale, double slack) const {
  const Vec3 c = center();
  const Vec3 h = scale * half_extent();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(p[i] - c[i]) > h[i] + slack) return false;
  }
  return true;
}

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  return orth <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Vec2 project(const CameraIntrinsics& K, const Vec3& p) {
  if (!(p.z() > kDepthEpsilon))
    throw Error(ErrorKind::kBehindCamera, "point has non-positive depth");
  return Vec2(K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy);
}

Vec3 backproject_ray(const CameraIntrinsics& K, const Vec2& pixel) {
  return K.unproject(pixel).normalized();
}

Mat3 r6d_to_rotation(const Vec6& r6d) {
  std::array<Mat3, 6> unused;
  return r6d_to_rotation(r6d, unused);
}

Mat3 r6d_to_rotation(const Vec6& r6d, std::array<Mat3, 6>& dR) {
  const Vec3 a = r6d.head<3>();
  const Vec3 b = r6d.tail<3>();
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 1e-9) || !(nb > 1e-9))
    throw Error(ErrorKind::kDegenerateParameterization, "zero r6d column");
  const Vec3 c1 = a / na;
  const double proj = c1.dot(b);
  const Vec3 w = b - proj * c1;
  const double nw = w.norm();
  if (!(nw > 1e-9 * nb))
    throw Error(ErrorKind::kDegenerateParameterization, "parallel r6d columns");
  const Vec3 c2 = w / nw;
  const Vec3 c3 = c1.cross(c2);

  Mat3 R;
  R << c1, c2, c3;

  const Mat3 dc1_da = (Mat3::Identity() - c1 * c1.transpose()) / na;
  const Mat3 dw_da = -(c1 * b.transpose() + proj * Mat3::Identity()) * dc1_da;
  const Mat3 dw_db = Mat3::Identity() - c1 * c1.transpose();
  const Mat3 dc2_dw = (Mat3::Identity() - c2 * c2.transpose()) / nw;
  for (int k = 0; k < 6; ++k) {
    Vec3 dc1 = Vec3::Zero();
    Vec3 dw;
    if (k < 3) {
      dc1 = dc1_da.col(k);
      dw = dw_da.col(k);
    } else {
      dw = dw_db.col(k - 3);
    }
    const Vec3 dc2 = dc2_dw * dw;
    const Vec3 dc3 = dc1.cross(c2) + c1.cross(dc2);
    dR[k] << dc1, dc2, dc3;
  }
  return R;
}

Vec6 rotation_to_r6d(const Mat3& R) {
  Vec6 r;
  r << R.col(0), R.col(1);
  return r;
}

namespace {

struct Correction {
  Mat3 R;
  Vec3 u;
  Vec3 v;
  double c;
  double norm_t;
};

Correction correction_parts(const Vec3& t) {
  const double n = t.norm();
  if (!(n > 1e-9))
    throw Error(ErrorKind::kDegenerateTranslation, "translation too small");
  Correction out;
  out.norm_t = n;
  out.u = t / n;
  out.v = Vec3(-out.u.y(), out.u.x(), 0.0);  // (0,0,1) x u
  out.c = out.u.z();
  if (!(1.0 + out.c > 1e-12))
    throw Error(ErrorKind::kDegenerateTranslation,
                "translation points away from the optical axis");
  const Mat3 V = skew(out.v);
  out.R = Mat3::Identity() + V + V * V / (1.0 + out.c);
  return out;
}

// Directional derivative of the viewing correction along dt.
Mat3 correction_derivative(const Correction& cor, const Vec3& dt) {
  const Vec3 du = (dt - cor.u * cor.u.dot(dt)) / cor.norm_t;
  const Vec3 dv(-du.y(), du.x(), 0.0);
  const double dc = du.z();
  const Mat3 V = skew(cor.v);
  const Mat3 dV = skew(dv);
  const double inv = 1.0 / (1.0 + cor.c);
  return dV + (dV * V + V * dV) * inv - V * V * (dc * inv * inv);
}

}  // namespace

Mat3 viewing_correction(const Vec3& t) { return correction_parts(t).R; }

Mat3 allo_to_ego(const Mat3& R_allo, const Vec3& t) {
  return viewing_correction(t) * R_allo;
}

Mat3 ego_to_allo(const Mat3& R_ego, const Vec3& t) {
  return viewing_correction(t).transpose() * R_ego;
}

RigidPose param_to_pose(const PoseParam& p, const CameraIntrinsics& K) {
  PoseDerivative unused;
  return param_to_pose(p, K, unused);
}

RigidPose param_to_pose(const PoseParam& p, const CameraIntrinsics& K,
                        PoseDerivative& deriv) {
  if (!(p.dist > 0.0))
    throw Error(ErrorKind::kDegenerateTranslation, "distance must be positive");
  std::array<Mat3, 6> dG;
  const Mat3 G = r6d_to_rotation(p.r6d, dG);
  const Vec3 ray = K.unproject(p.uv);
  const Vec3 t = p.dist * ray;
  const Correction cor = correction_parts(t);

  deriv.dt.setZero();
  deriv.dt(0, 6) = p.dist / K.fx;
  deriv.dt(1, 7) = p.dist / K.fy;
  deriv.dt.col(8) = ray;
  for (int k = 0; k < 6; ++k) deriv.dR[k] = cor.R * dG[k];
  for (int k = 6; k < PoseParam::kSize; ++k)
    deriv.dR[k] = correction_derivative(cor, deriv.dt.col(k)) * G;

  RigidPose pose;
  pose.R = cor.R * G;
  pose.t = t;
  return pose;
}

PoseParam pose_to_param(const RigidPose& pose, const CameraIntrinsics& K) {
  PoseParam p;
  p.uv = project(K, pose.t);
  p.dist = pose.t.z();
  p.r6d = rotation_to_r6d(ego_to_allo(pose.R, pose.t));
  return p;
}

MeshStats mesh_stats(const TriangleMesh& mesh) {
  const auto& v = mesh.vertices;
  if (v.size() < 2)
    throw Error(ErrorKind::kInvalidMesh, "mesh needs at least two vertices");

  MeshStats s;
  s.cuboid.min = v.front();
  s.cuboid.max = v.front();
  for (const Vec3& p : v) {
    if (!p.allFinite()) throw Error(ErrorKind::kInvalidMesh, "non-finite vertex");
    s.cuboid.min = s.cuboid.min.cwiseMin(p);
    s.cuboid.max = s.cuboid.max.cwiseMax(p);
  }

  // Exact diameter. Points sorted by radius about the box center; a pair can
  // only beat the current best if the sum of radii does.
  const Vec3 c = s.cuboid.center();
  std::vector<double> radius(v.size());
  for (size_t i = 0; i < v.size(); ++i) radius[i] = (v[i] - c).norm();
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return radius[a] != radius[b] ? radius[a] > radius[b] : a < b;
  });

  double best_sq = 0.0;
  double best = 0.0;
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    const double ri = radius[order[i]];
    if (ri + radius[order[i + 1]] <= best) break;
    const Vec3& pi = v[order[i]];
    for (size_t j = i + 1; j < order.size(); ++j) {
      if (ri + radius[order[j]] <= best) break;
      const double d2 = (pi - v[order[j]]).squaredNorm();
      if (d2 > best_sq) {
        best_sq = d2;
        best = std::sqrt(d2);
      }
    }
  }
  s.diameter = best;
  return s;
}

TriangleMesh make_mesh(std::vector<Vec3> vertices,
                       std::vector<std::array<int, 3>> faces) {
  TriangleMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.faces = std::move(faces);
  const int n = static_cast<int>(mesh.vertices.size());
  for (const auto& f : mesh.faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= n)
        throw Error(ErrorKind::kInvalidMesh, "face index out of range");
    }
  }
  const MeshStats s = mesh_stats(mesh);
  if (!(s.diameter > 0.0))
    throw Error(ErrorKind::kInvalidMesh, "mesh has zero diameter");
  mesh.diameter = s.diameter;
  mesh.cuboid = s.cuboid;
  return mesh;
}

double surface_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    area += 0.5 * (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
  }
  return area;
}

std::pair<Mat3, Vec3> fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size() || src.size() < 3)
    throw Error(ErrorKind::kShape, "rigid fit needs >= 3 matched points");
  Vec3 ms = Vec3::Zero(), md = Vec3::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    ms += src[i];
    md += dst[i];
  }
  ms /= static_cast<double>(src.size());
  md /= static_cast<double>(src.size());
  Mat3 H = Mat3::Zero();
  for (size_t i = 0; i < src.size(); ++i) H += (src[i] - ms) * (dst[i] - md).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 R = svd.matrixV() * D * svd.matrixU().transpose();
  return {R, md - R * ms};
}

double rotation_angle(const Mat3& Ra, const Mat3& Rb) {
  const Mat3 M = Ra.transpose() * Rb;
  const Vec3 axis(M(2, 1) - M(1, 2), M(0, 2) - M(2, 0), M(1, 0) - M(0, 1));
  const double s = 0.5 * axis.norm();
  const double c = 0.5 * (M.trace() - 1.0);
  return std::atan2(s, c);
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace sopose
