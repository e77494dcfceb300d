#include "sopose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sopose/primitives.hpp"

namespace sopose {

void SymmetrySet::validate() const {
  bool has_identity = false;
  for (const Mat3& S : discrete) {
    if (!is_rotation(S, 1e-6))
      throw Error(ErrorKind::kParse, "symmetry matrix is not a rotation");
    if ((S - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9) has_identity = true;
  }
  if (!has_identity) throw Error(ErrorKind::kParse, "symmetry set must contain identity");
  for (const Vec3& a : continuous_axes) {
    if (std::abs(a.norm() - 1.0) > 1e-6)
      throw Error(ErrorKind::kParse, "symmetry axis must be unit length");
  }
}

std::vector<Mat3> SymmetrySet::expand(int steps) const {
  std::vector<Mat3> out = discrete;
  for (const Vec3& axis : continuous_axes) {
    for (const Mat3& S : discrete) {
      for (int i = 1; i < steps; ++i)
        out.push_back(S * axis_angle(axis, 2.0 * M_PI * i / steps));
    }
  }
  return out;
}

std::vector<Vec3> model_points(const TriangleMesh& mesh, std::uint64_t seed) {
  if (mesh.vertices.size() >= kModelPointCount || mesh.faces.empty()) return mesh.vertices;
  return sample_surface(mesh, kModelPointCount, seed);
}

namespace {

// Uniform grid for exact nearest-neighbour queries.
class PointGrid {
 public:
  explicit PointGrid(std::vector<Vec3> pts) : pts_(std::move(pts)) {
    lo_ = pts_.front();
    Vec3 hi = pts_.front();
    for (const Vec3& p : pts_) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 ext = hi - lo_;
    const double n = static_cast<double>(pts_.size());
    const double largest = std::max(ext.maxCoeff(), 1e-12);
    const double volume = std::max(ext.x(), largest * 1e-3) *
                          std::max(ext.y(), largest * 1e-3) *
                          std::max(ext.z(), largest * 1e-3);
    cell_ = std::max(std::cbrt(2.0 * volume / n), largest / 256.0);
    for (int i = 0; i < 3; ++i) dims_[i] = static_cast<int>(ext[i] / cell_) + 1;

    std::vector<size_t> counts(num_cells() + 1, 0);
    std::vector<size_t> cell_of(pts_.size());
    for (size_t i = 0; i < pts_.size(); ++i) {
      cell_of[i] = flat(cell_coords(pts_[i]));
      ++counts[cell_of[i] + 1];
    }
    for (size_t c = 1; c < counts.size(); ++c) counts[c] += counts[c - 1];
    start_ = counts;
    items_.resize(pts_.size());
    for (size_t i = 0; i < pts_.size(); ++i) items_[counts[cell_of[i]]++] = i;
  }

  double nearest(const Vec3& q) const {
    const std::array<int, 3> c = raw_coords(q);
    int rmax = 0;
    for (int i = 0; i < 3; ++i) rmax = std::max({rmax, std::abs(c[i]), std::abs(dims_[i] - 1 - c[i])});
    double best_sq = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= rmax; ++r) {
      for (int dx = -r; dx <= r; ++dx) {
        const int x = c[0] + dx;
        if (x < 0 || x >= dims_[0]) continue;
        for (int dy = -r; dy <= r; ++dy) {
          const int y = c[1] + dy;
          if (y < 0 || y >= dims_[1]) continue;
          const bool edge = std::abs(dx) == r || std::abs(dy) == r;
          for (int dz = -r; dz <= r; dz += edge ? 1 : std::max(1, 2 * r)) {
            const int z = c[2] + dz;
            if (z < 0 || z >= dims_[2]) continue;
            const size_t cell = flat({x, y, z});
            for (size_t k = start_[cell]; k < start_[cell + 1]; ++k)
              best_sq = std::min(best_sq, (pts_[items_[k]] - q).squaredNorm());
          }
        }
      }
      const double reach = r * cell_;
      if (best_sq <= reach * reach) break;
    }
    return std::sqrt(best_sq);
  }

 private:
  size_t num_cells() const {
    return static_cast<size_t>(dims_[0]) * dims_[1] * dims_[2];
  }
  std::array<int, 3> raw_coords(const Vec3& p) const {
    std::array<int, 3> c;
    for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::floor((p[i] - lo_[i]) / cell_));
    return c;
  }
  std::array<int, 3> cell_coords(const Vec3& p) const {
    std::array<int, 3> c = raw_coords(p);
    for (int i = 0; i < 3; ++i) c[i] = std::clamp(c[i], 0, dims_[i] - 1);
    return c;
  }
  size_t flat(const std::array<int, 3>& c) const {
    return (static_cast<size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
  }

  std::vector<Vec3> pts_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<size_t> start_;
  std::vector<size_t> items_;
};

void require_points(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorKind::kInvalidMesh, "no model points");
}

}  // namespace

double add(const RigidPose& est, const RigidPose& gt, std::span<const Vec3> points) {
  require_points(points);
  double sum = 0.0;
  for (const Vec3& p : points) sum += (est.transform(p) - gt.transform(p)).norm();
  return sum / static_cast<double>(points.size());
}

double add(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh) {
  return add(est, gt, model_points(mesh));
}

double add_s(const RigidPose& est, const RigidPose& gt, std::span<const Vec3> points) {
  require_points(points);
  std::vector<Vec3> target;
  target.reserve(points.size());
  for (const Vec3& p : points) target.push_back(gt.transform(p));
  const PointGrid grid(std::move(target));
  double sum = 0.0;
  for (const Vec3& p : points) sum += grid.nearest(est.transform(p));
  return sum / static_cast<double>(points.size());
}

double add_s(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh) {
  return add_s(est, gt, model_points(mesh));
}

double add_sym(const RigidPose& est, const RigidPose& gt, std::span<const Vec3> points,
               const SymmetrySet& sym) {
  double best = std::numeric_limits<double>::infinity();
  for (const Mat3& S : sym.expand(bop::kContinuousSymmetrySteps)) {
    RigidPose g;
    g.R = gt.R * S;
    g.t = gt.t;
    best = std::min(best, add(est, g, points));
  }
  return best;
}

double pass_rate_add(std::span<const double> errors, double diameter, double frac) {
  if (errors.empty()) throw Error(ErrorKind::kUndefinedRate, "no errors to rate");
  if (!(frac > 0.0) || !(diameter > 0.0))
    throw Error(ErrorKind::kUsage, "threshold fraction and diameter must be positive");
  const double th = frac * diameter;
  const auto pass = std::count_if(errors.begin(), errors.end(), [&](double e) { return e < th; });
  return static_cast<double>(pass) / static_cast<double>(errors.size());
}

double rotation_error_deg(const RigidPose& est, const RigidPose& gt) {
  return rotation_angle(est.R, gt.R) * 180.0 / M_PI;
}

double translation_error(const RigidPose& est, const RigidPose& gt) {
  return (est.t - gt.t).norm();
}

bool deg_cm(const RigidPose& est, const RigidPose& gt, double n_deg, double n_cm) {
  return rotation_error_deg(est, gt) < n_deg && translation_error(est, gt) * 100.0 < n_cm;
}

double auc(std::span<const double> errors, double max_threshold) {
  if (errors.empty()) throw Error(ErrorKind::kUndefinedRate, "no errors for AUC");
  if (!(max_threshold > 0.0)) throw Error(ErrorKind::kUsage, "AUC threshold must be positive");
  double sum = 0.0;
  for (double e : errors) sum += max_threshold - std::clamp(e, 0.0, max_threshold);
  return sum / (max_threshold * static_cast<double>(errors.size()));
}

std::vector<double> vsd_multi(const RigidPose& est, const RigidPose& gt,
                              const TriangleMesh& mesh, const CameraIntrinsics& K,
                              const RenderConfig& cfg, std::span<const double> taus,
                              double delta, VsdDiagnostics* diag) {
  const VisibleLayer re = rasterize_visible(mesh, est, K, cfg);
  const VisibleLayer rg = rasterize_visible(mesh, gt, K, cfg);
  // The ground-truth render stands in for the test depth image.
  size_t uni = 0;
  size_t inter = 0;
  std::vector<size_t> bad(taus.size(), 0);
  for (size_t i = 0; i < re.mask.size(); ++i) {
    const bool vis_gt = rg.mask[i];
    bool vis_est = re.mask[i] && (!rg.mask[i] || re.depth[i] - rg.depth[i] <= delta);
    vis_est = vis_est || (vis_gt && re.mask[i]);
    if (!vis_gt && !vis_est) continue;
    ++uni;
    if (vis_gt && vis_est) {
      ++inter;
      const double diff = std::abs(re.depth[i] - rg.depth[i]);
      for (size_t k = 0; k < taus.size(); ++k)
        if (diff > taus[k]) ++bad[k];
    }
  }
  if (diag) {
    diag->union_pixels = uni;
    diag->overlap_pixels = inter;
    diag->empty_overlap = uni == 0;
  }
  std::vector<double> out(taus.size(), 1.0);
  if (uni == 0) return out;
  for (size_t k = 0; k < taus.size(); ++k)
    out[k] = static_cast<double>(bad[k] + (uni - inter)) / static_cast<double>(uni);
  return out;
}

double vsd(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
           const CameraIntrinsics& K, const RenderConfig& cfg, double tau, double delta,
           VsdDiagnostics* diag) {
  const double taus[] = {tau};
  return vsd_multi(est, gt, mesh, K, cfg, taus, delta, diag).front();
}

double mssd(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
            const SymmetrySet& sym) {
  double best = std::numeric_limits<double>::infinity();
  for (const Mat3& S : sym.expand(bop::kContinuousSymmetrySteps)) {
    const Mat3 Rg = gt.R * S;
    double worst = 0.0;
    for (const Vec3& v : mesh.vertices)
      worst = std::max(worst, (est.transform(v) - (Rg * v + gt.t)).norm());
    best = std::min(best, worst);
  }
  return best;
}

double mspd(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
            const SymmetrySet& sym, const CameraIntrinsics& K) {
  double best = std::numeric_limits<double>::infinity();
  for (const Mat3& S : sym.expand(bop::kContinuousSymmetrySteps)) {
    const Mat3 Rg = gt.R * S;
    double worst = 0.0;
    try {
      for (const Vec3& v : mesh.vertices)
        worst = std::max(worst, (project(K, est.transform(v)) - project(K, Rg * v + gt.t)).norm());
    } catch (const Error&) {
      worst = std::numeric_limits<double>::infinity();
    }
    best = std::min(best, worst);
  }
  return best;
}

BopErrors bop_errors(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
                     const SymmetrySet& sym, const CameraIntrinsics& K,
                     const RenderConfig& cfg) {
  BopErrors e;
  e.diameter = mesh.diameter;
  std::vector<double> taus;
  for (double f : bop::kVsdTaus) taus.push_back(f * mesh.diameter);
  e.vsd = vsd_multi(est, gt, mesh, K, cfg, taus, bop::kVsdDelta);
  e.mssd = mssd(est, gt, mesh, sym);
  e.mspd = mspd(est, gt, mesh, sym, K);
  return e;
}

ArScores ar_scores(std::span<const BopErrors> results, int image_width) {
  if (results.empty()) throw Error(ErrorKind::kUndefinedRate, "no scenes for AR");
  const double px_scale = image_width / bop::kMspdReferenceWidth;
  double vsd_hits = 0, mssd_hits = 0, mspd_hits = 0;
  for (const BopErrors& r : results) {
    if (r.vsd.size() != bop::kVsdTaus.size())
      throw Error(ErrorKind::kShape, "VSD errors must cover every tau");
    for (double e : r.vsd)
      for (double th : bop::kVsdThresholds) vsd_hits += e < th ? 1 : 0;
    for (double th : bop::kMssdThresholds) mssd_hits += r.mssd < th * r.diameter ? 1 : 0;
    for (double th : bop::kMspdThresholds) mspd_hits += r.mspd < th * px_scale ? 1 : 0;
  }
  const double n = static_cast<double>(results.size());
  ArScores s;
  s.vsd = vsd_hits / (n * bop::kVsdTaus.size() * bop::kVsdThresholds.size());
  s.mssd = mssd_hits / (n * bop::kMssdThresholds.size());
  s.mspd = mspd_hits / (n * bop::kMspdThresholds.size());
  s.mean = (s.vsd + s.mssd + s.mspd) / 3.0;
  return s;
}

}  // namespace sopose
