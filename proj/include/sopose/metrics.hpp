#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sopose/geometry.hpp"
#include "sopose/layers.hpp"

namespace sopose {

// Object symmetries: discrete rotations (identity included) and axes of
// continuous rotational symmetry, all in the object frame.
struct SymmetrySet {
  std::vector<Mat3> discrete = {Mat3::Identity()};
  std::vector<Vec3> continuous_axes;

  void validate() const;
  // Discrete set combined with each continuous axis sampled in `steps`.
  std::vector<Mat3> expand(int steps = 360) const;
};

// Evaluation constants, versioned with the BOP 2019 toolkit defaults.
namespace bop {
inline constexpr int kConstantsVersion = 1;
inline constexpr double kVsdDelta = 0.015;  // metres
inline constexpr std::array<double, 10> kVsdTaus = {0.05, 0.10, 0.15, 0.20, 0.25,
                                                    0.30, 0.35, 0.40, 0.45, 0.50};  // x diameter
inline constexpr std::array<double, 10> kVsdThresholds = kVsdTaus;
inline constexpr std::array<double, 10> kMssdThresholds = kVsdTaus;  // x diameter
inline constexpr std::array<double, 10> kMspdThresholds = {5, 10, 15, 20, 25,
                                                           30, 35, 40, 45, 50};  // px at 640 wide
inline constexpr double kMspdReferenceWidth = 640.0;
inline constexpr int kContinuousSymmetrySteps = 360;
}  // namespace bop

inline constexpr double kAucMaxThreshold = 0.10;  // metres
inline constexpr size_t kModelPointCount = 500;

// Mesh vertices when there are at least 500, otherwise 500 surface samples.
std::vector<Vec3> model_points(const TriangleMesh& mesh, std::uint64_t seed = 0);

double add(const RigidPose& est, const RigidPose& gt, std::span<const Vec3> points);
double add(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh);
// Closest-point form.
double add_s(const RigidPose& est, const RigidPose& gt, std::span<const Vec3> points);
double add_s(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh);
// Minimum of add over the symmetry-expanded ground truth.
double add_sym(const RigidPose& est, const RigidPose& gt, std::span<const Vec3> points,
               const SymmetrySet& sym);

double pass_rate_add(std::span<const double> errors, double diameter, double frac);

double rotation_error_deg(const RigidPose& est, const RigidPose& gt);
double translation_error(const RigidPose& est, const RigidPose& gt);
bool deg_cm(const RigidPose& est, const RigidPose& gt, double n_deg, double n_cm);

// Area under accuracy-vs-threshold on [0, max_threshold], normalized.
double auc(std::span<const double> errors, double max_threshold = kAucMaxThreshold);

struct VsdDiagnostics {
  size_t union_pixels = 0;
  size_t overlap_pixels = 0;
  bool empty_overlap = false;
};

// tau and delta in metres.
double vsd(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
           const CameraIntrinsics& K, const RenderConfig& cfg, double tau, double delta,
           VsdDiagnostics* diag = nullptr);
// Errors for several tau sharing one pair of renders.
std::vector<double> vsd_multi(const RigidPose& est, const RigidPose& gt,
                              const TriangleMesh& mesh, const CameraIntrinsics& K,
                              const RenderConfig& cfg, std::span<const double> taus,
                              double delta, VsdDiagnostics* diag = nullptr);
double mssd(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
            const SymmetrySet& sym);
double mspd(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
            const SymmetrySet& sym, const CameraIntrinsics& K);

struct BopErrors {
  std::vector<double> vsd;  // one per bop::kVsdTaus entry
  double mssd = 0.0;
  double mspd = 0.0;
  double diameter = 0.0;
};

BopErrors bop_errors(const RigidPose& est, const RigidPose& gt, const TriangleMesh& mesh,
                     const SymmetrySet& sym, const CameraIntrinsics& K,
                     const RenderConfig& cfg);

struct ArScores {
  double vsd = 0.0;
  double mssd = 0.0;
  double mspd = 0.0;
  double mean = 0.0;
};

ArScores ar_scores(std::span<const BopErrors> results, int image_width);

}  // namespace sopose
