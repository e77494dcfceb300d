#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sopose/geometry.hpp"
#include "sopose/layers.hpp"
#include "sopose/residuals.hpp"

namespace sopose {

struct SolverConfig {
  int max_iters = 100;
  double lm_damping_init = 1e-3;
  double tol_step = 1e-10;
  double tol_cost = 1e-14;
  // Huber transition for pixel-valued residuals; cl3d uses irls_delta_norm
  // diameters at the current range.
  double irls_delta = 1.0;
  double irls_delta_norm = 0.01;
  Weights weights;
  bool use_weight_defaults = true;  // take weights from K at solve time
  // Drop every self-occlusion and cross-layer term.
  bool correspondence_only = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SolveIteration {
  double cost = 0.0;
  double step_norm = 0.0;
  double damping = 0.0;
  bool accepted = false;
};

struct SolveTrace {
  std::vector<SolveIteration> iterations;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  PoseParam final_param;
  RigidPose final_pose;
  bool converged = false;
  size_t excluded_behind = 0;
  size_t excluded_parallel = 0;
};

struct SolveResult {
  RigidPose pose;
  SolveTrace trace;
};

PoseParam init_pose(const TwoLayerMaps& maps, const CameraIntrinsics& K,
                    const TriangleMesh& mesh);

// IRLS cost of the solver objective at a parameter vector.
double solver_cost(const PoseParam& param, const TwoLayerMaps& maps,
                   const TriangleMesh& mesh, const CameraIntrinsics& K,
                   const SolverConfig& cfg);

SolveResult solve_lm(const TwoLayerMaps& maps, const CameraIntrinsics& K,
                     const TriangleMesh& mesh, const SolverConfig& cfg,
                     std::optional<PoseParam> init = std::nullopt);

struct NoiseSpec {
  double sigma_corr = 0.0;
  double sigma_occ = 0.0;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool is_identity() const { return sigma_corr == 0.0 && sigma_occ == 0.0 && dropout == 0.0; }
};

// The same seed draws the same standard normals for every sigma, so
// studies over a noise grid share their noise pattern.
TwoLayerMaps add_noise(const TwoLayerMaps& maps, const NoiseSpec& spec);

// Returns maps with every self-occlusion entry invalidated.
TwoLayerMaps strip_self_occlusion(const TwoLayerMaps& maps);

}  // namespace sopose
