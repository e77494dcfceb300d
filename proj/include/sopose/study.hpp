#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sopose/geometry.hpp"
#include "sopose/layers.hpp"
#include "sopose/solver.hpp"

namespace sopose {

// Uniform rotation, t_z in [0.5, 2] x 4 diameters, projected origin uniform
// over the central 60% of the image.
RigidPose sample_scene_pose(const TriangleMesh& mesh, const CameraIntrinsics& K,
                            const RenderConfig& cfg, std::mt19937_64& rng);
Mat3 random_rotation(std::mt19937_64& rng);

using PoseSampler = std::function<RigidPose(const TriangleMesh&, const CameraIntrinsics&,
                                            const RenderConfig&, std::mt19937_64&)>;

enum class StudyMethod : int { kTwoLayer = 0, kCorrespondenceOnly = 1, kPnpRansac = 2 };
inline constexpr int kStudyMethodCount = 3;
const char* to_string(StudyMethod m);

struct StudyMesh {
  std::string name;
  TriangleMesh mesh;
};

struct StudyConfig {
  std::vector<double> sigmas = {0.0, 0.005, 0.01, 0.02};
  int scenes = 20;  // spread round-robin over the meshes
  int trials = 3;   // noise draws per scene and sigma
  double dropout = 0.0;
  std::uint64_t seed = 7;
  CameraIntrinsics K{120.0, 120.0, 32.0, 32.0};
  RenderConfig render;
  SolverConfig solver;
  double directional_sigma = 0.01;
  int bootstrap_resamples = 200;

  void validate() const;
};

struct MethodError {
  bool ok = false;
  double rot_deg = 0.0;
  double trans_m = 0.0;
  double add_m = 0.0;
};

// One scene (mesh + pose) at one sigma; errors per method and trial.
struct StudyCell {
  int scene = 0;
  int mesh = 0;
  double sigma = 0.0;
  std::array<std::vector<MethodError>, kStudyMethodCount> trials;
  // Median ADD over trials, +inf when every trial failed.
  std::array<double, kStudyMethodCount> median_add{};
};

struct MethodSummary {
  double median_rot = 0, mean_rot = 0;
  double median_trans = 0, mean_trans = 0;
  double median_add = 0, mean_add = 0;
  int failures = 0;
  int samples = 0;
};

struct StudyResult {
  std::vector<std::string> mesh_names;
  std::vector<RigidPose> scene_poses;
  std::vector<int> scene_mesh;
  std::vector<double> sigmas;
  std::vector<StudyCell> cells;  // sigma-major, then scene
  // summary[sigma][method]
  std::vector<std::array<MethodSummary, kStudyMethodCount>> summary;
  std::array<bool, kStudyMethodCount> monotone{};
  double directional_fraction = 0.0;  // share of cells where two-layer <= corr-only
  int directional_cells = 0;
  int scene_failures = 0;  // scenes whose maps were empty
};

StudyResult noise_study(const std::vector<StudyMesh>& meshes, const PoseSampler& sampler,
                        const StudyConfig& cfg);

// Recompute the per-sigma summaries from the cells.
std::vector<std::array<MethodSummary, kStudyMethodCount>> summarize_cells(
    const std::vector<StudyCell>& cells, const std::vector<double>& sigmas, int scenes);

std::string format_study_table(const StudyResult& result);

}  // namespace sopose
