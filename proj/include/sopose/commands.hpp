#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sopose/io.hpp"
#include "sopose/metrics.hpp"
#include "sopose/study.hpp"

namespace sopose {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // usage, IO and parse errors
inline constexpr int kExitNumerical = 3;  // solver / geometry failures

int exit_code_for(ErrorKind kind);

struct GenOptions {
  std::optional<std::filesystem::path> scene;
  std::optional<std::string> mesh;  // used when no scene file is given
  Units units = Units::kMeters;
  std::optional<int> res;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma_corr;
  std::optional<double> sigma_occ;
  std::optional<double> dropout;
  std::filesystem::path out;
};

struct GenOutput {
  SceneSpec scene;  // resolved: pose, intrinsics and render as written
  TwoLayerMaps maps;
  std::uint32_t crc = 0;
};

GenOutput cmd_gen(const GenOptions& opt);

struct SolveOptions {
  std::filesystem::path maps;
  std::string mesh;
  Units units = Units::kMeters;
  std::optional<std::filesystem::path> scene;  // defaults to gt.json next to the maps
  std::string method = "lm";
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct SolveOutput {
  RigidPose pose;
  BopRow row;
  std::optional<SolveTrace> trace;  // lm only
};

SolveOutput cmd_solve(const SolveOptions& opt);

struct EvalOptions {
  std::filesystem::path pred;
  std::filesystem::path gt_dir;
  std::optional<std::filesystem::path> mesh_dir;
  std::optional<std::filesystem::path> sym;
  std::optional<std::filesystem::path> out;
};

struct EvalRow {
  std::string label;  // obj_<id> or "all"
  int n = 0;
  int missing = 0;
  double add_002 = 0, add_005 = 0, add_010 = 0;
  double deg2cm2 = 0, deg5cm5 = 0;
  double auc_adds = 0, auc_add = 0;
  ArScores ar;
};

struct EvalOutput {
  std::vector<EvalRow> rows;
  std::string csv;
  std::string text;
};

EvalOutput cmd_eval(const EvalOptions& opt);

struct BenchOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
};

struct BenchOutput {
  StudyResult result;
  std::string table;
  nlohmann::json json;
};

BenchOutput cmd_bench(const BenchOptions& opt);

StudyConfig study_config_from_json(const nlohmann::json& j);
std::vector<StudyMesh> study_meshes_from_json(const nlohmann::json& j,
                                              const std::filesystem::path& base);
nlohmann::json study_to_json(const StudyResult& r, const StudyConfig& cfg);
// Rebuilds cells from study_to_json output.
std::vector<StudyCell> study_cells_from_json(const nlohmann::json& j);

std::string format_eval_csv(const std::vector<EvalRow>& rows);
std::string format_eval_text(const std::vector<EvalRow>& rows);

// Full command line entry point; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace sopose
