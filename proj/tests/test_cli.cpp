#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "sopose/commands.hpp"
#include "sopose/io.hpp"
#include "sopose/metrics.hpp"
#include "sopose/primitives.hpp"
#include "sopose/residuals.hpp"

using namespace sopose;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
  fs::path path;
  ScratchDir() : path(fs::temp_directory_path() / ("sopose_test_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

fs::path work_dir() {
  static const ScratchDir dir;
  return dir.path;
}

// Runs the CLI binary; stdout and stderr go to files under work_dir().
int run(const std::string& args, std::string* err_text = nullptr) {
  const fs::path err = work_dir() / "last_stderr.txt";
  const std::string cmd = std::string("\"") + SOPOSE_CLI_PATH + "\" " + args + " > \"" +
                          (work_dir() / "last_stdout.txt").string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  if (err_text) *err_text = read_file_text(err);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// CSV with a header row, keyed by the first column.
std::map<std::string, std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::istringstream in(read_file_text(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> head;
  {
    std::istringstream h(line);
    std::string f;
    while (std::getline(h, f, ',')) head.push_back(f);
  }
  std::map<std::string, std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    std::istringstream r(line);
    std::string f;
    std::vector<std::string> v;
    while (std::getline(r, f, ',')) v.push_back(f);
    for (size_t i = 0; i < head.size() && i < v.size(); ++i) rows[v[0]][head[i]] = v[i];
  }
  return rows;
}

double num(const std::string& s) { return std::stod(s); }

SceneSpec scene_with_id(int scene_id, std::uint64_t seed) {
  SceneSpec s;
  s.mesh = "builtin:box";
  s.scene_id = scene_id;
  s.im_id = 0;
  s.obj_id = 1;
  s.pose_seed = seed;
  return s;
}

}  // namespace

TEST_CASE("gen is deterministic and honours resolution") {
  const fs::path a = work_dir() / "gen_a", b = work_dir() / "gen_b", c = work_dir() / "gen_c";
  REQUIRE(run("gen --mesh builtin:lshape --seed 11 --out " + q(a)) == 0);
  REQUIRE(run("gen --mesh builtin:lshape --seed 11 --out " + q(b)) == 0);
  CHECK(read_file_bytes(a / "maps.sopm") == read_file_bytes(b / "maps.sopm"));
  CHECK(read_file_bytes(a / "gt.json") == read_file_bytes(b / "gt.json"));
  const auto bytes = read_file_bytes(a / "maps.sopm");
  CHECK(crc32_of(std::span(bytes.data(), bytes.size() - 4)) ==
        (bytes[bytes.size() - 4] | bytes[bytes.size() - 3] << 8 | bytes[bytes.size() - 2] << 16 |
         static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24));

  REQUIRE(run("gen --mesh builtin:lshape --seed 11 --res 128 --out " + q(c)) == 0);
  const TwoLayerMaps small = read_map_file(a / "maps.sopm");
  const TwoLayerMaps big = read_map_file(c / "maps.sopm");
  CHECK(big.width == 2 * small.width);
  CHECK(big.height == 2 * small.height);
  // Same pose and field of view: roughly four times the pixels.
  CHECK(big.mask_count() > 3 * small.mask_count());
}

TEST_CASE("generated maps satisfy the ray identity after reload") {
  const fs::path d = work_dir() / "gen_inv";
  REQUIRE(run("gen --mesh builtin:cylinder --seed 4 --out " + q(d)) == 0);
  const SceneSpec gt = read_scene(d / "gt.json");
  REQUIRE(gt.pose);
  const TwoLayerMaps maps = read_map_file(d / "maps.sopm");
  const TriangleMesh mesh = builtin_mesh("builtin:cylinder");
  REQUIRE(maps.mask_count() > 20);
  // float32 storage bounds the residual well above double rounding.
  CHECK(res_cl3d(*gt.pose, maps, mesh, gt.K).l1_mean() < 1e-5);
  CHECK(res_cl2d(*gt.pose, maps, mesh, gt.K).l1_mean() < 1e-3);
  CHECK(res_q2(maps, *gt.pose, gt.K, mesh).l1_mean() < 1e-3);
  CHECK(res_corr(*gt.pose, maps, gt.K, mesh).l1_mean() < 1e-3);
}

TEST_CASE("solve recovers a noiseless pose") {
  const fs::path g = work_dir() / "solve_gen", s = work_dir() / "solve_out";
  REQUIRE(run("gen --mesh builtin:box --seed 21 --out " + q(g)) == 0);
  REQUIRE(run("solve --maps " + q(g / "maps.sopm") + " --mesh builtin:box --out " + q(s)) == 0);
  const RigidPose gt = *read_scene(g / "gt.json").pose;
  const RigidPose est = pose_from_json(nlohmann::json::parse(read_file_text(s / "pose.json")).at("pose"));
  CHECK(rotation_error_deg(est, gt) < 0.1);
  CHECK(translation_error(est, gt) < 1e-3 * gt.t.z());
  CHECK(fs::exists(s / "trace.csv"));
  CHECK(read_file_text(s / "trace.csv").rfind("iter,cost,step_norm,damping,accepted\n", 0) == 0);
  const auto rows = parse_bop_csv(read_file_text(s / "pred.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rotation_angle(rows[0].pose.R, est.R) < 1e-9);
}

TEST_CASE("solve with pnp writes a BOP row") {
  const fs::path g = work_dir() / "solve_gen", s = work_dir() / "solve_pnp";
  REQUIRE(run("gen --mesh builtin:box --seed 21 --out " + q(g)) == 0);
  REQUIRE(run("solve --method pnp --seed 3 --maps " + q(g / "maps.sopm") +
              " --mesh builtin:box --out " + q(s)) == 0);
  const std::string csv = read_file_text(s / "pred.csv");
  CHECK(csv.rfind(std::string(kBopCsvHeader) + "\n", 0) == 0);
  const auto rows = parse_bop_csv(csv);
  REQUIRE(rows.size() == 1);
  CHECK(rotation_error_deg(rows[0].pose, *read_scene(g / "gt.json").pose) < 0.1);
  CHECK_FALSE(fs::exists(s / "trace.csv"));
}

TEST_CASE("exit codes") {
  std::string err;
  const fs::path g = work_dir() / "solve_gen";
  REQUIRE(run("gen --mesh builtin:box --seed 21 --out " + q(g)) == 0);
  CHECK(run("solve --maps " + q(g / "maps.sopm") + " --mesh " +
                q(work_dir() / "missing.ply") + " --out " + q(work_dir() / "x"),
            &err) == 2);
  CHECK(err.find("error:") != std::string::npos);
  CHECK(run("gen --mesh builtin:box --units cm --out " + q(work_dir() / "x")) == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("solve --maps " + q(work_dir() / "nope.sopm") + " --mesh builtin:box --out x") == 2);
  CHECK(run("solve --method magic --maps " + q(g / "maps.sopm") + " --mesh builtin:box --out " +
            q(work_dir() / "x")) == 2);
  // An object entirely behind the camera leaves an empty mask.
  SceneSpec behind = scene_with_id(0, 0);
  behind.pose = RigidPose(Mat3::Identity(), Vec3(0, 0, -1));
  write_file_atomic(work_dir() / "behind.json", scene_to_json(behind).dump(2));
  CHECK(run("gen --scene " + q(work_dir() / "behind.json") + " --out " + q(work_dir() / "x")) == 3);
  CHECK(exit_code_for(ErrorKind::kNoSolution) == 3);
  CHECK(exit_code_for(ErrorKind::kParse) == 2);
}

TEST_CASE("eval scores") {
  const fs::path root = work_dir() / "eval";
  const fs::path gt_dir = root / "gt";
  std::vector<BopRow> preds;
  std::vector<RigidPose> gts;
  for (int id = 1; id <= 2; ++id) {
    const fs::path sf = root / ("scene" + std::to_string(id) + ".json");
    fs::create_directories(root);
    write_file_atomic(sf, scene_to_json(scene_with_id(id, 100 + id)).dump(2));
    REQUIRE(run("gen --scene " + q(sf) + " --out " + q(gt_dir / std::to_string(id))) == 0);
    BopRow r;
    r.scene_id = id;
    r.obj_id = 1;
    r.pose = *read_scene(gt_dir / std::to_string(id) / "gt.json").pose;
    gts.push_back(r.pose);
    preds.push_back(r);
  }

  write_file_atomic(root / "exact.csv", format_bop_csv(preds));
  REQUIRE(run("eval --pred " + q(root / "exact.csv") + " --gt-dir " + q(gt_dir) + " --out " +
              q(root / "m_exact")) == 0);
  auto rows = read_csv(root / "m_exact" / "metrics.csv");
  REQUIRE(rows.count("all"));
  CHECK(num(rows["all"]["n"]) == 2);
  for (const char* col : {"add_0.02d", "add_0.1d", "2deg2cm", "ar_vsd", "ar_mssd", "ar_mspd", "ar"})
    CHECK(num(rows["all"][col]) == doctest::Approx(1.0));
  CHECK(fs::exists(root / "m_exact" / "metrics.txt"));

  // Only the first scene predicted.
  write_file_atomic(root / "half.csv", format_bop_csv(std::vector<BopRow>{preds[0]}));
  REQUIRE(run("eval --pred " + q(root / "half.csv") + " --gt-dir " + q(gt_dir) + " --out " +
              q(root / "m_half")) == 0);
  rows = read_csv(root / "m_half" / "metrics.csv");
  CHECK(num(rows["all"]["missing"]) == 1);
  CHECK(num(rows["all"]["add_0.1d"]) == doctest::Approx(0.5));
  CHECK(num(rows["all"]["ar"]) == doctest::Approx(0.5));

  // Perturbed predictions against direct metric calls.
  const TriangleMesh box = builtin_mesh("builtin:box");
  std::vector<double> add_err;
  for (size_t i = 0; i < preds.size(); ++i) {
    preds[i].pose = RigidPose(axis_angle(Vec3::UnitY(), 0.02 * (i + 1)) * gts[i].R,
                              gts[i].t + Vec3(0.002 * (i + 1), 0, 0.004));
    add_err.push_back(add(preds[i].pose, gts[i], box));
  }
  write_file_atomic(root / "pert.csv", format_bop_csv(preds));
  REQUIRE(run("eval --pred " + q(root / "pert.csv") + " --gt-dir " + q(gt_dir) + " --out " +
              q(root / "m_pert")) == 0);
  rows = read_csv(root / "m_pert" / "metrics.csv");
  const double d = box.diameter;
  CHECK(num(rows["all"]["add_0.1d"]) == doctest::Approx(pass_rate_add(add_err, d, 0.1)));
  CHECK(num(rows["all"]["add_0.05d"]) == doctest::Approx(pass_rate_add(add_err, d, 0.05)));
  CHECK(num(rows["all"]["auc_add"]) == doctest::Approx(auc(add_err)).epsilon(1e-6));
}

TEST_CASE("bench output is deterministic and consistent") {
  const fs::path root = work_dir() / "bench";
  fs::create_directories(root);
  write_file_atomic(root / "cfg.json",
                    std::string(R"({"sigmas": [0, 0.01], "scenes": 4, "trials": 2,)"
                                R"( "meshes": ["builtin:cube", "builtin:box"], "seed": 5})"));
  REQUIRE(run("bench --config " + q(root / "cfg.json") + " --out " + q(root / "a")) == 0);
  REQUIRE(run("bench --config " + q(root / "cfg.json") + " --out " + q(root / "b")) == 0);
  CHECK(read_file_bytes(root / "a" / "study.json") == read_file_bytes(root / "b" / "study.json"));
  CHECK(read_file_bytes(root / "a" / "table.txt") == read_file_bytes(root / "b" / "table.txt"));
  REQUIRE(run("bench --seed 6 --config " + q(root / "cfg.json") + " --out " + q(root / "c")) == 0);
  CHECK(read_file_bytes(root / "a" / "study.json") != read_file_bytes(root / "c" / "study.json"));

  const nlohmann::json j = nlohmann::json::parse(read_file_text(root / "a" / "study.json"));
  const std::vector<StudyCell> cells = study_cells_from_json(j);
  const std::vector<double> sigmas = j.at("sigmas").get<std::vector<double>>();
  CHECK(cells.size() == sigmas.size() * 4);
  StudyResult r;
  r.sigmas = sigmas;
  r.summary = summarize_cells(cells, sigmas, 4);
  for (int m = 0; m < kStudyMethodCount; ++m)
    r.monotone[m] = j.at("monotone").at(to_string(static_cast<StudyMethod>(m))).get<bool>();
  r.directional_fraction = j.at("directional_fraction").get<double>();
  r.directional_cells = j.at("directional_cells").get<int>();
  CHECK(format_study_table(r) == read_file_text(root / "a" / "table.txt"));

  CHECK(run("bench --config " + q(root / "missing.json") + " --out " + q(root / "d")) == 2);
  write_file_atomic(root / "bad.json", std::string(R"({"sigmas": [-1]})"));
  CHECK(run("bench --config " + q(root / "bad.json") + " --out " + q(root / "d")) == 2);
}
