#include "sopose/commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "sopose/pnp.hpp"
#include "sopose/primitives.hpp"

namespace sopose {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kIo:
    case ErrorKind::kParse:
    case ErrorKind::kInvalidMesh:
    case ErrorKind::kShape:
      return kExitUsage;
    default:
      return kExitNumerical;
  }
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_file_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
}

// Scale intrinsics and image size so the width becomes `res`.
void rescale(SceneSpec& s, int res) {
  if (res < 1) throw Error(ErrorKind::kUsage, "--res must be positive");
  const double k = static_cast<double>(res) / s.render.width;
  s.K = CameraIntrinsics(s.K.fx * k, s.K.fy * k, s.K.cx * k, s.K.cy * k);
  s.render.height = std::max(1, static_cast<int>(std::lround(s.render.height * k)));
  s.render.width = res;
}

}  // namespace

GenOutput cmd_gen(const GenOptions& opt) {
  SceneSpec scene;
  if (opt.scene) {
    scene = read_scene(*opt.scene);
  } else if (opt.mesh) {
    scene.mesh = *opt.mesh;
    scene.units = opt.units;
  } else {
    throw Error(ErrorKind::kUsage, "gen needs --scene or --mesh");
  }
  if (opt.res) rescale(scene, *opt.res);
  if (opt.seed) {
    scene.pose_seed = *opt.seed;
    scene.noise.seed = *opt.seed;
  }
  if (opt.sigma_corr) scene.noise.sigma_corr = *opt.sigma_corr;
  if (opt.sigma_occ) scene.noise.sigma_occ = *opt.sigma_occ;
  if (opt.dropout) scene.noise.dropout = *opt.dropout;
  scene.noise.validate();
  scene.render.validate();

  const TriangleMesh mesh = load_mesh(scene.mesh, scene.units);
  if (!scene.pose) {
    std::mt19937_64 rng(scene.pose_seed);
    scene.pose = sample_scene_pose(mesh, scene.K, scene.render, rng);
  }
  scene.diameter = mesh.diameter;

  TwoLayerMaps maps = generate_maps(mesh, *scene.pose, scene.K, scene.render);
  if (maps.mask_count() == 0)
    throw Error(ErrorKind::kNoDetection, "object does not cover any pixel");
  if (!scene.noise.is_identity()) maps = add_noise(maps, scene.noise);

  ensure_dir(opt.out);
  const std::vector<std::uint8_t> bytes = encode_map_file(maps);
  write_file_atomic(opt.out / "maps.sopm", bytes);
  write_file_atomic(opt.out / "gt.json", scene_to_json(scene).dump(2) + "\n");

  GenOutput g;
  g.crc = crc32_of(std::span<const std::uint8_t>(bytes).first(bytes.size() - 4));
  g.scene = std::move(scene);
  g.maps = std::move(maps);
  return g;
}

SolveOutput cmd_solve(const SolveOptions& opt) {
  if (opt.method != "lm" && opt.method != "pnp")
    throw Error(ErrorKind::kUsage, "--method must be lm or pnp");
  const fs::path scene_path = opt.scene ? *opt.scene : opt.maps.parent_path() / "gt.json";
  if (!fs::exists(scene_path))
    throw Error(ErrorKind::kIo, "no scene file for intrinsics: " + scene_path.string());
  const SceneSpec scene = scene_from_json(parse_json_file(scene_path));
  const TriangleMesh mesh = load_mesh(opt.mesh, opt.units);
  const TwoLayerMaps maps = read_map_file(opt.maps);
  if (maps.width != scene.render.width || maps.height != scene.render.height)
    throw Error(ErrorKind::kShape, "map size does not match the scene render size");
  if (maps.mask_count() == 0) throw Error(ErrorKind::kNoDetection, "empty mask");

  SolveOutput res;
  json pj;
  if (opt.method == "lm") {
    SolverConfig cfg;
    cfg.seed = opt.seed;
    const SolveResult sr = solve_lm(maps, scene.K, mesh, cfg);
    res.pose = sr.pose;
    res.trace = sr.trace;
    pj = {{"method", "lm"},
          {"converged", sr.trace.converged},
          {"initial_cost", sr.trace.initial_cost},
          {"final_cost", sr.trace.final_cost},
          {"iterations", sr.trace.iterations.size()}};
  } else {
    const PnpResult pr = pnp_ransac(maps, scene.K, mesh, opt.seed);
    res.pose = pr.pose;
    pj = {{"method", "pnp"},
          {"inliers", pr.inliers},
          {"correspondences", pr.correspondences},
          {"iterations", pr.iterations}};
  }
  pj["pose"] = pose_to_json(res.pose);

  res.row.scene_id = scene.scene_id;
  res.row.im_id = scene.im_id;
  res.row.obj_id = scene.obj_id;
  res.row.score = 1.0;
  res.row.pose = res.pose;

  ensure_dir(opt.out);
  write_file_atomic(opt.out / "pose.json", pj.dump(2) + "\n");
  write_file_atomic(opt.out / "pred.csv", format_bop_csv(std::span<const BopRow>(&res.row, 1)));
  if (res.trace) {
    std::string csv = "iter,cost,step_norm,damping,accepted\n";
    char line[160];
    for (size_t i = 0; i < res.trace->iterations.size(); ++i) {
      const SolveIteration& it = res.trace->iterations[i];
      std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%d\n", i, it.cost, it.step_norm,
                    it.damping, it.accepted ? 1 : 0);
      csv += line;
    }
    write_file_atomic(opt.out / "trace.csv", csv);
  }
  return res;
}

// --- eval ----------------------------------------------------------------------

namespace {

using Key = std::tuple<int, int, int>;

struct GtEntry {
  SceneSpec scene;
  fs::path source;
};

std::map<Key, GtEntry> collect_gt(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::map<Key, GtEntry> out;
  for (const fs::path& f : files) {
    const json j = parse_json_file(f);
    if (!j.is_object() || !j.contains("pose") || !j.contains("mesh")) continue;
    GtEntry g{scene_from_json(j), f};
    const Key k{g.scene.scene_id, g.scene.im_id, g.scene.obj_id};
    if (out.count(k))
      throw Error(ErrorKind::kParse, "duplicate ground truth for scene " +
                                         std::to_string(g.scene.scene_id) + " im " +
                                         std::to_string(g.scene.im_id) + ": " + f.string());
    out.emplace(k, std::move(g));
  }
  if (out.empty()) throw Error(ErrorKind::kIo, "no ground-truth JSON under " + dir.string());
  return out;
}

TriangleMesh mesh_for(const GtEntry& g, const std::optional<fs::path>& mesh_dir) {
  if (mesh_dir) {
    char name[32];
    std::snprintf(name, sizeof name, "obj_%06d", g.scene.obj_id);
    for (const char* ext : {".ply", ".obj"}) {
      const fs::path p = *mesh_dir / (std::string(name) + ext);
      if (fs::exists(p)) return load_mesh(p, g.scene.units);
    }
  }
  std::string m = g.scene.mesh;
  if (m.rfind("builtin:", 0) != 0 && fs::path(m).is_relative())
    m = (g.source.parent_path() / m).string();
  return load_mesh(m, g.scene.units);
}

// Either one symmetry set for every object or {"<obj_id>": set, ...}.
std::map<int, SymmetrySet> load_symmetries(const std::optional<fs::path>& path) {
  std::map<int, SymmetrySet> out;
  if (!path) return out;
  const json j = parse_json_file(*path);
  if (j.contains("discrete") || j.contains("continuous_axes")) {
    out[-1] = symmetry_from_json(j);
    return out;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    int id = 0;
    try {
      id = std::stoi(it.key());
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParse, "symmetry keys must be object ids, got '" + it.key() + "'");
    }
    out[id] = symmetry_from_json(it.value());
  }
  return out;
}

bool is_symmetric(const SymmetrySet& s) {
  return s.discrete.size() > 1 || !s.continuous_axes.empty();
}

struct Sample {
  bool found = false;
  double add_err = 0;   // ADD or ADD-S by symmetry
  double adds_err = 0;  // ADD-S regardless
  bool d2 = false, d5 = false;
  BopErrors bop;
  double diameter = 0;
  int width = 0;
};

EvalRow summarize(const std::string& label, const std::vector<Sample>& samples) {
  EvalRow r;
  r.label = label;
  r.n = static_cast<int>(samples.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> add_rel, add_abs, adds_abs;
  std::vector<BopErrors> bop;
  int d2 = 0, d5 = 0;
  for (const Sample& s : samples) {
    if (!s.found) ++r.missing;
    add_rel.push_back(s.found ? s.add_err / s.diameter : inf);
    add_abs.push_back(s.found ? s.add_err : inf);
    adds_abs.push_back(s.found ? s.adds_err : inf);
    d2 += s.found && s.d2;
    d5 += s.found && s.d5;
    BopErrors b = s.bop;
    if (!s.found) {
      b.vsd.assign(bop::kVsdTaus.size(), inf);
      b.mssd = b.mspd = inf;
      b.diameter = s.diameter;
    }
    bop.push_back(b);
  }
  // pass_rate_add works on absolute errors and a diameter; fold the
  // per-sample diameter in via relative errors at unit diameter.
  r.add_002 = pass_rate_add(add_rel, 1.0, 0.02);
  r.add_005 = pass_rate_add(add_rel, 1.0, 0.05);
  r.add_010 = pass_rate_add(add_rel, 1.0, 0.10);
  r.deg2cm2 = static_cast<double>(d2) / r.n;
  r.deg5cm5 = static_cast<double>(d5) / r.n;
  r.auc_adds = auc(adds_abs);
  r.auc_add = auc(add_abs);
  r.ar = ar_scores(bop, samples.front().width);
  return r;
}

}  // namespace

std::string format_eval_csv(const std::vector<EvalRow>& rows) {
  std::string s =
      "group,n,missing,add_0.02d,add_0.05d,add_0.1d,2deg2cm,5deg5cm,auc_adds,auc_add,"
      "ar_vsd,ar_mssd,ar_mspd,ar\n";
  char line[512];
  for (const EvalRow& r : rows) {
    std::snprintf(line, sizeof line, "%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.label.c_str(), r.n, r.missing, r.add_002, r.add_005, r.add_010, r.deg2cm2,
                  r.deg5cm5, r.auc_adds, r.auc_add, r.ar.vsd, r.ar.mssd, r.ar.mspd, r.ar.mean);
    s += line;
  }
  return s;
}

std::string format_eval_text(const std::vector<EvalRow>& rows) {
  std::string s;
  char line[512];
  std::snprintf(line, sizeof line, "%-12s %5s %5s %8s %8s %8s %8s %8s %8s %8s %7s %7s %7s %7s\n",
                "group", "n", "miss", "ADD.02d", "ADD.05d", "ADD.1d", "2d2cm", "5d5cm",
                "AUC-S", "AUC", "AR_VSD", "AR_MSSD", "AR_MSPD", "AR");
  s += line;
  for (const EvalRow& r : rows) {
    std::snprintf(line, sizeof line,
                  "%-12s %5d %5d %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %7.4f %7.4f %7.4f %7.4f\n",
                  r.label.c_str(), r.n, r.missing, r.add_002, r.add_005, r.add_010, r.deg2cm2,
                  r.deg5cm5, r.auc_adds, r.auc_add, r.ar.vsd, r.ar.mssd, r.ar.mspd, r.ar.mean);
    s += line;
  }
  return s;
}

EvalOutput cmd_eval(const EvalOptions& opt) {
  const std::vector<BopRow> preds = parse_bop_csv(read_file_text(opt.pred));
  const std::map<Key, GtEntry> gts = collect_gt(opt.gt_dir);
  const std::map<int, SymmetrySet> syms = load_symmetries(opt.sym);

  // Highest-scoring prediction per key.
  std::map<Key, BopRow> best;
  for (const BopRow& p : preds) {
    const Key k{p.scene_id, p.im_id, p.obj_id};
    auto it = best.find(k);
    if (it == best.end() || p.score > it->second.score) best[k] = p;
  }

  std::map<int, TriangleMesh> meshes;
  std::map<int, std::vector<Vec3>> points;
  std::map<int, std::vector<Sample>> by_obj;
  std::vector<Sample> all;
  for (const auto& [key, g] : gts) {
    const int obj = g.scene.obj_id;
    if (!meshes.count(obj)) {
      meshes[obj] = mesh_for(g, opt.mesh_dir);
      points[obj] = model_points(meshes[obj]);
    }
    const TriangleMesh& mesh = meshes[obj];
    SymmetrySet sym;
    if (auto it = syms.find(obj); it != syms.end()) sym = it->second;
    else if (auto all_it = syms.find(-1); all_it != syms.end()) sym = all_it->second;

    Sample s;
    s.diameter = mesh.diameter;
    s.width = g.scene.render.width;
    if (auto it = best.find(key); it != best.end()) {
      const RigidPose& est = it->second.pose;
      const RigidPose& gt = *g.scene.pose;
      s.found = true;
      s.adds_err = add_s(est, gt, points[obj]);
      s.add_err = is_symmetric(sym) ? s.adds_err : add(est, gt, points[obj]);
      s.d2 = deg_cm(est, gt, 2.0, 2.0);
      s.d5 = deg_cm(est, gt, 5.0, 5.0);
      s.bop = bop_errors(est, gt, mesh, sym, g.scene.K, g.scene.render);
    }
    by_obj[obj].push_back(s);
    all.push_back(s);
  }

  EvalOutput out;
  for (const auto& [obj, samples] : by_obj) {
    char label[32];
    std::snprintf(label, sizeof label, "obj_%06d", obj);
    out.rows.push_back(summarize(label, samples));
  }
  out.rows.push_back(summarize("all", all));
  out.csv = format_eval_csv(out.rows);
  out.text = format_eval_text(out.rows);
  if (opt.out) {
    ensure_dir(*opt.out);
    write_file_atomic(*opt.out / "metrics.csv", out.csv);
    write_file_atomic(*opt.out / "metrics.txt", out.text);
  }
  return out;
}

// --- bench ---------------------------------------------------------------------

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double from_nullable(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

StudyConfig study_config_from_json(const json& j) {
  try {
    StudyConfig c;
    if (j.contains("sigmas")) c.sigmas = j.at("sigmas").get<std::vector<double>>();
    c.scenes = j.value("scenes", c.scenes);
    c.trials = j.value("trials", c.trials);
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
    c.directional_sigma = j.value("directional_sigma", c.directional_sigma);
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    if (j.contains("intrinsics")) c.K = intrinsics_from_json(j.at("intrinsics"));
    if (j.contains("render")) c.render = render_from_json(j.at("render"));
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      c.solver.max_iters = s.value("max_iters", c.solver.max_iters);
      c.solver.lm_damping_init = s.value("lm_damping_init", c.solver.lm_damping_init);
      c.solver.irls_delta = s.value("irls_delta", c.solver.irls_delta);
      c.solver.irls_delta_norm = s.value("irls_delta_norm", c.solver.irls_delta_norm);
      if (s.contains("weights")) {
        const json& w = s.at("weights");
        c.solver.use_weight_defaults = false;
        c.solver.weights = Weights::defaults(c.K);
        c.solver.weights.lambda1 = w.value("lambda1", c.solver.weights.lambda1);
        c.solver.weights.lambda2 = w.value("lambda2", c.solver.weights.lambda2);
        c.solver.weights.lambda3 = w.value("lambda3", c.solver.weights.lambda3);
      }
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bench config: ") + e.what());
  }
}

std::vector<StudyMesh> study_meshes_from_json(const json& j, const fs::path& base) {
  std::vector<StudyMesh> out;
  const json list = j.contains("meshes") ? j.at("meshes")
                                         : json::array({"builtin:cube", "builtin:box",
                                                        "builtin:cylinder", "builtin:lshape"});
  try {
    for (const json& m : list) {
      std::string path;
      Units units = Units::kMeters;
      std::string name;
      if (m.is_string()) {
        path = m.get<std::string>();
      } else {
        path = m.at("path").get<std::string>();
        if (m.contains("units")) units = parse_units(m.at("units").get<std::string>());
        name = m.value("name", "");
      }
      if (name.empty()) name = path.rfind("builtin:", 0) == 0 ? path.substr(8) : fs::path(path).stem().string();
      if (path.rfind("builtin:", 0) != 0 && fs::path(path).is_relative())
        path = (base / path).string();
      out.push_back({name, load_mesh(path, units)});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bench meshes: ") + e.what());
  }
  if (out.empty()) throw Error(ErrorKind::kUsage, "bench config lists no meshes");
  return out;
}

json study_to_json(const StudyResult& r, const StudyConfig& cfg) {
  json cells = json::array();
  for (const StudyCell& c : r.cells) {
    json methods = json::object();
    for (int m = 0; m < kStudyMethodCount; ++m) {
      json trials = json::array();
      for (const MethodError& e : c.trials[m])
        trials.push_back({{"ok", e.ok}, {"rot_deg", e.rot_deg}, {"trans_m", e.trans_m},
                          {"add_m", e.add_m}});
      methods[to_string(static_cast<StudyMethod>(m))] = {
          {"trials", trials}, {"median_add_m", finite_or_null(c.median_add[m])}};
    }
    cells.push_back({{"scene", c.scene}, {"mesh", c.mesh}, {"sigma", c.sigma},
                     {"methods", methods}});
  }
  json summary = json::array();
  for (size_t si = 0; si < r.summary.size(); ++si) {
    json row = json::object();
    for (int m = 0; m < kStudyMethodCount; ++m) {
      const MethodSummary& s = r.summary[si][m];
      row[to_string(static_cast<StudyMethod>(m))] = {
          {"median_rot_deg", finite_or_null(s.median_rot)},
          {"mean_rot_deg", finite_or_null(s.mean_rot)},
          {"median_trans_m", finite_or_null(s.median_trans)},
          {"mean_trans_m", finite_or_null(s.mean_trans)},
          {"median_add_m", finite_or_null(s.median_add)},
          {"mean_add_m", finite_or_null(s.mean_add)},
          {"failures", s.failures},
          {"samples", s.samples}};
    }
    summary.push_back({{"sigma", r.sigmas[si]}, {"methods", row}});
  }
  json poses = json::array();
  for (size_t s = 0; s < r.scene_poses.size(); ++s)
    poses.push_back({{"mesh", r.scene_mesh[s]}, {"pose", pose_to_json(r.scene_poses[s])}});
  json monotone = json::object();
  for (int m = 0; m < kStudyMethodCount; ++m)
    monotone[to_string(static_cast<StudyMethod>(m))] = r.monotone[m];
  return json{{"meshes", r.mesh_names},
              {"sigmas", r.sigmas},
              {"scenes", cfg.scenes},
              {"trials", cfg.trials},
              {"seed", cfg.seed},
              {"scene_poses", poses},
              {"scene_failures", r.scene_failures},
              {"cells", cells},
              {"summary", summary},
              {"monotone", monotone},
              {"directional_sigma", cfg.directional_sigma},
              {"directional_fraction", r.directional_fraction},
              {"directional_cells", r.directional_cells}};
}

std::vector<StudyCell> study_cells_from_json(const json& j) {
  std::vector<StudyCell> out;
  try {
    for (const json& c : j.at("cells")) {
      StudyCell cell;
      cell.scene = c.at("scene").get<int>();
      cell.mesh = c.at("mesh").get<int>();
      cell.sigma = c.at("sigma").get<double>();
      for (int m = 0; m < kStudyMethodCount; ++m) {
        const json& mj = c.at("methods").at(to_string(static_cast<StudyMethod>(m)));
        for (const json& t : mj.at("trials")) {
          MethodError e;
          e.ok = t.at("ok").get<bool>();
          e.rot_deg = t.at("rot_deg").get<double>();
          e.trans_m = t.at("trans_m").get<double>();
          e.add_m = t.at("add_m").get<double>();
          cell.trials[m].push_back(e);
        }
        cell.median_add[m] = from_nullable(mj.at("median_add_m"));
      }
      out.push_back(std::move(cell));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("study cells: ") + e.what());
  }
  return out;
}

BenchOutput cmd_bench(const BenchOptions& opt) {
  const json j = parse_json_file(opt.config);
  StudyConfig cfg = study_config_from_json(j);
  if (opt.seed) cfg.seed = *opt.seed;
  const std::vector<StudyMesh> meshes = study_meshes_from_json(j, opt.config.parent_path());

  BenchOutput out;
  out.result = noise_study(meshes, sample_scene_pose, cfg);
  out.table = format_study_table(out.result);
  out.json = study_to_json(out.result, cfg);
  ensure_dir(opt.out);
  write_file_atomic(opt.out / "table.txt", out.table);
  write_file_atomic(opt.out / "study.json", out.json.dump(1) + "\n");
  return out;
}

// --- command line --------------------------------------------------------------

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"two-layer self-occlusion pose toolkit"};
  app.require_subcommand(1);

  GenOptions gen;
  std::string gen_units = "m";
  auto* g = app.add_subcommand("gen", "render two-layer maps and ground truth for a scene");
  auto* g_scene = g->add_option("--scene", gen.scene, "scene JSON");
  g->add_option("--mesh", gen.mesh, "mesh path or builtin:<name>")->excludes(g_scene);
  g->add_option("--units", gen_units, "mesh units (m|mm)");
  g->add_option("--res", gen.res, "output width in pixels (default 64)");
  g->add_option("--seed", gen.seed, "pose and noise seed");
  g->add_option("--noise-sigma-corr", gen.sigma_corr, "correspondence noise, normalized units");
  g->add_option("--noise-sigma-occ", gen.sigma_occ, "self-occlusion noise, normalized units");
  g->add_option("--dropout", gen.dropout, "pixel dropout probability");
  g->add_option("--out", gen.out, "output directory")->required();

  SolveOptions solve;
  std::string solve_units = "m";
  auto* s = app.add_subcommand("solve", "estimate a pose from a map file");
  s->add_option("--maps", solve.maps, "map file")->required();
  s->add_option("--mesh", solve.mesh, "mesh path or builtin:<name>")->required();
  s->add_option("--units", solve_units, "mesh units (m|mm)");
  s->add_option("--scene", solve.scene, "scene JSON with intrinsics (default: gt.json beside maps)");
  s->add_option("--method", solve.method, "lm or pnp");
  s->add_option("--seed", solve.seed, "RANSAC seed");
  s->add_option("--out", solve.out, "output directory")->required();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "score BOP CSV predictions against ground truth");
  e->add_option("--pred", ev.pred, "BOP CSV predictions")->required();
  e->add_option("--gt-dir", ev.gt_dir, "directory of ground-truth JSON")->required();
  e->add_option("--mesh-dir", ev.mesh_dir, "directory of obj_XXXXXX.ply|obj meshes");
  e->add_option("--sym", ev.sym, "symmetry JSON");
  e->add_option("--out", ev.out, "directory for metrics.csv and metrics.txt");

  BenchOptions bench;
  auto* b = app.add_subcommand("bench", "run the noise study");
  b->add_option("--config", bench.config, "study config JSON")->required();
  b->add_option("--seed", bench.seed, "override the config seed");
  b->add_option("--out", bench.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }

  try {
    if (g->parsed()) {
      gen.units = parse_units(gen_units);
      const GenOutput r = cmd_gen(gen);
      char crc[16];
      std::snprintf(crc, sizeof crc, "%08x", r.crc);
      out << "wrote " << (gen.out / "maps.sopm").string() << " (" << r.maps.width << "x"
          << r.maps.height << ", " << r.maps.mask_count() << " masked, crc " << crc << ")\n";
    } else if (s->parsed()) {
      solve.units = parse_units(solve_units);
      const SolveOutput r = cmd_solve(solve);
      out << format_bop_row(r.row) << "\n";
    } else if (e->parsed()) {
      out << cmd_eval(ev).text;
    } else if (b->parsed()) {
      out << cmd_bench(bench).table;
    }
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex.kind());
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace sopose
