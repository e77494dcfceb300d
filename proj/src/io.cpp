#include "sopose/io.hpp"

#include <Eigen/SVD>
#include <zlib.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sopose {

using nlohmann::json;

namespace {

// Text loses a few ulps; project back onto SO(3) unless already exact.
Mat3 snap_rotation(const Mat3& M) {
  if ((M.transpose() * M - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15 &&
      std::abs(M.determinant() - 1.0) < 1e-15)
    return M;
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

constexpr std::array<ChannelDescriptor, kMapChannelCount> kChannels = {{
    {"mask", ChannelKind::kFlag},
    {"depth", ChannelKind::kMeters},
    {"p0_x", ChannelKind::kNormalized},
    {"p0_y", ChannelKind::kNormalized},
    {"p0_z", ChannelKind::kNormalized},
    {"q0x_y", ChannelKind::kNormalized},
    {"q0x_z", ChannelKind::kNormalized},
    {"q0y_x", ChannelKind::kNormalized},
    {"q0y_z", ChannelKind::kNormalized},
    {"q0z_x", ChannelKind::kNormalized},
    {"q0z_y", ChannelKind::kNormalized},
    {"qv_x", ChannelKind::kFlag},
    {"qv_y", ChannelKind::kFlag},
    {"qv_z", ChannelKind::kFlag},
}};

constexpr size_t kNameBytes = 12;
constexpr size_t kHeaderBytes = 4 + 2 * 4;
constexpr size_t kDescriptorBytes = kNameBytes + 4;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, double d) {
  const float f = static_cast<float>(d);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

float get_f32(std::span<const std::uint8_t> b, size_t off) {
  const std::uint32_t bits = get_u32(b, off);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

double channel_value(const LayerPixel& px, int c) {
  switch (c) {
    case 0: return px.mask ? 1.0 : 0.0;
    case 1: return px.depth;
    case 2: case 3: case 4: return px.p0[c - 2];
    case 5: case 6: case 7: case 8: case 9: case 10: return px.q0[(c - 5) / 2][(c - 5) % 2];
    default: return px.q_valid[c - 11] ? 1.0 : 0.0;
  }
}

[[noreturn]] void map_fail(const std::string& what) {
  throw Error(ErrorKind::kParse, "map file: " + what);
}

}  // namespace

std::span<const ChannelDescriptor> map_channels() { return kChannels; }

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large buffers in chunks.
  size_t off = 0;
  while (off < bytes.size()) {
    const size_t n = std::min<size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_map_file(const TwoLayerMaps& maps) {
  if (maps.width <= 0 || maps.height <= 0 || maps.width > 0xffff || maps.height > 0xffff)
    throw Error(ErrorKind::kShape, "map dimensions out of range for the file format");
  if (maps.pixels.size() != static_cast<size_t>(maps.width) * maps.height)
    throw Error(ErrorKind::kShape, "pixel count does not match width x height");
  const size_t n = maps.pixels.size();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + kMapChannelCount * (kDescriptorBytes + 4 * n) + 4);
  out.insert(out.end(), {'S', 'O', 'P', 'M'});
  put_u16(out, kMapFileVersion);
  put_u16(out, static_cast<std::uint16_t>(maps.width));
  put_u16(out, static_cast<std::uint16_t>(maps.height));
  put_u16(out, kMapChannelCount);
  for (const ChannelDescriptor& d : kChannels) {
    char name[kNameBytes] = {};
    std::strncpy(name, d.name, kNameBytes);
    out.insert(out.end(), name, name + kNameBytes);
    out.push_back(static_cast<std::uint8_t>(d.kind));
    out.insert(out.end(), {0, 0, 0});
  }
  for (int c = 0; c < kMapChannelCount; ++c)
    for (const LayerPixel& px : maps.pixels) put_f32(out, channel_value(px, c));
  put_u32(out, crc32_of(out));
  return out;
}

TwoLayerMaps decode_map_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + 4) map_fail("truncated header");
  if (std::memcmp(bytes.data(), "SOPM", 4) != 0) map_fail("bad magic");
  const std::uint32_t stored = get_u32(bytes, bytes.size() - 4);
  const std::uint32_t actual = crc32_of(bytes.first(bytes.size() - 4));
  if (stored != actual) map_fail("CRC mismatch");
  const std::uint16_t version = get_u16(bytes, 4);
  if (version != kMapFileVersion) map_fail("unsupported version " + std::to_string(version));
  const int width = get_u16(bytes, 6);
  const int height = get_u16(bytes, 8);
  const int channels = get_u16(bytes, 10);
  if (channels != kMapChannelCount)
    map_fail("expected " + std::to_string(kMapChannelCount) + " channels, header says " +
             std::to_string(channels));
  if (width == 0 || height == 0) map_fail("zero dimension");
  const size_t n = static_cast<size_t>(width) * height;
  const size_t expected = kHeaderBytes + channels * (kDescriptorBytes + 4 * n) + 4;
  if (bytes.size() != expected)
    map_fail("size " + std::to_string(bytes.size()) + " does not match descriptor table (" +
             std::to_string(expected) + ")");
  size_t off = kHeaderBytes;
  for (int c = 0; c < channels; ++c, off += kDescriptorBytes) {
    char name[kNameBytes + 1] = {};
    std::memcpy(name, bytes.data() + off, kNameBytes);
    if (std::strcmp(name, kChannels[c].name) != 0 ||
        bytes[off + kNameBytes] != static_cast<std::uint8_t>(kChannels[c].kind))
      map_fail("channel " + std::to_string(c) + " descriptor mismatch ('" + name + "')");
  }
  TwoLayerMaps maps(width, height);
  for (int c = 0; c < channels; ++c) {
    for (size_t i = 0; i < n; ++i, off += 4) {
      const double v = get_f32(bytes, off);
      LayerPixel& px = maps.pixels[i];
      if (kChannels[c].kind == ChannelKind::kFlag) {
        if (v != 0.0 && v != 1.0)
          map_fail("flag channel '" + std::string(kChannels[c].name) + "' holds " +
                   std::to_string(v) + " at pixel " + std::to_string(i));
      } else if (!std::isfinite(v)) {
        map_fail("non-finite value at pixel " + std::to_string(i));
      }
      switch (c) {
        case 0: px.mask = v != 0.0; break;
        case 1: px.depth = v; break;
        case 2: case 3: case 4: px.p0[c - 2] = v; break;
        case 5: case 6: case 7: case 8: case 9: case 10: px.q0[(c - 5) / 2][(c - 5) % 2] = v; break;
        default: px.q_valid[c - 11] = v != 0.0;
      }
    }
  }
  for (size_t i = 0; i < n; ++i) {
    const LayerPixel& px = maps.pixels[i];
    if (!px.mask && (px.q_valid[0] || px.q_valid[1] || px.q_valid[2]))
      map_fail("q_valid set outside the mask at pixel " + std::to_string(i));
  }
  return maps;
}

void write_map_file(const std::filesystem::path& path, const TwoLayerMaps& maps) {
  write_file_atomic(path, encode_map_file(maps));
}

TwoLayerMaps read_map_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return decode_map_file(bytes);
}

// --- JSON --------------------------------------------------------------------

namespace {

template <typename F>
auto json_guard(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string(what) + ": " + e.what());
  }
}

}  // namespace

json pose_to_json(const RigidPose& pose) {
  json R = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R.push_back(pose.R(r, c));
  return json{{"R", R}, {"t", {pose.t.x(), pose.t.y(), pose.t.z()}}};
}

RigidPose pose_from_json(const json& j) {
  return json_guard("pose", [&] {
    const auto R = j.at("R").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    if (R.size() != 9 || t.size() != 3)
      throw Error(ErrorKind::kParse, "pose: R needs 9 entries and t needs 3");
    Mat3 M;
    for (int k = 0; k < 9; ++k) M(k / 3, k % 3) = R[k];
    if (!is_rotation(M, 1e-6)) throw Error(ErrorKind::kParse, "pose: R is not a rotation");
    return RigidPose(snap_rotation(M), Vec3(t[0], t[1], t[2]));
  });
}

json intrinsics_to_json(const CameraIntrinsics& K) {
  return json{{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  return json_guard("intrinsics", [&] {
    try {
      return CameraIntrinsics(j.at("fx").get<double>(), j.at("fy").get<double>(),
                              j.at("cx").get<double>(), j.at("cy").get<double>());
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, e.what());
    }
  });
}

json render_to_json(const RenderConfig& cfg) {
  return json{{"width", cfg.width}, {"height", cfg.height}, {"near", cfg.near},
              {"far", cfg.far}, {"omega_margin", cfg.omega_margin}};
}

RenderConfig render_from_json(const json& j) {
  return json_guard("render", [&] {
    RenderConfig cfg;
    cfg.width = j.value("width", cfg.width);
    cfg.height = j.value("height", cfg.height);
    cfg.near = j.value("near", cfg.near);
    cfg.far = j.value("far", cfg.far);
    cfg.omega_margin = j.value("omega_margin", cfg.omega_margin);
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, e.what());
    }
    return cfg;
  });
}

json noise_to_json(const NoiseSpec& n) {
  return json{{"sigma_corr", n.sigma_corr}, {"sigma_occ", n.sigma_occ},
              {"dropout", n.dropout}, {"seed", n.seed}};
}

NoiseSpec noise_from_json(const json& j) {
  return json_guard("noise", [&] {
    NoiseSpec n;
    n.sigma_corr = j.value("sigma_corr", 0.0);
    n.sigma_occ = j.value("sigma_occ", 0.0);
    n.dropout = j.value("dropout", 0.0);
    n.seed = j.value("seed", std::uint64_t{0});
    try {
      n.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, e.what());
    }
    return n;
  });
}

SymmetrySet symmetry_from_json(const json& j) {
  return json_guard("symmetry", [&] {
    SymmetrySet s;
    s.discrete.clear();
    if (j.contains("discrete")) {
      for (const auto& m : j.at("discrete")) {
        const auto v = m.get<std::vector<double>>();
        if (v.size() != 9) throw Error(ErrorKind::kParse, "symmetry: matrices need 9 entries");
        Mat3 M;
        for (int k = 0; k < 9; ++k) M(k / 3, k % 3) = v[k];
        s.discrete.push_back(M);
      }
    }
    bool has_identity = false;
    for (const Mat3& M : s.discrete) has_identity |= (M - Mat3::Identity()).norm() < 1e-9;
    if (!has_identity) s.discrete.insert(s.discrete.begin(), Mat3::Identity());
    if (j.contains("continuous_axes")) {
      for (const auto& a : j.at("continuous_axes")) {
        const auto v = a.get<std::vector<double>>();
        if (v.size() != 3) throw Error(ErrorKind::kParse, "symmetry: axes need 3 entries");
        s.continuous_axes.emplace_back(v[0], v[1], v[2]);
      }
    }
    try {
      s.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, e.what());
    }
    return s;
  });
}

json symmetry_to_json(const SymmetrySet& s) {
  json d = json::array();
  for (const Mat3& M : s.discrete) {
    json m = json::array();
    for (int k = 0; k < 9; ++k) m.push_back(M(k / 3, k % 3));
    d.push_back(m);
  }
  json a = json::array();
  for (const Vec3& v : s.continuous_axes) a.push_back({v.x(), v.y(), v.z()});
  return json{{"discrete", d}, {"continuous_axes", a}};
}

json scene_to_json(const SceneSpec& s) {
  json j{{"mesh", s.mesh},
         {"units", to_string(s.units)},
         {"pose_seed", s.pose_seed},
         {"intrinsics", intrinsics_to_json(s.K)},
         {"render", render_to_json(s.render)},
         {"noise", noise_to_json(s.noise)},
         {"scene_id", s.scene_id},
         {"im_id", s.im_id},
         {"obj_id", s.obj_id}};
  if (s.pose) j["pose"] = pose_to_json(*s.pose);
  if (s.diameter) j["diameter"] = *s.diameter;
  return j;
}

SceneSpec scene_from_json(const json& j) {
  return json_guard("scene", [&] {
    SceneSpec s;
    s.mesh = j.at("mesh").get<std::string>();
    if (j.contains("units")) {
      try {
        s.units = parse_units(j.at("units").get<std::string>());
      } catch (const Error& e) {
        throw Error(ErrorKind::kParse, e.what());
      }
    }
    if (j.contains("pose")) s.pose = pose_from_json(j.at("pose"));
    s.pose_seed = j.value("pose_seed", std::uint64_t{0});
    if (j.contains("intrinsics")) s.K = intrinsics_from_json(j.at("intrinsics"));
    if (j.contains("render")) s.render = render_from_json(j.at("render"));
    if (j.contains("noise")) s.noise = noise_from_json(j.at("noise"));
    s.scene_id = j.value("scene_id", 0);
    s.im_id = j.value("im_id", 0);
    s.obj_id = j.value("obj_id", 1);
    if (j.contains("diameter")) s.diameter = j.at("diameter").get<double>();
    return s;
  });
}

SceneSpec read_scene(const std::filesystem::path& path) {
  const std::string text = read_file_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  SceneSpec s = scene_from_json(j);
  // Relative mesh paths resolve against the scene file.
  if (s.mesh.rfind("builtin:", 0) != 0) {
    std::filesystem::path p(s.mesh);
    if (p.is_relative()) p = path.parent_path() / p;
    if (!std::filesystem::exists(p))
      throw Error(ErrorKind::kIo, "scene mesh not found: " + p.string());
    s.mesh = p.string();
  }
  return s;
}

// --- BOP CSV -------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);  // no "-0"
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<double> parse_numbers(const std::string& field, int lineno) {
  std::istringstream in(field);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParse,
                  "BOP CSV line " + std::to_string(lineno) + ": bad number '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

std::string format_bop_row(const BopRow& row) {
  std::string s = std::to_string(row.scene_id) + "," + std::to_string(row.im_id) + "," +
                  std::to_string(row.obj_id) + "," + fmt(row.score) + ",";
  for (int k = 0; k < 9; ++k) s += (k ? " " : "") + fmt(row.pose.R(k / 3, k % 3));
  s += ",";
  for (int k = 0; k < 3; ++k) s += (k ? " " : "") + fmt(row.pose.t[k] * 1000.0);
  s += "," + fmt(row.time);
  return s;
}

std::string format_bop_csv(std::span<const BopRow> rows) {
  std::string s = std::string(kBopCsvHeader) + "\n";
  for (const BopRow& r : rows) s += format_bop_row(r) + "\n";
  return s;
}

std::vector<BopRow> parse_bop_csv(const std::string& text) {
  std::vector<BopRow> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (lineno == 1 && line.rfind("scene_id", 0) == 0) continue;
    const auto f = split(line, ',');
    const std::string where = "BOP CSV line " + std::to_string(lineno);
    if (f.size() != 7) throw Error(ErrorKind::kParse, where + ": expected 7 fields");
    BopRow r;
    try {
      r.scene_id = std::stoi(f[0]);
      r.im_id = std::stoi(f[1]);
      r.obj_id = std::stoi(f[2]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParse, where + ": bad id");
    }
    const auto score = parse_numbers(f[3], lineno);
    const auto R = parse_numbers(f[4], lineno);
    const auto t = parse_numbers(f[5], lineno);
    const auto time = parse_numbers(f[6], lineno);
    if (score.size() != 1 || R.size() != 9 || t.size() != 3 || time.size() != 1)
      throw Error(ErrorKind::kParse, where + ": wrong field arity");
    Mat3 M;
    for (int k = 0; k < 9; ++k) M(k / 3, k % 3) = R[k];
    if (!is_rotation(M, 1e-6)) throw Error(ErrorKind::kParse, where + ": R is not a rotation");
    r.score = score[0];
    r.pose = RigidPose(snap_rotation(M), Vec3(t[0], t[1], t[2]) / 1000.0);
    r.time = time[0];
    rows.push_back(r);
  }
  return rows;
}

// --- Files -----------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::kIo, "read failed: " + path.string());
  return bytes;
}

std::string read_file_text(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::kIo, "rename to " + path.string() + " failed: " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace sopose
