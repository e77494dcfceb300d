#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sopose/geometry.hpp"
#include "sopose/layers.hpp"
#include "sopose/metrics.hpp"
#include "sopose/solver.hpp"

namespace sopose {

enum class Units { kMeters, kMillimeters };
Units parse_units(const std::string& s);
const char* to_string(Units u);

// ASCII / binary PLY and OBJ, positions and faces only; polygons are fanned.
// Also accepts builtin:<name>.
TriangleMesh load_mesh(const std::filesystem::path& path, Units units = Units::kMeters);
TriangleMesh parse_obj(const std::string& text, Units units = Units::kMeters);
TriangleMesh parse_ply(std::span<const std::uint8_t> bytes, Units units = Units::kMeters);
std::string format_obj(const TriangleMesh& mesh);
std::vector<std::uint8_t> format_ply(const TriangleMesh& mesh, bool binary);

// --- Map file -------------------------------------------------------------
//
// Little-endian layout:
//   "SOPM"  u16 version  u16 width  u16 height  u16 channel_count
//   channel_count x { char name[12]; u8 kind; u8 reserved[3] }
//   channel_count planes of width*height f32, row-major
//   u32 CRC-32 (IEEE) over every preceding byte
inline constexpr std::uint16_t kMapFileVersion = 1;
inline constexpr int kMapChannelCount = 14;

enum class ChannelKind : std::uint8_t { kFlag = 0, kMeters = 1, kNormalized = 2 };

struct ChannelDescriptor {
  const char* name;
  ChannelKind kind;
};

std::span<const ChannelDescriptor> map_channels();

std::vector<std::uint8_t> encode_map_file(const TwoLayerMaps& maps);
TwoLayerMaps decode_map_file(std::span<const std::uint8_t> bytes);
void write_map_file(const std::filesystem::path& path, const TwoLayerMaps& maps);
TwoLayerMaps read_map_file(const std::filesystem::path& path);
std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

// --- JSON schemas -----------------------------------------------------------

nlohmann::json pose_to_json(const RigidPose& pose);
RigidPose pose_from_json(const nlohmann::json& j);
nlohmann::json intrinsics_to_json(const CameraIntrinsics& K);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);
nlohmann::json render_to_json(const RenderConfig& cfg);
RenderConfig render_from_json(const nlohmann::json& j);
nlohmann::json noise_to_json(const NoiseSpec& n);
NoiseSpec noise_from_json(const nlohmann::json& j);
SymmetrySet symmetry_from_json(const nlohmann::json& j);
nlohmann::json symmetry_to_json(const SymmetrySet& s);

struct SceneSpec {
  std::string mesh;  // path or builtin:<name>
  Units units = Units::kMeters;
  std::optional<RigidPose> pose;
  std::uint64_t pose_seed = 0;
  CameraIntrinsics K{120.0, 120.0, 32.0, 32.0};
  RenderConfig render;
  NoiseSpec noise;
  int scene_id = 0;
  int im_id = 0;
  int obj_id = 1;
  std::optional<double> diameter;  // informational, written by gen
};

nlohmann::json scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const nlohmann::json& j);
SceneSpec read_scene(const std::filesystem::path& path);

// --- BOP CSV ----------------------------------------------------------------

struct BopRow {
  int scene_id = 0;
  int im_id = 0;
  int obj_id = 0;
  double score = 1.0;
  RigidPose pose;  // metres; the CSV carries millimetres
  double time = -1.0;
};

inline constexpr const char* kBopCsvHeader = "scene_id,im_id,obj_id,score,R,t,time";
std::string format_bop_row(const BopRow& row);
std::string format_bop_csv(std::span<const BopRow> rows);
std::vector<BopRow> parse_bop_csv(const std::string& text);

// --- Files ------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace sopose
