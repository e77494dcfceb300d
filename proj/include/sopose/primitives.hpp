#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sopose/geometry.hpp"

namespace sopose {

// Procedural meshes used by the synthetic suites and `builtin:` mesh names.
TriangleMesh make_box(const Vec3& size, const Vec3& center = Vec3::Zero());
TriangleMesh make_icosphere(double radius, int subdivisions = 3);
TriangleMesh make_ellipsoid(const Vec3& radii, int subdivisions = 3);
TriangleMesh make_cylinder(double radius, double height, int segments = 32);
// Two boxes joined at a corner; non-convex, so rays see multiple surfaces.
TriangleMesh make_l_shape(double size);
TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts);
TriangleMesh translate_mesh(const TriangleMesh& mesh, const Vec3& offset);

// builtin:cube, builtin:box, builtin:sphere, builtin:cylinder, builtin:lshape,
// builtin:ellipsoid. Sizes are in metres, roughly 0.1 m across.
TriangleMesh builtin_mesh(const std::string& name);
bool is_builtin_mesh_name(const std::string& name);

// Area-weighted uniform surface samples, deterministic under seed.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, size_t count,
                                 std::uint64_t seed);

}  // namespace sopose
