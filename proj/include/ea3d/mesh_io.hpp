#pragma once

#include <filesystem>

#include "ea3d/tetra.hpp"

namespace ea3d {

/// Rebuilds the deduplicated face list and per-tet face ids from the
/// vertex/tetrahedra arrays. Face ids are assigned in first-encounter
/// order (tets in order, face opposite vertex 0..3), so any two builds
/// from the same tet list agree.
void rebuild_face_tables(TetraMesh& mesh);

/// Text interchange format for debugging:
///   tetmesh 1
///   vertices N
///   x y z          (N lines, %.17g)
///   tets M
///   a b c d        (M lines, vertex indices)
void write_tetmesh_text(const std::filesystem::path& path, const TetraMesh& mesh);
TetraMesh read_tetmesh_text(const std::filesystem::path& path);

}  // namespace ea3d
