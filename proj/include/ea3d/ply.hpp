#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <vector>

#include "ea3d/scene.hpp"

namespace ea3d {

struct PlyCloud {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3d> normals;  // empty if absent
    std::vector<Eigen::Vector3d> colors;   // 0..1, empty if absent
};

/// Reads ascii or binary_little_endian PLY; x/y/z required.
/// Throws parse_error (schema) or length_mismatch (truncated payload).
PlyCloud read_ply_points(const std::filesystem::path& path);

void write_ply_points(const std::filesystem::path& path, const PlyCloud& cloud);

/// Gaussian interchange in the common splatting checkpoint layout
/// (x y z, nx ny nz, f_dc_*, f_rest_*, opacity, scale_*, rot_*), raw
/// (pre-activation) values. SH degree is inferred from the f_rest count.
SceneModel<float> read_ply_gaussians(const std::filesystem::path& path);

void write_ply_gaussians(const std::filesystem::path& path,
                         const SceneModel<float>& scene);

}  // namespace ea3d
