#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ea3d/scene.hpp"

namespace ea3d {

struct SfmCamera {
    int camera_id = -1;
    std::string model;  // PINHOLE or SIMPLE_PINHOLE
    int width = 0, height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
};

struct SfmImage {
    int image_id = -1;
    Eigen::Vector4d quat = Eigen::Vector4d(1, 0, 0, 0);  // (w,x,y,z), world-to-camera
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    int camera_id = -1;
    std::string name;

    Eigen::Matrix3d rotation() const { return quat_to_matrix<double>(quat); }
};

struct SfmPoint {
    std::uint64_t point_id = 0;
    Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
    Eigen::Matrix<int, 3, 1> rgb = Eigen::Matrix<int, 3, 1>::Zero();
    double error = 0;
    int track_length = 0;
};

struct SfmBundle {
    std::map<int, SfmCamera> cameras;
    std::vector<SfmImage> images;
    std::vector<SfmPoint> points;
};

/// Parses cameras.txt / images.txt / points3D.txt from a COLMAP text export.
/// Count comments are validated when present; quaternions are normalized on
/// load. Throws not_found, unsupported_model, or parse_error (with the line
/// number).
SfmBundle parse_colmap_text(const std::filesystem::path& dir);

/// Writes the same three files, with count comments, bit-exact field order.
void write_colmap_text(const SfmBundle& bundle, const std::filesystem::path& dir);

/// Pinhole camera for one bundle image.
Camera<float> bundle_camera(const SfmBundle& bundle, const SfmImage& image);

}  // namespace ea3d
