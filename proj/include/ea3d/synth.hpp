#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ea3d/colmap.hpp"
#include "ea3d/image.hpp"
#include "ea3d/scene.hpp"

namespace ea3d {

/// Textured-cube fixture: a known Gaussian set on the cube surface,
/// orbit cameras, ground-truth renders from our own rasterizer, and a
/// matching COLMAP-text bundle. A closed loop for desk-scale verification.
struct SynthConfig {
    std::string shape = "cube";  // cube | sphere | plane
    int views = 20;
    int resolution = 128;
    std::uint64_t seed = 0;
    int grid = 12;           // ground-truth splats per face/band edge
    int sfm_points = 160;    // SfM cloud size (plus hull anchors)
    double cube_half = 1.0;  // half extent (cube/plane) or radius (sphere)
    double orbit_radius = 5.5;
    double fov_deg = 50.0;   // horizontal field of view
};

struct SynthScene {
    SceneModel<float> ground_truth;
    SfmBundle bundle;                 // cameras + poses + colored points
    std::vector<Image<float>> images; // linear float, aligned with bundle.images
};

/// Deterministic for a given config (bitwise, including the images).
SynthScene make_synthetic_scene(const SynthConfig& config);

/// World-to-camera pinhole camera looking from `eye` toward `target`
/// (x right, y down, z forward).
Camera<float> make_lookat_camera(int width, int height, float focal,
                                 const Eigen::Vector3f& eye,
                                 const Eigen::Vector3f& target);

}  // namespace ea3d
