#include "ea3d/synth.hpp"

#include <Eigen/Geometry>

#include <cmath>

#include "ea3d/error.hpp"
#include "ea3d/rasterizer.hpp"
#include "ea3d/util.hpp"

namespace ea3d {

namespace {

// Six face frames of the axis-aligned cube: outward normal, two in-plane axes.
struct CubeFace {
    Eigen::Vector3f normal, u, v;
    Eigen::Vector3f base_color;
};

const CubeFace kFaces[6] = {
    {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.85f, 0.30f, 0.25f}},
    {{-1, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0.25f, 0.65f, 0.85f}},
    {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}, {0.30f, 0.80f, 0.35f}},
    {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}, {0.90f, 0.75f, 0.20f}},
    {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}, {0.70f, 0.35f, 0.80f}},
    {{0, 0, -1}, {0, 1, 0}, {1, 0, 0}, {0.85f, 0.55f, 0.30f}},
};

Eigen::Vector3f face_texture(const CubeFace& face, double s, double t) {
    // Checker times a diagonal gradient over the face's unit square.
    int cs = int(std::floor(s * 4.0)), ct = int(std::floor(t * 4.0));
    float checker = ((cs + ct) & 1) ? 1.0f : 0.45f;
    float gradient = 0.65f + 0.35f * float(0.5 * (s + t));
    Eigen::Vector3f c = face.base_color * checker * gradient;
    return c.cwiseMax(0.02f).cwiseMin(0.98f);
}

}  // namespace

Camera<float> make_lookat_camera(int width, int height, float focal,
                                 const Eigen::Vector3f& eye,
                                 const Eigen::Vector3f& target) {
    Camera<float> cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal;
    cam.cx = float(width) / 2.f;
    cam.cy = float(height) / 2.f;

    Eigen::Vector3f fwd = (target - eye).normalized();
    Eigen::Vector3f up_hint(0, 0, 1);
    if (std::abs(fwd.dot(up_hint)) > 0.99f) up_hint = Eigen::Vector3f(0, 1, 0);
    Eigen::Vector3f right = fwd.cross(up_hint).normalized();
    Eigen::Vector3f down = fwd.cross(right);
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = fwd.transpose();
    cam.translation = -(cam.rotation * eye);
    return cam;
}

SynthScene make_synthetic_scene(const SynthConfig& config) {
    if (config.views < 2)
        throw Error(ErrorCode::config_error, "need at least 2 views");
    if (config.resolution < 1)
        throw Error(ErrorCode::config_error, "resolution must be positive");
    if (config.grid < 2)
        throw Error(ErrorCode::config_error, "face grid must be at least 2");

    if (config.shape != "cube" && config.shape != "sphere" && config.shape != "plane")
        throw Error(ErrorCode::config_error, "unknown shape " + config.shape);

    SynthScene out;
    const float h = float(config.cube_half);
    const int g = config.grid;
    const float cell = 2.f * h / float(g);

    auto add_splat = [&](const Eigen::Vector3f& pos, const Eigen::Vector3f& axis_u,
                         const Eigen::Vector3f& axis_v, const Eigen::Vector3f& normal,
                         float su, float sv, const Eigen::Vector3f& color) {
        Eigen::Matrix3f rot;
        rot.col(0) = axis_u;
        rot.col(1) = axis_v;
        rot.col(2) = normal;
        Eigen::Quaternionf q(rot);
        q.normalize();
        Gaussian<float> splat;
        splat.position = pos;
        splat.rotation = Eigen::Vector4f(q.w(), q.x(), q.y(), q.z());
        splat.log_scale = Eigen::Vector3f(std::log(su), std::log(sv),
                                          std::log(std::max(0.01f * h, 1e-5f)));
        splat.opacity_logit = logit(0.95f);
        splat.sh = ShBlock<float>::Zero(1, 3);
        splat.sh.row(0) = ((color.array() - 0.5f) / float(shc::C0)).transpose();
        out.ground_truth.gaussians.push_back(std::move(splat));
    };

    // Ground truth: near-flat textured sheets on the chosen primitive.
    out.ground_truth.sh_degree = 0;
    if (config.shape == "cube") {
        for (const CubeFace& face : kFaces)
            for (int i = 0; i < g; ++i)
                for (int j = 0; j < g; ++j) {
                    const double s = (i + 0.5) / double(g);
                    const double t = (j + 0.5) / double(g);
                    add_splat(face.normal * h + face.u * float((s - 0.5) * 2.0 * h) +
                                  face.v * float((t - 0.5) * 2.0 * h),
                              face.u, face.v, face.normal, cell * 0.62f, cell * 0.62f,
                              face_texture(face, s, t));
                }
    } else if (config.shape == "plane") {
        const CubeFace& face = kFaces[4];  // +z sheet
        for (int i = 0; i < g; ++i)
            for (int j = 0; j < g; ++j) {
                const double s = (i + 0.5) / double(g);
                const double t = (j + 0.5) / double(g);
                add_splat(face.u * float((s - 0.5) * 2.0 * h) +
                              face.v * float((t - 0.5) * 2.0 * h),
                          face.u, face.v, face.normal, cell * 0.62f, cell * 0.62f,
                          face_texture(face, s, t));
            }
    } else {  // sphere
        const int bands = g, segs = 2 * g;
        for (int b = 0; b < bands; ++b)
            for (int m = 0; m < segs; ++m) {
                const double theta = M_PI * (b + 0.5) / bands;   // polar
                const double phi = 2.0 * M_PI * (m + 0.5) / segs;
                Eigen::Vector3f n(float(std::sin(theta) * std::cos(phi)),
                                  float(std::sin(theta) * std::sin(phi)),
                                  float(std::cos(theta)));
                Eigen::Vector3f u = n.cross(Eigen::Vector3f::UnitZ());
                if (u.norm() < 1e-4f) u = Eigen::Vector3f::UnitX();
                u.normalize();
                Eigen::Vector3f v = n.cross(u);
                const float band_r = h * float(std::sin(theta));
                const float su = std::max(3.6f * band_r / float(segs), 0.02f * h);
                const float sv = 1.8f * h * float(M_PI) / float(bands) / 3.f;
                add_splat(n * h, u, v, n, su, sv,
                          face_texture(kFaces[b % 6], phi / (2.0 * M_PI), theta / M_PI));
            }
    }

    // Orbit cameras on two alternating elevation rings.
    const float focal =
        0.5f * float(config.resolution) / std::tan(float(config.fov_deg) * float(M_PI) / 360.f);
    SfmCamera cam_info;
    cam_info.camera_id = 1;
    cam_info.model = "PINHOLE";
    cam_info.width = cam_info.height = config.resolution;
    cam_info.fx = cam_info.fy = double(focal);
    cam_info.cx = cam_info.cy = double(config.resolution) / 2.0;
    out.bundle.cameras[1] = cam_info;

    RenderOptions<float> opts;  // black background
    for (int v = 0; v < config.views; ++v) {
        const double azimuth = 2.0 * M_PI * double(v) / double(config.views);
        const double elevation = (v % 2 == 0 ? 28.0 : 52.0) * M_PI / 180.0;
        const double r = config.orbit_radius * config.cube_half;
        Eigen::Vector3f eye(float(r * std::cos(elevation) * std::cos(azimuth)),
                            float(r * std::cos(elevation) * std::sin(azimuth)),
                            float(r * std::sin(elevation)));
        Camera<float> cam = make_lookat_camera(config.resolution, config.resolution,
                                               focal, eye, {0, 0, 0});

        char name[64];
        std::snprintf(name, sizeof name, "view_%03d.png", v);
        SfmImage img;
        img.image_id = v + 1;
        img.camera_id = 1;
        img.name = name;
        Eigen::Quaterniond q(cam.rotation.cast<double>());
        q.normalize();
        img.quat = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
        if (img.quat[0] < 0) img.quat = -img.quat;
        img.translation = cam.translation.cast<double>();
        out.bundle.images.push_back(std::move(img));

        out.images.push_back(rasterize(out.ground_truth, cam, opts).color);
    }

    // SfM cloud: a deterministic subsample of ground-truth centers plus the
    // eight cube corners (hull anchors), colored from the texture.
    SplitMix64 rng(hash_combine(config.seed, 0xc10dULL));
    std::vector<std::size_t> order(out.ground_truth.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    std::uint64_t next_id = 1;
    const std::size_t target = std::min<std::size_t>(std::size_t(config.sfm_points),
                                                     out.ground_truth.size());
    for (std::size_t i = 0; i < target; ++i) {
        const auto& splat = out.ground_truth.gaussians[order[i]];
        SfmPoint pt;
        pt.point_id = next_id++;
        pt.xyz = splat.position.cast<double>();
        Eigen::Vector3f color =
            (splat.sh.row(0).transpose() * float(shc::C0)).array() + 0.5f;
        for (int c = 0; c < 3; ++c)
            pt.rgb[c] = std::clamp(int(srgb_encode(double(color[c])) * 255.0 + 0.5), 0, 255);
        pt.error = 0.5;
        pt.track_length = 2;
        out.bundle.points.push_back(pt);
    }
    if (config.shape != "sphere") {
        // Hull anchors: the extreme corners (z = 0 for the plane).
        for (int corner = 0; corner < 8; ++corner) {
            if (config.shape == "plane" && (corner >> 2)) break;
            SfmPoint pt;
            pt.point_id = next_id++;
            pt.xyz = Eigen::Vector3d((corner & 1) ? h : -h,
                                     ((corner >> 1) & 1) ? h : -h,
                                     config.shape == "plane" ? 0.0
                                         : (((corner >> 2) & 1) ? h : -h));
            pt.rgb = Eigen::Matrix<int, 3, 1>(128, 128, 128);
            pt.error = 0.5;
            pt.track_length = 2;
            out.bundle.points.push_back(pt);
        }
    }

    return out;
}

}  // namespace ea3d
