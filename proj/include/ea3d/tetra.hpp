#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "ea3d/error.hpp"
#include "ea3d/scene.hpp"

namespace ea3d {

/// Delaunay tetrahedralization over a point cloud. Faces are deduplicated:
/// a face shared by two tetrahedra appears once. Construction is
/// deterministic for a given input; the finished mesh is immutable.
struct TetraMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 4>> tetrahedra;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<int, 4>> face_of_tet;  // face id opposite vertex i

    std::size_t face_count() const { return faces.size(); }
};

/// Robust incremental Delaunay over the input points.
/// Duplicates are merged at 1e-9 of the bounding-box extent; exactly
/// degenerate (coplanar/collinear) inputs receive a seeded jitter of about
/// 1.2e-7 of the extent before construction.
/// Throws insufficient_points (< 4 distinct) or degenerate_input (still
/// coplanar after jitter).
TetraMesh delaunay_tetrahedralize(const std::vector<Eigen::Vector3d>& points);

/// alpha1*v1 + alpha2*v2 + alpha3*v3. Weights must satisfy the simplex
/// constraint (alpha_i >= 0, sum == 1 within 1e-9).
inline Eigen::Vector3d barycentric_position(const Eigen::Vector3d& v1,
                                            const Eigen::Vector3d& v2,
                                            const Eigen::Vector3d& v3,
                                            const Eigen::Vector3d& weights) {
    if (weights.minCoeff() < -1e-9 || std::abs(weights.sum() - 1.0) > 1e-9)
        throw Error(ErrorCode::invalid_weights,
                    "barycentric weights violate the simplex constraint");
    return weights.x() * v1 + weights.y() * v2 + weights.z() * v3;
}

/// Local frame of a triangular face: centroid, unit normal, two in-plane
/// axes with their extents, plus a thickness extent for near-flat splats.
struct FaceFrame {
    int face_id = -1;
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    Eigen::Vector3d axis_u = Eigen::Vector3d::UnitX();
    Eigen::Vector3d axis_v = Eigen::Vector3d::UnitY();
    Eigen::Vector3d edge_scales = Eigen::Vector3d::Ones();  // (u, v, thickness)
};

inline FaceFrame face_frame(const TetraMesh& mesh, int face_id,
                            double thickness_ratio = 0.05) {
    const auto& f = mesh.faces.at(std::size_t(face_id));
    const Eigen::Vector3d& a = mesh.vertices[std::size_t(f[0])];
    const Eigen::Vector3d& b = mesh.vertices[std::size_t(f[1])];
    const Eigen::Vector3d& c = mesh.vertices[std::size_t(f[2])];

    FaceFrame frame;
    frame.face_id = face_id;
    frame.centroid = (a + b + c) / 3.0;

    Eigen::Vector3d e1 = b - a, e2 = c - a;
    Eigen::Vector3d n = e1.cross(e2);
    double n_norm = n.norm();
    if (n_norm > 0.0) frame.normal = n / n_norm;
    double e1_norm = e1.norm();
    frame.axis_u = e1_norm > 0.0 ? Eigen::Vector3d(e1 / e1_norm)
                                 : Eigen::Vector3d::UnitX();
    frame.axis_v = frame.normal.cross(frame.axis_u);

    auto extent = [&](const Eigen::Vector3d& axis) {
        double pa = axis.dot(a), pb = axis.dot(b), pc = axis.dot(c);
        double lo = std::min({pa, pb, pc}), hi = std::max({pa, pb, pc});
        return 0.5 * (hi - lo);
    };
    double eu = std::max(extent(frame.axis_u), kScaleFloor);
    double ev = std::max(extent(frame.axis_v), kScaleFloor);
    frame.edge_scales =
        Eigen::Vector3d(eu, ev, std::max(thickness_ratio * std::min(eu, ev), kScaleFloor));
    return frame;
}

/// Barycentric weights used to spread k splats over one face: the first k
/// interior points (lexicographic) of the smallest triangular lattice that
/// has at least k interior points. k=1 yields the centroid.
inline std::vector<Eigen::Vector3d> splat_spread_weights(int k) {
    std::vector<Eigen::Vector3d> weights;
    for (int order = 3; int(weights.size()) < k; ++order) {
        weights.clear();
        for (int i = 1; i < order && int(weights.size()) < k; ++i)
            for (int j = 1; i + j < order && int(weights.size()) < k; ++j)
                weights.emplace_back(double(i) / order, double(j) / order,
                                     double(order - i - j) / order);
    }
    return weights;
}

/// Recomputes every anchored position from its barycentric logits.
/// Anchored positions are derived from the convex combination, never free.
template <class S>
void refresh_anchored_positions(SceneModel<S>& scene) {
    if (!scene.mesh) return;
    for (auto& g : scene.gaussians) {
        if (!g.anchor) continue;
        const auto& f = scene.mesh->faces.at(std::size_t(g.anchor->face_id));
        g.position = barycentric_position(scene.mesh->vertices[std::size_t(f[0])],
                                          scene.mesh->vertices[std::size_t(f[1])],
                                          scene.mesh->vertices[std::size_t(f[2])],
                                          g.anchor->weights_double())
                         .template cast<S>();
    }
}

/// Instantiates exactly k face-anchored Gaussians per unique face.
/// Rotation is aligned to the face frame; in-plane scales come from the
/// edge extents and the thickness scale is 0.05 * min(extent).
template <class S>
SceneModel<S> init_gaussians_on_faces(std::shared_ptr<const TetraMesh> mesh, int k,
                                      int sh_degree) {
    if (!mesh || mesh->faces.empty())
        throw Error(ErrorCode::empty_mesh, "mesh has no faces");
    if (k < 1) throw Error(ErrorCode::config_error, "k must be >= 1");
    if (sh_degree < 0 || sh_degree > kMaxShDegree)
        throw Error(ErrorCode::config_error, "unsupported SH degree");

    const auto spread = splat_spread_weights(k);
    const double spread_sigma = 0.5 / std::sqrt(double(k));

    SceneModel<S> scene;
    scene.sh_degree = sh_degree;
    scene.mesh = mesh;
    scene.gaussians.reserve(mesh->faces.size() * std::size_t(k));

    const int n_coeffs = sh_coeff_count(sh_degree);
    for (int face_id = 0; face_id < int(mesh->faces.size()); ++face_id) {
        FaceFrame frame = face_frame(*mesh, face_id);
        Eigen::Matrix3d rot;
        rot.col(0) = frame.axis_u;
        rot.col(1) = frame.axis_v;
        rot.col(2) = frame.normal;
        Eigen::Quaterniond q(rot);
        q.normalize();

        const auto& f = mesh->faces[std::size_t(face_id)];
        for (int s = 0; s < k; ++s) {
            Gaussian<S> g;
            Anchor<S> anchor;
            anchor.face_id = face_id;
            anchor.logits = spread[std::size_t(s)].array().log().matrix().cast<S>();
            g.anchor = anchor;
            g.position = barycentric_position(mesh->vertices[std::size_t(f[0])],
                                              mesh->vertices[std::size_t(f[1])],
                                              mesh->vertices[std::size_t(f[2])],
                                              anchor.weights_double())
                             .template cast<S>();
            g.rotation = Vec4<S>(S(q.w()), S(q.x()), S(q.y()), S(q.z()));
            g.log_scale = Vec3<S>(S(std::log(frame.edge_scales.x() * spread_sigma)),
                                  S(std::log(frame.edge_scales.y() * spread_sigma)),
                                  S(std::log(frame.edge_scales.z())));
            g.opacity_logit = S(logit(0.1));
            g.sh = ShBlock<S>::Zero(n_coeffs, 3);
            scene.gaussians.push_back(std::move(g));
        }
    }
    return scene;
}

}  // namespace ea3d
