#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "ea3d/error.hpp"
#include "ea3d/rasterizer.hpp"
#include "ea3d/scene.hpp"
#include "ea3d/util.hpp"

namespace ea3d {

/// Global importance scores: GS_j = hit_count_j * opacity_j * gamma_j,
/// where a "hit" is a contribution accepted by the compositor before early
/// termination, summed over all training rays.
struct ImportanceScores {
    std::vector<double> scores;
    int views = 0;
    int height = 0, width = 0;
};

/// Per-Gaussian weight sigma_j * gamma_j(Sigma). gamma is the normalized
/// volume term min(V/V90, 1)^0.1 with V the product of activated scales
/// and V90 the 90th-percentile volume (nearest-rank).
template <class S>
std::vector<double> importance_weights(const SceneModel<S>& scene) {
    std::vector<double> volumes(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        Vec3<S> s = scene.gaussians[i].scale();
        volumes[i] = double(s.x()) * double(s.y()) * double(s.z());
    }
    const double v90 = percentile(volumes, 0.9);
    std::vector<double> weights(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        double gamma = v90 > 0.0 ? std::pow(std::min(volumes[i] / v90, 1.0), 0.1) : 1.0;
        weights[i] = double(scene.gaussians[i].opacity()) * gamma;
    }
    return weights;
}

template <class S>
ImportanceScores accumulate_importance(const SceneModel<S>& scene,
                                       const std::vector<Camera<S>>& cameras,
                                       const RenderOptions<S>& opts = {}) {
    if (cameras.empty())
        throw Error(ErrorCode::empty_input, "importance needs at least one camera");

    std::vector<std::uint64_t> hits(scene.size(), 0);
    ImportanceScores out;
    for (const auto& cam : cameras) {
        auto ctx = rasterize_forward(scene, cam, opts);
        for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += ctx.hits[i];
        out.height = cam.height;
        out.width = cam.width;
    }
    out.views = int(cameras.size());

    const auto weights = importance_weights(scene);
    out.scores.resize(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i)
        out.scores[i] = double(hits[i]) * weights[i];
    return out;
}

template <class S>
struct PruneResult {
    SceneModel<S> scene;
    std::vector<int> survivors;  // indices into the input scene, in order
    std::size_t removed = 0;
    bool all_protected = false;  // quota entirely blocked by the mask
};

/// Removes the floor(ratio*N) lowest-score Gaussians, skipping protected
/// ones without substitution. Survivor order is preserved.
template <class S>
PruneResult<S> prune(const SceneModel<S>& scene, const ImportanceScores& scores,
                     double ratio, const std::vector<std::uint8_t>& protect_mask = {}) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw Error(ErrorCode::config_error, "prune ratio must be in (0,1)");
    if (scores.scores.size() != scene.size())
        throw Error(ErrorCode::shape_mismatch, "scores not aligned with scene");
    if (!protect_mask.empty() && protect_mask.size() != scene.size())
        throw Error(ErrorCode::shape_mismatch, "protect mask not aligned with scene");

    const std::size_t quota = std::size_t(ratio * double(scene.size()));
    std::vector<int> order(scene.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores.scores[std::size_t(a)] != scores.scores[std::size_t(b)])
            return scores.scores[std::size_t(a)] < scores.scores[std::size_t(b)];
        return a < b;
    });

    std::vector<std::uint8_t> drop(scene.size(), 0);
    std::size_t dropped = 0, blocked = 0;
    for (std::size_t r = 0; r < quota && r < order.size(); ++r) {
        int idx = order[r];
        if (!protect_mask.empty() && protect_mask[std::size_t(idx)]) {
            ++blocked;
            continue;  // skip without substitution
        }
        drop[std::size_t(idx)] = 1;
        ++dropped;
    }

    PruneResult<S> out;
    out.scene.sh_degree = scene.sh_degree;
    out.scene.mesh = scene.mesh;
    out.removed = dropped;
    out.all_protected = quota > 0 && dropped == 0 && blocked == quota;
    out.scene.gaussians.reserve(scene.size() - dropped);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (drop[i]) continue;
        out.scene.gaussians.push_back(scene.gaussians[i]);
        out.survivors.push_back(int(i));
    }
    if (!out.scene.any_anchored()) out.scene.mesh.reset();
    return out;
}

/// Surface-variation curvature per point: rho = lambda_0 / sum(lambda),
/// eigenvalues of the covariance of the point plus its K nearest
/// neighbors, lambda_0 the smallest. 0 on planes, 1/3 for isotropic
/// neighborhoods. protect_mask marks rho < tau.
struct CurvatureField {
    std::vector<double> rho;
    std::vector<std::vector<int>> knn;
    std::vector<std::uint8_t> protect_mask;
    double tau = 0.0;
};

namespace detail {

/// Exact k-nearest-neighbor indices (ties broken by index). Grid-hash
/// accelerated above the brute-force threshold; both paths return the
/// same neighbors.
class KnnIndex {
public:
    explicit KnnIndex(const std::vector<Eigen::Vector3d>& pts) : pts_(pts) {
        if (pts.size() < 2000) return;  // brute force below this
        Eigen::Vector3d lo = pts[0], hi = pts[0];
        for (const auto& p : pts) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        double extent = std::max((hi - lo).maxCoeff(), 1e-300);
        // ~8 points per cell on average
        double target_cells = double(pts.size()) / 8.0;
        cell_ = extent / std::max(1.0, std::cbrt(target_cells));
        origin_ = lo;
        for (int i = 0; i < int(pts.size()); ++i) grid_[key(pts[std::size_t(i)])].push_back(i);
        use_grid_ = true;
    }

    std::vector<int> query(int self, int k) const {
        std::vector<std::pair<double, int>> cand;
        if (!use_grid_) {
            cand.reserve(pts_.size() - 1);
            for (int j = 0; j < int(pts_.size()); ++j)
                if (j != self)
                    cand.emplace_back((pts_[std::size_t(j)] - pts_[std::size_t(self)]).squaredNorm(), j);
        } else {
            const Eigen::Vector3d& p = pts_[std::size_t(self)];
            auto base = cell_of(p);
            for (int ring = 0;; ++ring) {
                scan_ring(base, ring, self, p, cand);
                if (int(cand.size()) >= k) {
                    std::nth_element(cand.begin(), cand.begin() + k - 1, cand.end());
                    double kth = cand[std::size_t(k - 1)].first;
                    double safe = double(ring) * cell_;
                    if (safe * safe >= kth) break;
                }
            }
        }
        int k_eff = std::min<int>(k, int(cand.size()));
        std::partial_sort(cand.begin(), cand.begin() + k_eff, cand.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first < b.first;
                              return a.second < b.second;
                          });
        std::vector<int> out(static_cast<std::size_t>(k_eff));
        for (int i = 0; i < k_eff; ++i) out[std::size_t(i)] = cand[std::size_t(i)].second;
        return out;
    }

private:
    using Cell = std::array<std::int64_t, 3>;
    struct CellHash {
        std::size_t operator()(const Cell& c) const {
            std::uint64_t h = 1469598103934665603ULL;
            for (auto v : c) {
                h ^= std::uint64_t(v);
                h *= 1099511628211ULL;
            }
            return std::size_t(h);
        }
    };

    Cell cell_of(const Eigen::Vector3d& p) const {
        return {std::int64_t(std::floor((p.x() - origin_.x()) / cell_)),
                std::int64_t(std::floor((p.y() - origin_.y()) / cell_)),
                std::int64_t(std::floor((p.z() - origin_.z()) / cell_))};
    }
    Cell key(const Eigen::Vector3d& p) const { return cell_of(p); }

    void scan_ring(const Cell& base, int ring, int self, const Eigen::Vector3d& p,
                   std::vector<std::pair<double, int>>& cand) const {
        for (std::int64_t dx = -ring; dx <= ring; ++dx)
            for (std::int64_t dy = -ring; dy <= ring; ++dy)
                for (std::int64_t dz = -ring; dz <= ring; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                        continue;
                    auto it = grid_.find({base[0] + dx, base[1] + dy, base[2] + dz});
                    if (it == grid_.end()) continue;
                    for (int j : it->second)
                        if (j != self)
                            cand.emplace_back((pts_[std::size_t(j)] - p).squaredNorm(), j);
                }
    }

    const std::vector<Eigen::Vector3d>& pts_;
    bool use_grid_ = false;
    double cell_ = 1.0;
    Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
    std::unordered_map<Cell, std::vector<int>, CellHash> grid_;
};

}  // namespace detail

inline CurvatureField local_curvature(const std::vector<Eigen::Vector3d>& positions,
                                      int k, double tau) {
    if (k < 3) throw Error(ErrorCode::config_error, "kNN size must be >= 3");
    if (positions.size() < std::size_t(k) + 1)
        throw Error(ErrorCode::insufficient_points,
                    "curvature needs at least K+1 points");

    detail::KnnIndex index(positions);
    CurvatureField field;
    field.tau = tau;
    field.rho.resize(positions.size());
    field.knn.resize(positions.size());
    field.protect_mask.resize(positions.size());

    parallel_for(positions.size(), [&](std::size_t lo, std::size_t hi, int) {
        for (std::size_t i = lo; i < hi; ++i) {
            auto nbrs = index.query(int(i), k);
            field.knn[i] = nbrs;

            // Two-pass centered covariance over self + neighbors.
            Eigen::Vector3d mean = positions[i];
            for (int j : nbrs) mean += positions[std::size_t(j)];
            mean /= double(nbrs.size() + 1);
            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            Eigen::Vector3d d = positions[i] - mean;
            cov += d * d.transpose();
            for (int j : nbrs) {
                d = positions[std::size_t(j)] - mean;
                cov += d * d.transpose();
            }
            cov /= double(nbrs.size() + 1);

            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
            const double l0 = std::max(es.eigenvalues()[0], 0.0);
            const double sum = es.eigenvalues().cwiseMax(0.0).sum();
            double rho = sum > 0.0 ? l0 / sum : 0.0;
            field.rho[i] = std::clamp(rho, 0.0, 1.0 / 3.0);
            field.protect_mask[i] = field.rho[i] < tau ? 1 : 0;
        }
    });
    return field;
}

template <class S>
std::vector<Eigen::Vector3d> scene_positions(const SceneModel<S>& scene) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(scene.size());
    for (const auto& g : scene.gaussians)
        out.push_back(g.position.template cast<double>());
    return out;
}

/// Inserts one un-anchored clone per sub-threshold (rho < tau) point,
/// offset by a 0.5-sigma sample of its own covariance, scales shrunk by
/// 1/1.6, opacity and color copied. Clones are appended in index order.
template <class S>
SceneModel<S> densify_low_curvature(const SceneModel<S>& scene,
                                    const CurvatureField& curvature, double tau,
                                    std::uint64_t seed) {
    if (curvature.rho.size() != scene.size())
        throw Error(ErrorCode::shape_mismatch, "curvature not aligned with scene");

    SceneModel<S> out = scene;
    const S log_shrink = S(std::log(1.6));
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!(curvature.rho[i] < tau)) continue;
        const auto& g = scene.gaussians[i];
        Gaussian<S> clone = g;
        clone.anchor.reset();

        SplitMix64 rng(hash_combine(seed, i));
        Vec3<S> n(S(rng.normal()), S(rng.normal()), S(rng.normal()));
        Mat3<S> m = quat_to_matrix(g.unit_rotation()) * g.scale().asDiagonal();
        clone.position = g.position + S(0.5) * (m * n);
        clone.log_scale = g.log_scale.array() - log_shrink;
        out.gaussians.push_back(std::move(clone));
    }
    return out;
}

}  // namespace ea3d
