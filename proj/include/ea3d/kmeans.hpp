#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "ea3d/error.hpp"
#include "ea3d/util.hpp"

namespace ea3d {

struct KMeansResult {
    Eigen::MatrixXd centroids;     // K x d
    std::vector<int> assignments;  // per input row
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> inertia_history;  // one entry per accepted Lloyd step
};

namespace detail {

inline void assign_step(const Eigen::MatrixXd& data, const Eigen::MatrixXd& centroids,
                        std::vector<int>& assign, Eigen::VectorXd& min_dist,
                        double& inertia) {
    const Eigen::Index n = data.rows(), k = centroids.rows();
    // ||x||^2 + ||c||^2 - 2 x.c, argmin per row; the cross term is a GEMM.
    Eigen::VectorXd x2 = data.rowwise().squaredNorm();
    Eigen::VectorXd c2 = centroids.rowwise().squaredNorm();
    Eigen::MatrixXd cross = data * centroids.transpose();  // n x k
    assign.assign(std::size_t(n), 0);
    min_dist.resize(n);
    inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        int best_j = 0;
        for (Eigen::Index j = 0; j < k; ++j) {
            double d = x2[i] + c2[j] - 2.0 * cross(i, j);
            if (d < best) {
                best = d;
                best_j = int(j);
            }
        }
        best = std::max(best, 0.0);  // rounding can dip below zero
        assign[std::size_t(i)] = best_j;
        min_dist[i] = best;
        inertia += best;
    }
}

}  // namespace detail

/// Lloyd iterations with k-means++ seeding. Stops at max_iters or when the
/// relative inertia change falls below 1e-5; the reported inertia sequence
/// is non-increasing by construction (a rounding-level increase restores
/// the previous iterate and stops). Empty clusters are re-seeded from the
/// point farthest from its centroid.
inline KMeansResult kmeans(const Eigen::MatrixXd& data, int k, int max_iters,
                           std::uint64_t seed) {
    const Eigen::Index n = data.rows(), d = data.cols();
    if (d == 0) throw Error(ErrorCode::shape_mismatch, "k-means on 0-dimensional data");
    if (n < 1 || k < 1)
        throw Error(ErrorCode::config_error, "k-means needs N >= 1 and K >= 1");

    KMeansResult res;

    // Exact-cover fast path: no more distinct rows than centroids.
    {
        std::unordered_map<std::uint64_t, int> seen;
        std::vector<Eigen::Index> distinct;
        for (Eigen::Index i = 0; i < n && Eigen::Index(distinct.size()) <= Eigen::Index(k); ++i) {
            std::uint64_t h = 1469598103934665603ULL;
            for (Eigen::Index c = 0; c < d; ++c) {
                double v = data(i, c);
                const unsigned char* b = reinterpret_cast<const unsigned char*>(&v);
                for (std::size_t x = 0; x < sizeof v; ++x) {
                    h ^= b[x];
                    h *= 1099511628211ULL;
                }
            }
            if (seen.emplace(h, int(distinct.size())).second) distinct.push_back(i);
        }
        if (Eigen::Index(distinct.size()) <= Eigen::Index(k)) {
            res.centroids.resize(k, d);
            for (int j = 0; j < k; ++j)
                res.centroids.row(j) =
                    data.row(distinct[std::size_t(j) % distinct.size()]);
            Eigen::VectorXd min_dist;
            detail::assign_step(data, res.centroids, res.assignments, min_dist,
                                res.inertia);
            res.inertia_history.push_back(res.inertia);
            return res;
        }
    }

    // k-means++ seeding.
    SplitMix64 rng(seed);
    Eigen::MatrixXd centroids(k, d);
    centroids.row(0) = data.row(Eigen::Index(rng.below(std::uint64_t(n))));
    Eigen::VectorXd dist2 =
        (data.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int j = 1; j < k; ++j) {
        double total = dist2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            double run = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                run += dist2[i];
                if (run >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = Eigen::Index(rng.below(std::uint64_t(n)));
        }
        centroids.row(j) = data.row(pick);
        dist2 = dist2.cwiseMin(
            (data.rowwise() - centroids.row(j)).rowwise().squaredNorm());
    }

    std::vector<int> assign;
    Eigen::VectorXd min_dist;
    double prev_inertia = std::numeric_limits<double>::max();
    Eigen::MatrixXd prev_centroids = centroids;
    std::vector<int> prev_assign;

    for (int it = 0; it < std::max(max_iters, 1); ++it) {
        double inertia;
        detail::assign_step(data, centroids, assign, min_dist, inertia);
        if (inertia > prev_inertia) {
            // Rounding-level regression: keep the previous iterate.
            centroids = prev_centroids;
            assign = prev_assign;
            inertia = prev_inertia;
            res.iterations = it;
            break;
        }
        res.iterations = it + 1;
        res.inertia_history.push_back(inertia);
        prev_centroids = centroids;
        prev_assign = assign;
        bool converged =
            prev_inertia != std::numeric_limits<double>::max() &&
            (prev_inertia - inertia) <= 1e-5 * std::max(prev_inertia, 1e-300);
        prev_inertia = inertia;
        if (converged || it == max_iters - 1) break;

        // Update step.
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
        std::vector<std::int64_t> counts(std::size_t(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[std::size_t(i)]) += data.row(i);
            counts[std::size_t(assign[std::size_t(i)])]++;
        }
        for (int j = 0; j < k; ++j) {
            if (counts[std::size_t(j)] > 0) {
                centroids.row(j) = sums.row(j) / double(counts[std::size_t(j)]);
            } else {
                // Re-seed from the farthest point (deterministic tie by index).
                Eigen::Index far = 0;
                double best = -1.0;
                for (Eigen::Index i = 0; i < n; ++i)
                    if (min_dist[i] > best) {
                        best = min_dist[i];
                        far = i;
                    }
                centroids.row(j) = data.row(far);
                min_dist[far] = 0.0;
            }
        }
    }

    res.centroids = centroids;
    res.assignments = assign;
    res.inertia = prev_inertia;
    return res;
}

}  // namespace ea3d
