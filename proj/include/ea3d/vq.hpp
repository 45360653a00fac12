#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "ea3d/error.hpp"
#include "ea3d/kmeans.hpp"
#include "ea3d/scene.hpp"

namespace ea3d {

/// One attribute-group codebook: centroid table plus per-Gaussian indices.
struct Codebook {
    Eigen::MatrixXf centroids;           // K x d
    std::vector<std::uint32_t> indices;  // N

    std::uint32_t k() const { return std::uint32_t(centroids.rows()); }
    std::uint32_t dim() const { return std::uint32_t(centroids.cols()); }
};

/// Quantized groups: color DC (3), SH rest ((L+1)^2-1)*3, scale (3, log
/// domain), rotation (4, normalized). Positions and opacities stay raw.
struct CodebookSet {
    Codebook color_dc, sh_rest, scale, rotation;
};

struct VqConfig {
    int k_color = 8192;
    int k_sh = 8192;
    int k_scale = 8192;
    int k_rotation = 8192;
    int max_iters = 12;
    int train_subsample = 65536;  // Lloyd runs on at most this many rows
    std::uint64_t seed = 0;
};

template <class S>
struct QuantizeResult {
    CodebookSet books;
    SceneModel<S> reconstructed;  // attributes replaced by their centroids
};

template <class S>
SceneModel<S> reconstruct_scene(const SceneModel<S>& scene, const CodebookSet& books);

namespace detail {

/// Sign-canonical unit quaternion (q and -q encode the same rotation, so
/// clustering runs on one hemisphere).
template <class S>
Eigen::Vector4d canonical_quat(const Gaussian<S>& g) {
    Eigen::Vector4d q = g.unit_rotation().template cast<double>();
    for (int i = 0; i < 4; ++i) {
        if (q[i] > 0.0) break;
        if (q[i] < 0.0) {
            q = -q;
            break;
        }
    }
    return q;
}

/// k-means on a (possibly subsampled) copy, then a full assignment pass
/// against the float-rounded centroids so decode(encode(x)) is exactly the
/// nearest stored centroid.
inline Codebook build_codebook(const Eigen::MatrixXd& rows, int k, int max_iters,
                               int subsample, std::uint64_t seed,
                               bool unit_rows = false) {
    Codebook book;
    if (rows.cols() == 0) {
        book.centroids.resize(0, 0);
        book.indices.assign(std::size_t(rows.rows()), 0);
        return book;
    }
    Eigen::MatrixXd train = rows;
    if (rows.rows() > subsample) {
        train.resize(subsample, rows.cols());
        // Deterministic stride-with-offset subsample.
        SplitMix64 rng(seed ^ 0x5eedULL);
        std::size_t stride = std::size_t(rows.rows()) / std::size_t(subsample);
        std::size_t offset = rng.below(stride);
        for (int i = 0; i < subsample; ++i)
            train.row(i) = rows.row(Eigen::Index(offset + std::size_t(i) * stride));
    }
    KMeansResult km = kmeans(train, std::min<int>(k, int(train.rows())), max_iters, seed);
    if (unit_rows) {
        // Centroids of unit vectors (quaternions) go back onto the sphere
        // before the table is frozen.
        for (Eigen::Index j = 0; j < km.centroids.rows(); ++j) {
            double nrm = km.centroids.row(j).norm();
            if (nrm > 0.0) km.centroids.row(j) /= nrm;
        }
    }
    book.centroids = km.centroids.cast<float>();

    // Final assignment against the stored (float) centroids, exact in double.
    Eigen::MatrixXd cf = book.centroids.cast<double>();
    std::vector<int> assign;
    Eigen::VectorXd min_dist;
    double inertia;
    assign_step(rows, cf, assign, min_dist, inertia);
    book.indices.assign(assign.begin(), assign.end());
    return book;
}

}  // namespace detail

/// Quantizes the four attribute groups independently with K-Means;
/// positions, opacities, and anchors are copied through untouched. The
/// reconstructed scene replaces each attribute vector with its assigned
/// centroid.
template <class S>
QuantizeResult<S> quantize_scene(const SceneModel<S>& scene, const VqConfig& cfg) {
    const std::size_t n = scene.size();
    const int n_coeffs = sh_coeff_count(scene.sh_degree);
    const int d_rest = (n_coeffs - 1) * 3;

    Eigen::MatrixXd color(n, 3), rest(n, std::max(d_rest, 0)), scale(n, 3), rot(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = scene.gaussians[i];
        color.row(Eigen::Index(i)) = g.sh.row(0).template cast<double>();
        for (int r = 1; r < n_coeffs; ++r)
            for (int c = 0; c < 3; ++c)
                rest(Eigen::Index(i), (r - 1) * 3 + c) = double(g.sh(r, c));
        scale.row(Eigen::Index(i)) = g.log_scale.template cast<double>().transpose();
        rot.row(Eigen::Index(i)) = detail::canonical_quat(g).transpose();
    }

    QuantizeResult<S> out;
    if (n == 0) {
        out.reconstructed = scene;
        return out;
    }
    out.books.color_dc = detail::build_codebook(color, cfg.k_color, cfg.max_iters,
                                                cfg.train_subsample, cfg.seed + 1);
    out.books.sh_rest = detail::build_codebook(rest, cfg.k_sh, cfg.max_iters,
                                               cfg.train_subsample, cfg.seed + 2);
    out.books.scale = detail::build_codebook(scale, cfg.k_scale, cfg.max_iters,
                                             cfg.train_subsample, cfg.seed + 3);
    out.books.rotation =
        detail::build_codebook(rot, cfg.k_rotation, cfg.max_iters,
                               cfg.train_subsample, cfg.seed + 4, /*unit_rows=*/true);

    out.reconstructed = reconstruct_scene(scene, out.books);
    return out;
}

/// Re-encodes a scene against existing codebooks (centroids unchanged,
/// indices reassigned to the nearest centroid in L2).
template <class S>
CodebookSet encode_with_books(const SceneModel<S>& scene, const CodebookSet& books) {
    const std::size_t n = scene.size();
    const int n_coeffs = sh_coeff_count(scene.sh_degree);
    const int d_rest = (n_coeffs - 1) * 3;

    CodebookSet out = books;
    auto reassign = [n](const Eigen::MatrixXd& rows, Codebook& book) {
        if (book.dim() == 0) {
            book.indices.assign(n, 0);
            return;
        }
        Eigen::MatrixXd cents = book.centroids.cast<double>();
        std::vector<int> assign;
        Eigen::VectorXd min_dist;
        double inertia;
        detail::assign_step(rows, cents, assign, min_dist, inertia);
        book.indices.assign(assign.begin(), assign.end());
    };

    Eigen::MatrixXd color(n, 3), rest(n, std::max(d_rest, 0)), scale(n, 3), rot(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = scene.gaussians[i];
        color.row(Eigen::Index(i)) = g.sh.row(0).template cast<double>();
        for (int r = 1; r < n_coeffs; ++r)
            for (int c = 0; c < 3; ++c)
                rest(Eigen::Index(i), (r - 1) * 3 + c) = double(g.sh(r, c));
        scale.row(Eigen::Index(i)) = g.log_scale.template cast<double>().transpose();
        rot.row(Eigen::Index(i)) = detail::canonical_quat(g).transpose();
    }
    reassign(color, out.color_dc);
    if (d_rest > 0) reassign(rest, out.sh_rest);
    reassign(scale, out.scale);
    reassign(rot, out.rotation);
    return out;
}

/// Applies codebook centroids back onto a scene skeleton (positions,
/// opacities, anchors, SH degree from `scene`).
template <class S>
SceneModel<S> reconstruct_scene(const SceneModel<S>& scene, const CodebookSet& books) {
    const std::size_t n = scene.size();
    if (books.color_dc.indices.size() != n || books.scale.indices.size() != n ||
        books.rotation.indices.size() != n ||
        (books.sh_rest.dim() > 0 && books.sh_rest.indices.size() != n))
        throw Error(ErrorCode::shape_mismatch, "codebook indices not aligned");

    const int n_coeffs = sh_coeff_count(scene.sh_degree);
    SceneModel<S> out = scene;
    for (std::size_t i = 0; i < n; ++i) {
        auto& g = out.gaussians[i];
        const auto dc = books.color_dc.centroids.row(
            Eigen::Index(books.color_dc.indices[i]));
        for (int c = 0; c < 3; ++c) g.sh(0, c) = S(dc[c]);
        if (books.sh_rest.dim() > 0) {
            const auto rr =
                books.sh_rest.centroids.row(Eigen::Index(books.sh_rest.indices[i]));
            for (int r = 1; r < n_coeffs; ++r)
                for (int c = 0; c < 3; ++c) g.sh(r, c) = S(rr[(r - 1) * 3 + c]);
        }
        const auto sc =
            books.scale.centroids.row(Eigen::Index(books.scale.indices[i]));
        g.log_scale = Vec3<S>(S(sc[0]), S(sc[1]), S(sc[2]));
        const auto rq =
            books.rotation.centroids.row(Eigen::Index(books.rotation.indices[i]));
        g.rotation = Vec4<S>(S(rq[0]), S(rq[1]), S(rq[2]), S(rq[3]));
    }
    return out;
}

}  // namespace ea3d
