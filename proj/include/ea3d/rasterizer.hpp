#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "ea3d/error.hpp"
#include "ea3d/image.hpp"
#include "ea3d/scene.hpp"
#include "ea3d/tetra.hpp"
#include "ea3d/util.hpp"

namespace ea3d {

// Compositing constants shared by the tiled rasterizer, the reference
// compositor in the test suite, and the importance hit accounting. A splat
// contributes to a pixel iff q <= kMaxQ and alpha' >= kAlphaMin, with
// alpha' clamped to kAlphaClamp; compositing stops once transmittance
// drops below kTransmittanceMin.
inline constexpr double kLowpass = 0.3;        // px^2 added to Sigma' diagonal
inline constexpr double kMaxQ = 9.0;           // 3-sigma ellipse cut
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceMin = 1e-4;
inline constexpr int kTileSize = 16;

template <class S>
struct RenderOptions {
    Vec3<S> background = Vec3<S>::Zero();
    S near_plane = S(0.01);
};

/// Screen-space footprint of one Gaussian. cov2d is the projected
/// covariance J W Sigma W^T J^T; conic is the inverse of (cov2d + kLowpass * I).
template <class S>
struct ProjectedSplat {
    Vec2<S> mean2d = Vec2<S>::Zero();
    Mat2<S> cov2d = Mat2<S>::Zero();
    Vec3<S> conic = Vec3<S>::Zero();  // (cxx, cxy, cyy)
    S depth = S(0);
    Vec3<S> rgb = Vec3<S>::Zero();
    S opacity = S(0);
    int source_index = -1;
    // 3-sigma bounding rectangle (pixel indices, inclusive lo / exclusive hi)
    int x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
};

template <class S>
struct RenderOutput {
    Image<S> color;                     // H x W x 3
    Image<S> alpha;                     // H x W
    Image<std::uint32_t> contributors;  // H x W, accepted-splat counts per pixel
};

// Per-splat forward intermediates kept for the backward pass.
template <class S>
struct ProjCache {
    Vec3<S> mu_cam = Vec3<S>::Zero();
    Eigen::Matrix<S, 2, 3> t_mat = Eigen::Matrix<S, 2, 3>::Zero();  // J * W_R
    Mat3<S> sigma3 = Mat3<S>::Zero();
    Mat3<S> m_mat = Mat3<S>::Zero();  // R * diag(scale)
    Mat3<S> r_mat = Mat3<S>::Zero();
    Vec4<S> unit_q = Vec4<S>::Zero();
    S q_norm = S(1);
    Vec3<S> scale = Vec3<S>::Zero();
    Vec3<S> dir = Vec3<S>::Zero();
    S w_norm = S(1);
    S basis[16] = {};
    Vec3<S> rgb_pre = Vec3<S>::Zero();  // before the >= 0 clamp
    Mat2<S> cov_lp = Mat2<S>::Zero();
};

template <class S>
struct ParamGrads {
    std::vector<Vec3<S>> position;     // dL/dmu (world), every splat
    std::vector<Vec3<S>> bary_logits;  // anchored splats only, else zero
    std::vector<Vec4<S>> rotation;
    std::vector<Vec3<S>> log_scale;
    std::vector<S> opacity_logit;
    std::vector<ShBlock<S>> sh;

    explicit ParamGrads(std::size_t n = 0, int sh_coeffs = 16)
        : position(n, Vec3<S>::Zero()),
          bary_logits(n, Vec3<S>::Zero()),
          rotation(n, Vec4<S>::Zero()),
          log_scale(n, Vec3<S>::Zero()),
          opacity_logit(n, S(0)),
          sh(n, ShBlock<S>::Zero(sh_coeffs, 3)) {}
};

/// Forward state consumed by rasterize_backward and accumulate_importance.
template <class S>
struct RenderContext {
    Camera<S> camera;
    RenderOptions<S> options;
    std::size_t scene_size = 0;
    int sh_degree = 0;
    std::uint64_t scene_hash = 0;
    std::vector<ProjectedSplat<S>> splats;  // visible splats, scene order
    std::vector<ProjCache<S>> cache;
    std::vector<std::vector<int>> bins;     // per tile, depth-sorted
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::uint64_t> hits;        // per scene Gaussian
    RenderOutput<S> output;
};

namespace detail {

template <class S>
std::uint64_t scene_fingerprint(const SceneModel<S>& scene, const Camera<S>& cam) {
    // Best-effort staleness guard over the fields the optimizer moves.
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    std::uint64_t n = scene.size();
    mix(&n, sizeof n);
    for (const auto& g : scene.gaussians) {
        mix(g.position.data(), sizeof(S) * 3);
        mix(&g.opacity_logit, sizeof(S));
    }
    S cam_fields[4] = {cam.fx, cam.fy, cam.cx, cam.cy};
    mix(cam_fields, sizeof cam_fields);
    mix(cam.rotation.data(), sizeof(S) * 9);
    mix(cam.translation.data(), sizeof(S) * 3);
    return h;
}

// Per-splat screen-space gradient accumulators.
template <class S>
struct SplatAcc {
    Vec2<S> mean = Vec2<S>::Zero();
    Vec3<S> conic = Vec3<S>::Zero();
    S opacity = S(0);
    Vec3<S> rgb = Vec3<S>::Zero();
};

}  // namespace detail

/// Projects one Gaussian through the camera with the affine perspective
/// Jacobian. Returns nullopt when culled: center behind the
/// near plane or the 3-sigma rectangle outside the image.
template <class S>
std::optional<ProjectedSplat<S>> project_gaussian(const Gaussian<S>& g,
                                                  const Camera<S>& cam, int sh_degree,
                                                  S near_plane = S(0.01),
                                                  ProjCache<S>* cache = nullptr) {
    Vec3<S> mu_cam = cam.to_camera(g.position);
    if (!(mu_cam.z() > near_plane)) return std::nullopt;

    const S x = mu_cam.x(), y = mu_cam.y(), z = mu_cam.z();
    Eigen::Matrix<S, 2, 3> jac;
    jac << cam.fx / z, S(0), -cam.fx * x / (z * z),
           S(0), cam.fy / z, -cam.fy * y / (z * z);

    Vec4<S> uq = g.unit_rotation();
    Mat3<S> r = quat_to_matrix(uq);
    Vec3<S> scale = g.scale();
    Mat3<S> m = r * scale.asDiagonal();
    Mat3<S> sigma = m * m.transpose();

    Eigen::Matrix<S, 2, 3> t_mat = jac * cam.rotation;
    Mat2<S> cov2d = t_mat * sigma * t_mat.transpose();
    Mat2<S> cov_lp = cov2d;
    cov_lp(0, 0) += S(kLowpass);
    cov_lp(1, 1) += S(kLowpass);

    S det = cov_lp(0, 0) * cov_lp(1, 1) - cov_lp(0, 1) * cov_lp(1, 0);
    if (!(det > S(0))) return std::nullopt;  // numerically collapsed
    Vec3<S> conic(cov_lp(1, 1) / det, -cov_lp(0, 1) / det, cov_lp(0, 0) / det);

    ProjectedSplat<S> out;
    out.mean2d = Vec2<S>(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
    out.cov2d = cov2d;
    out.conic = conic;
    out.depth = z;
    out.opacity = g.opacity();

    const S rx = S(3) * std::sqrt(cov_lp(0, 0));
    const S ry = S(3) * std::sqrt(cov_lp(1, 1));
    out.x_lo = int(std::floor(out.mean2d.x() - rx));
    out.x_hi = int(std::ceil(out.mean2d.x() + rx)) + 1;
    out.y_lo = int(std::floor(out.mean2d.y() - ry));
    out.y_hi = int(std::ceil(out.mean2d.y() + ry)) + 1;
    out.x_lo = std::max(out.x_lo, 0);
    out.y_lo = std::max(out.y_lo, 0);
    out.x_hi = std::min(out.x_hi, cam.width);
    out.y_hi = std::min(out.y_hi, cam.height);
    if (out.x_lo >= out.x_hi || out.y_lo >= out.y_hi) return std::nullopt;

    Vec3<S> w = g.position - cam.center();
    S w_norm = w.norm();
    Vec3<S> dir = w_norm > S(0) ? Vec3<S>(w / w_norm) : Vec3<S>(S(0), S(0), S(1));
    S basis[16];
    sh_basis(dir, sh_degree, basis);
    const int n_coeffs = sh_coeff_count(sh_degree);
    Vec3<S> rgb_pre = Vec3<S>::Constant(S(0.5));
    for (int i = 0; i < n_coeffs; ++i) rgb_pre += basis[i] * g.sh.row(i).transpose();
    out.rgb = rgb_pre.cwiseMax(S(0));

    if (cache) {
        cache->mu_cam = mu_cam;
        cache->t_mat = t_mat;
        cache->sigma3 = sigma;
        cache->m_mat = m;
        cache->r_mat = r;
        cache->unit_q = uq;
        cache->q_norm = std::max(g.rotation.norm(), S(1e-30));
        cache->scale = scale;
        cache->dir = dir;
        cache->w_norm = w_norm;
        for (int i = 0; i < n_coeffs; ++i) cache->basis[i] = basis[i];
        cache->rgb_pre = rgb_pre;
        cache->cov_lp = cov_lp;
    }
    return out;
}

/// Full forward pass with tile binning; keeps the state needed by
/// rasterize_backward and the importance accounting.
template <class S>
RenderContext<S> rasterize_forward(const SceneModel<S>& scene, const Camera<S>& cam,
                                   const RenderOptions<S>& opts = {}) {
    if (!cam.valid())
        throw Error(ErrorCode::config_error, "invalid camera");

    RenderContext<S> ctx;
    ctx.camera = cam;
    ctx.options = opts;
    ctx.scene_size = scene.size();
    ctx.sh_degree = scene.sh_degree;
    ctx.scene_hash = detail::scene_fingerprint(scene, cam);
    ctx.hits.assign(scene.size(), 0);

    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& g = scene.gaussians[i];
        if (!g.position.allFinite() || !g.rotation.allFinite() ||
            !g.log_scale.allFinite() || !std::isfinite(g.opacity_logit) ||
            !g.sh.allFinite())
            throw Error(ErrorCode::render_abort,
                        "non-finite parameters in Gaussian " + std::to_string(i));
        ProjCache<S> cache;
        auto splat = project_gaussian(g, cam, scene.sh_degree, opts.near_plane, &cache);
        if (!splat) continue;
        splat->source_index = int(i);
        if (!splat->mean2d.allFinite() || !splat->conic.allFinite() ||
            !splat->rgb.allFinite())
            throw Error(ErrorCode::render_abort,
                        "non-finite projection of Gaussian " + std::to_string(i));
        ctx.splats.push_back(*splat);
        ctx.cache.push_back(cache);
    }

    ctx.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    ctx.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
    ctx.bins.assign(std::size_t(ctx.tiles_x) * std::size_t(ctx.tiles_y), {});
    for (int s = 0; s < int(ctx.splats.size()); ++s) {
        const auto& sp = ctx.splats[std::size_t(s)];
        int tx0 = sp.x_lo / kTileSize, tx1 = (sp.x_hi - 1) / kTileSize;
        int ty0 = sp.y_lo / kTileSize, ty1 = (sp.y_hi - 1) / kTileSize;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                ctx.bins[std::size_t(ty) * std::size_t(ctx.tiles_x) + std::size_t(tx)]
                    .push_back(s);
    }
    for (auto& bin : ctx.bins)
        std::sort(bin.begin(), bin.end(), [&](int a, int b) {
            const auto& sa = ctx.splats[std::size_t(a)];
            const auto& sb = ctx.splats[std::size_t(b)];
            if (sa.depth != sb.depth) return sa.depth < sb.depth;
            return sa.source_index < sb.source_index;  // deterministic ties
        });

    ctx.output.color = Image<S>(cam.height, cam.width, 3);
    ctx.output.alpha = Image<S>(cam.height, cam.width, 1);
    ctx.output.contributors = Image<std::uint32_t>(cam.height, cam.width, 1);

    const std::size_t n_tiles = ctx.bins.size();
    const int workers = std::max(1, std::min(thread_count(), int(n_tiles)));
    std::vector<std::vector<std::uint64_t>> worker_hits(
        std::size_t(workers), std::vector<std::uint64_t>(scene.size(), 0));

    parallel_for(n_tiles, [&](std::size_t lo, std::size_t hi, int worker) {
        auto& hits = worker_hits[std::size_t(worker)];
        for (std::size_t tile = lo; tile < hi; ++tile) {
            const auto& bin = ctx.bins[tile];
            int tx = int(tile % std::size_t(ctx.tiles_x));
            int ty = int(tile / std::size_t(ctx.tiles_x));
            int px0 = tx * kTileSize, px1 = std::min(px0 + kTileSize, cam.width);
            int py0 = ty * kTileSize, py1 = std::min(py0 + kTileSize, cam.height);
            for (int py = py0; py < py1; ++py)
                for (int px = px0; px < px1; ++px) {
                    S t = S(1);
                    Vec3<S> c = Vec3<S>::Zero();
                    std::uint32_t count = 0;
                    const S cx = S(px) + S(0.5), cy = S(py) + S(0.5);
                    for (int sid : bin) {
                        const auto& sp = ctx.splats[std::size_t(sid)];
                        const S dx = cx - sp.mean2d.x();
                        const S dy = cy - sp.mean2d.y();
                        const S q = sp.conic[0] * dx * dx +
                                    S(2) * sp.conic[1] * dx * dy +
                                    sp.conic[2] * dy * dy;
                        if (q > S(kMaxQ)) continue;
                        S alpha = sp.opacity * std::exp(S(-0.5) * q);
                        if (alpha > S(kAlphaClamp)) alpha = S(kAlphaClamp);
                        if (alpha < S(kAlphaMin)) continue;
                        c += sp.rgb * (alpha * t);
                        ++count;
                        ++hits[std::size_t(sp.source_index)];
                        t *= S(1) - alpha;
                        if (t < S(kTransmittanceMin)) break;
                    }
                    for (int ch = 0; ch < 3; ++ch)
                        ctx.output.color.at(py, px, ch) =
                            c[ch] + opts.background[ch] * t;
                    ctx.output.alpha.at(py, px) = S(1) - t;
                    ctx.output.contributors.at(py, px) = count;
                }
        }
    });
    for (const auto& wh : worker_hits)
        for (std::size_t i = 0; i < wh.size(); ++i) ctx.hits[i] += wh[i];

    return ctx;
}

/// Convenience entry point: forward render only.
template <class S>
RenderOutput<S> rasterize(const SceneModel<S>& scene, const Camera<S>& cam,
                          const RenderOptions<S>& opts = {}) {
    return rasterize_forward(scene, cam, opts).output;
}

/// Backward pass: per-Gaussian parameter gradients for the upstream
/// dL/d(color image). Anchored splats receive gradients through the
/// softmax + convex-combination chain into their barycentric logits; the
/// mesh stays frozen. Throws stale_state if the scene or camera changed
/// since the matching forward pass.
template <class S>
ParamGrads<S> rasterize_backward(const RenderContext<S>& ctx, const SceneModel<S>& scene,
                                 const Image<S>& dl_dcolor) {
    const Camera<S>& cam = ctx.camera;
    if (scene.size() != ctx.scene_size ||
        detail::scene_fingerprint(scene, cam) != ctx.scene_hash)
        throw Error(ErrorCode::stale_state,
                    "scene or camera changed since the forward pass");
    if (dl_dcolor.height != cam.height || dl_dcolor.width != cam.width ||
        dl_dcolor.channels != 3)
        throw Error(ErrorCode::shape_mismatch, "upstream gradient shape mismatch");

    const int n_coeffs = sh_coeff_count(scene.sh_degree);
    const std::size_t n_splats = ctx.splats.size();
    const std::size_t n_tiles = ctx.bins.size();
    const int workers = std::max(1, std::min(thread_count(), int(std::max<std::size_t>(n_tiles, 1))));

    using SplatAcc = detail::SplatAcc<S>;
    std::vector<std::vector<SplatAcc>> worker_acc{
        std::size_t(workers), std::vector<SplatAcc>(n_splats)};

    parallel_for(n_tiles, [&](std::size_t lo, std::size_t hi, int worker) {
        auto& acc = worker_acc[std::size_t(worker)];
        for (std::size_t tile = lo; tile < hi; ++tile) {
            const auto& bin = ctx.bins[tile];
            if (bin.empty()) continue;
            int tx = int(tile % std::size_t(ctx.tiles_x));
            int ty = int(tile / std::size_t(ctx.tiles_x));
            int px0 = tx * kTileSize, px1 = std::min(px0 + kTileSize, cam.width);
            int py0 = ty * kTileSize, py1 = std::min(py0 + kTileSize, cam.height);
            for (int py = py0; py < py1; ++py)
                for (int px = px0; px < px1; ++px) {
                    Vec3<S> dl_dc(dl_dcolor.at(py, px, 0), dl_dcolor.at(py, px, 1),
                                  dl_dcolor.at(py, px, 2));
                    if (dl_dc.isZero(S(0))) continue;
                    const S cx = S(px) + S(0.5), cy = S(py) + S(0.5);

                    // First walk: total composite (before background) and
                    // final transmittance, replicating the forward path.
                    Vec3<S> c_total = Vec3<S>::Zero();
                    S t_stop = S(1);
                    for (int sid : bin) {
                        const auto& sp = ctx.splats[std::size_t(sid)];
                        const S dx = cx - sp.mean2d.x();
                        const S dy = cy - sp.mean2d.y();
                        const S q = sp.conic[0] * dx * dx +
                                    S(2) * sp.conic[1] * dx * dy +
                                    sp.conic[2] * dy * dy;
                        if (q > S(kMaxQ)) continue;
                        S alpha = sp.opacity * std::exp(S(-0.5) * q);
                        if (alpha > S(kAlphaClamp)) alpha = S(kAlphaClamp);
                        if (alpha < S(kAlphaMin)) continue;
                        c_total += sp.rgb * (alpha * t_stop);
                        t_stop *= S(1) - alpha;
                        if (t_stop < S(kTransmittanceMin)) break;
                    }

                    // Second walk: gradients, using the suffix trick
                    // rear_i = (c_total - prefix_i) + bg * t_stop.
                    S t = S(1);
                    Vec3<S> prefix = Vec3<S>::Zero();
                    const Vec3<S> bg_term = ctx.options.background * t_stop;
                    for (int sid : bin) {
                        const auto& sp = ctx.splats[std::size_t(sid)];
                        const S dx = cx - sp.mean2d.x();
                        const S dy = cy - sp.mean2d.y();
                        const S q = sp.conic[0] * dx * dx +
                                    S(2) * sp.conic[1] * dx * dy +
                                    sp.conic[2] * dy * dy;
                        if (q > S(kMaxQ)) continue;
                        const S g2d = std::exp(S(-0.5) * q);
                        S alpha = sp.opacity * g2d;
                        const bool clamped = alpha > S(kAlphaClamp);
                        if (clamped) alpha = S(kAlphaClamp);
                        if (alpha < S(kAlphaMin)) continue;

                        SplatAcc& a = acc[std::size_t(sid)];
                        a.rgb += dl_dc * (alpha * t);

                        prefix += sp.rgb * (alpha * t);
                        const Vec3<S> rear =
                            (c_total - prefix) + bg_term;  // behind this splat
                        const S dl_dalpha =
                            dl_dc.dot(sp.rgb * t - rear / (S(1) - alpha));

                        if (!clamped) {
                            a.opacity += dl_dalpha * g2d;
                            const S dl_dq = dl_dalpha * sp.opacity * g2d * S(-0.5);
                            // q = cxx dx^2 + 2 cxy dx dy + cyy dy^2
                            a.conic +=
                                dl_dq * Vec3<S>(dx * dx, S(2) * dx * dy, dy * dy);
                            const S ddx = dl_dq * S(2) *
                                          (sp.conic[0] * dx + sp.conic[1] * dy);
                            const S ddy = dl_dq * S(2) *
                                          (sp.conic[1] * dx + sp.conic[2] * dy);
                            a.mean -= Vec2<S>(ddx, ddy);  // d = pixel - mean
                        }

                        t *= S(1) - alpha;
                        if (t < S(kTransmittanceMin)) break;
                    }
                }
        }
    });

    // Merge worker partials in worker order (deterministic per thread count).
    std::vector<SplatAcc> acc(n_splats);
    for (const auto& wa : worker_acc)
        for (std::size_t s = 0; s < n_splats; ++s) {
            acc[s].mean += wa[s].mean;
            acc[s].conic += wa[s].conic;
            acc[s].opacity += wa[s].opacity;
            acc[s].rgb += wa[s].rgb;
        }

    // Screen-space to parameter gradients, one splat at a time.
    ParamGrads<S> grads(scene.size(), n_coeffs);
    parallel_for(n_splats, [&](std::size_t lo, std::size_t hi, int) {
        for (std::size_t s = lo; s < hi; ++s) {
            const auto& sp = ctx.splats[s];
            const auto& ck = ctx.cache[s];
            const auto& g = scene.gaussians[std::size_t(sp.source_index)];
            const std::size_t out = std::size_t(sp.source_index);

            // Inverse rule: dL/dCov_lp = -conic * G * conic.
            Mat2<S> g_conic;
            g_conic << acc[s].conic[0], acc[s].conic[1] * S(0.5),
                       acc[s].conic[1] * S(0.5), acc[s].conic[2];
            Mat2<S> conic_m;
            conic_m << sp.conic[0], sp.conic[1], sp.conic[1], sp.conic[2];
            Mat2<S> g_cov = -conic_m * g_conic * conic_m;

            // Sigma' = T Sigma T^T.
            Mat3<S> g_sigma3 = ck.t_mat.transpose() * g_cov * ck.t_mat;
            Eigen::Matrix<S, 2, 3> g_t = S(2) * g_cov * ck.t_mat * ck.sigma3;

            // T = J * W_R; J depends on mu_cam.
            Eigen::Matrix<S, 2, 3> g_jac = g_t * cam.rotation.transpose();
            const S x = ck.mu_cam.x(), y = ck.mu_cam.y(), z = ck.mu_cam.z();
            const S z2 = z * z, z3 = z2 * z;
            Vec3<S> g_mu_cam = Vec3<S>::Zero();
            g_mu_cam.x() += g_jac(0, 2) * (-cam.fx / z2);
            g_mu_cam.y() += g_jac(1, 2) * (-cam.fy / z2);
            g_mu_cam.z() += g_jac(0, 0) * (-cam.fx / z2) + g_jac(1, 1) * (-cam.fy / z2) +
                            g_jac(0, 2) * (S(2) * cam.fx * x / z3) +
                            g_jac(1, 2) * (S(2) * cam.fy * y / z3);

            // mean2d = (fx x / z + cx, fy y / z + cy).
            g_mu_cam.x() += acc[s].mean.x() * cam.fx / z;
            g_mu_cam.y() += acc[s].mean.y() * cam.fy / z;
            g_mu_cam.z() += -acc[s].mean.x() * cam.fx * x / z2 -
                            acc[s].mean.y() * cam.fy * y / z2;

            Vec3<S> g_mu = cam.rotation.transpose() * g_mu_cam;

            // Color: SH coefficients and the view-direction chain.
            Vec3<S> g_dir = Vec3<S>::Zero();
            {
                Vec3<S> gated = acc[s].rgb;
                for (int chn = 0; chn < 3; ++chn)
                    if (!(ck.rgb_pre[chn] > S(0))) gated[chn] = S(0);
                for (int i = 0; i < n_coeffs; ++i)
                    grads.sh[out].row(i) += (ck.basis[i] * gated).transpose();
                if (scene.sh_degree > 0 && !gated.isZero(S(0))) {
                    Vec3<S> dbasis[16];
                    sh_basis_grad(ck.dir, scene.sh_degree, dbasis);
                    for (int i = 1; i < n_coeffs; ++i) {
                        const S coeff = gated.dot(g.sh.row(i).transpose());
                        g_dir += coeff * dbasis[i];
                    }
                    // dir = w / |w|
                    Vec3<S> g_w =
                        (g_dir - ck.dir * ck.dir.dot(g_dir)) / ck.w_norm;
                    g_mu += g_w;
                }
            }

            grads.position[out] = g_mu;
            if (g.anchor && scene.mesh) {
                const auto& f = scene.mesh->faces[std::size_t(g.anchor->face_id)];
                Eigen::Vector3d w = g.anchor->weights_double();
                Eigen::Vector3d gm = g_mu.template cast<double>();
                Eigen::Vector3d dots(
                    gm.dot(scene.mesh->vertices[std::size_t(f[0])]),
                    gm.dot(scene.mesh->vertices[std::size_t(f[1])]),
                    gm.dot(scene.mesh->vertices[std::size_t(f[2])]));
                double mean_dot = w.dot(dots);
                Eigen::Vector3d g_beta = w.cwiseProduct(dots.array().matrix() -
                                                        Eigen::Vector3d::Constant(mean_dot));
                grads.bary_logits[out] = g_beta.cast<S>();
            }

            // Sigma = M M^T, M = R diag(scale).
            Mat3<S> g_m = S(2) * g_sigma3 * ck.m_mat;
            Mat3<S> rt_gm = ck.r_mat.transpose() * g_m;
            for (int i = 0; i < 3; ++i) {
                // Gate when the activation floor clipped exp(s).
                const S raw = std::exp(g.log_scale[i]);
                grads.log_scale[out][i] =
                    raw >= S(kScaleFloor) ? rt_gm(i, i) * ck.scale[i] : S(0);
            }
            Mat3<S> g_r = g_m * ck.scale.asDiagonal();

            // R(q) partials for the normalized quaternion (w, x, y, z).
            const S qw = ck.unit_q[0], qx = ck.unit_q[1], qy = ck.unit_q[2],
                    qz = ck.unit_q[3];
            Mat3<S> dw, dxq, dyq, dzq;
            dw << S(0), -qz, qy,
                  qz, S(0), -qx,
                  -qy, qx, S(0);
            dxq << S(0), qy, qz,
                   qy, S(-2) * qx, -qw,
                   qz, qw, S(-2) * qx;
            dyq << S(-2) * qy, qx, qw,
                   qx, S(0), qz,
                   -qw, qz, S(-2) * qy;
            dzq << S(-2) * qz, -qw, qx,
                   qw, S(-2) * qz, qy,
                   qx, qy, S(0);
            Vec4<S> g_uq(S(2) * (g_r.array() * dw.array()).sum(),
                         S(2) * (g_r.array() * dxq.array()).sum(),
                         S(2) * (g_r.array() * dyq.array()).sum(),
                         S(2) * (g_r.array() * dzq.array()).sum());
            // Through normalization q_hat = q / |q|.
            grads.rotation[out] =
                (g_uq - ck.unit_q * ck.unit_q.dot(g_uq)) / ck.q_norm;

            // opacity = sigmoid(logit).
            grads.opacity_logit[out] =
                acc[s].opacity * sp.opacity * (S(1) - sp.opacity);
        }
    });

    return grads;
}

}  // namespace ea3d
