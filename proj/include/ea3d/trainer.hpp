#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "ea3d/adaptive.hpp"
#include "ea3d/loss.hpp"
#include "ea3d/metrics.hpp"
#include "ea3d/rasterizer.hpp"
#include "ea3d/tetra.hpp"

namespace ea3d {

struct TrainConfig {
    int total_iters = 30000;
    std::vector<int> prune_iters{12000, 20000};
    std::vector<int> densify_iters{12000, 20000};
    double prune_ratio = 0.2;

    // Learning rates per parameter class. Position decays exponentially to
    // lr * lr_final_scale over the run and is multiplied by the camera
    // spread radius; barycentric logits use their own dimensionless rate
    // with the same decay.
    double lr_position = 1.6e-4;
    double lr_final_scale = 0.01;
    double lr_bary = 0.02;
    double lr_opacity = 0.05;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_sh = 2.5e-3;

    double dssim_weight = 0.2;
    int k = 3;          // splats per face at init
    double tau = 0.02;  // curvature threshold
    int knn = 16;

    int eval_every = 1000;
    int sh_ramp_every = 1000;
    int stop_after = 0;  // pause a run early (0 = off); schedules keep total_iters
    int snapshot_every = 50;  // last-good checkpoint cadence
    std::uint64_t seed = 0;
    Eigen::Vector3f background = Eigen::Vector3f::Zero();
    double spatial_lr_scale = -1.0;  // derived from cameras when negative

    void validate() const {
        if (total_iters < 1)
            throw Error(ErrorCode::config_error, "total_iters must be positive");
        for (int it : prune_iters)
            if (it >= total_iters)
                throw Error(ErrorCode::config_error, "prune iter beyond total_iters");
        for (int it : densify_iters)
            if (it >= total_iters)
                throw Error(ErrorCode::config_error, "densify iter beyond total_iters");
        if (!(prune_ratio > 0.0 && prune_ratio < 1.0))
            throw Error(ErrorCode::config_error, "prune_ratio must be in (0,1)");
        if (stop_after < 0 || stop_after > total_iters)
            throw Error(ErrorCode::config_error, "stop_after outside [0, total_iters]");
        if (!(dssim_weight >= 0.0 && dssim_weight < 1.0))
            throw Error(ErrorCode::config_error, "dssim_weight must be in [0,1)");
        if (k < 1) throw Error(ErrorCode::config_error, "k must be >= 1");
        if (knn < 3) throw Error(ErrorCode::config_error, "knn must be >= 3");
    }
};

struct TrainReport {
    struct EvalRow {
        int iter;
        double psnr, ssim;
    };
    struct CountRow {
        int iter;
        std::size_t count;
        std::string event;  // "init" | "prune" | "densify"
    };
    std::vector<EvalRow> evals;
    std::vector<CountRow> counts;
    std::vector<float> losses;  // one per optimizer step
    std::size_t final_count = 0;
    double wall_seconds = 0;  // console only, never serialized into artifacts
    bool aborted_non_finite = false;
};

struct TrainData {
    std::vector<Camera<float>> cameras;
    std::vector<Image<float>> images;  // linear float targets
};

/// Held-out split: every 8th view (indices 0, 8, ...) when there are at
/// least 8 views, otherwise nothing is held out.
inline std::vector<int> holdout_indices(std::size_t views) {
    std::vector<int> out;
    if (views >= 8)
        for (std::size_t i = 0; i < views; i += 8) out.push_back(int(i));
    return out;
}

/// Adam moments, one flat row per Gaussian per parameter class. The
/// position slot is shared by free positions and barycentric logits (a
/// splat has exactly one of the two).
struct TrainerState {
    int iter = 0;
    std::int64_t adam_step = 0;
    std::vector<float> pos_m, pos_v;      // n*3
    std::vector<float> rot_m, rot_v;      // n*4
    std::vector<float> scale_m, scale_v;  // n*3
    std::vector<float> op_m, op_v;        // n
    std::vector<float> sh_m, sh_v;        // n*coeffs*3

    void resize(std::size_t n, int n_coeffs) {
        pos_m.assign(n * 3, 0.f);
        pos_v.assign(n * 3, 0.f);
        rot_m.assign(n * 4, 0.f);
        rot_v.assign(n * 4, 0.f);
        scale_m.assign(n * 3, 0.f);
        scale_v.assign(n * 3, 0.f);
        op_m.assign(n, 0.f);
        op_v.assign(n, 0.f);
        sh_m.assign(n * std::size_t(n_coeffs) * 3, 0.f);
        sh_v.assign(n * std::size_t(n_coeffs) * 3, 0.f);
    }

    void gather(const std::vector<int>& survivors, int n_coeffs) {
        auto pick = [&](std::vector<float>& arr, std::size_t dim) {
            std::vector<float> next(survivors.size() * dim);
            for (std::size_t i = 0; i < survivors.size(); ++i)
                for (std::size_t d = 0; d < dim; ++d)
                    next[i * dim + d] = arr[std::size_t(survivors[i]) * dim + d];
            arr = std::move(next);
        };
        pick(pos_m, 3);
        pick(pos_v, 3);
        pick(rot_m, 4);
        pick(rot_v, 4);
        pick(scale_m, 3);
        pick(scale_v, 3);
        pick(op_m, 1);
        pick(op_v, 1);
        pick(sh_m, std::size_t(n_coeffs) * 3);
        pick(sh_v, std::size_t(n_coeffs) * 3);
    }

    void append_zero_rows(std::size_t extra, int n_coeffs) {
        pos_m.resize(pos_m.size() + extra * 3, 0.f);
        pos_v.resize(pos_v.size() + extra * 3, 0.f);
        rot_m.resize(rot_m.size() + extra * 4, 0.f);
        rot_v.resize(rot_v.size() + extra * 4, 0.f);
        scale_m.resize(scale_m.size() + extra * 3, 0.f);
        scale_v.resize(scale_v.size() + extra * 3, 0.f);
        op_m.resize(op_m.size() + extra, 0.f);
        op_v.resize(op_v.size() + extra, 0.f);
        sh_m.resize(sh_m.size() + extra * std::size_t(n_coeffs) * 3, 0.f);
        sh_v.resize(sh_v.size() + extra * std::size_t(n_coeffs) * 3, 0.f);
    }
};

struct TrainResult {
    SceneModel<float> scene;
    TrainReport report;
    TrainerState state;
};

struct TrainHooks {
    // Invoked after each optimizer step; tests use it for fault injection
    // and trajectory inspection.
    std::function<void(int iter, SceneModel<float>& scene)> after_step;
};

namespace detail {

struct AdamStep {
    double bc1, bc2;

    AdamStep(std::int64_t t)
        : bc1(1.0 - std::pow(0.9, double(t))), bc2(1.0 - std::pow(0.999, double(t))) {}

    void apply(float* m, float* v, const float* grad, float* param,
               std::size_t count, double lr) const {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-15;
        for (std::size_t i = 0; i < count; ++i) {
            const double g = grad[i];
            const double mi = b1 * m[i] + (1 - b1) * g;
            const double vi = b2 * v[i] + (1 - b2) * g * g;
            m[i] = float(mi);
            v[i] = float(vi);
            param[i] = float(param[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
        }
    }
};

inline double camera_spread(const std::vector<Camera<float>>& cams) {
    if (cams.empty()) return 1.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& c : cams) mean += c.center().cast<double>();
    mean /= double(cams.size());
    double radius = 0.0;
    for (const auto& c : cams)
        radius = std::max(radius, (c.center().cast<double>() - mean).norm());
    return std::max(radius * 1.1, 1e-6);
}

}  // namespace detail

/// Photometric training on the configured schedule: per-class Adam moments,
/// prune then densify at the scheduled iterations, PSNR/SSIM on the
/// held-out split every eval_every iterations. Deterministic for a fixed
/// seed and thread count; resumable from a TrainerState checkpoint.
/// A non-finite loss aborts with the last snapshot (<= snapshot_every
/// iterations old) restored.
inline TrainResult train(SceneModel<float> scene, const TrainData& data,
                         const TrainConfig& cfg, const TrainHooks& hooks = {},
                         const TrainerState* resume = nullptr) {
    cfg.validate();
    if (data.cameras.size() != data.images.size())
        throw Error(ErrorCode::shape_mismatch, "cameras and images misaligned");
    if (data.cameras.size() < 2)
        throw Error(ErrorCode::config_error, "need at least 2 training views");
    if (scene.size() == 0)
        throw Error(ErrorCode::empty_input, "scene is empty");

    const auto t_start = std::chrono::steady_clock::now();

    std::vector<int> eval_idx = holdout_indices(data.cameras.size());
    std::vector<std::uint8_t> held(data.cameras.size(), 0);
    for (int i : eval_idx) held[std::size_t(i)] = 1;
    std::vector<int> train_idx;
    for (std::size_t i = 0; i < data.cameras.size(); ++i)
        if (!held[i]) train_idx.push_back(int(i));
    if (train_idx.empty())
        throw Error(ErrorCode::config_error, "no training views left after holdout");
    std::vector<Camera<float>> train_cams;
    for (int i : train_idx) train_cams.push_back(data.cameras[std::size_t(i)]);

    const double spatial = cfg.spatial_lr_scale > 0 ? cfg.spatial_lr_scale
                                                    : detail::camera_spread(train_cams);
    const int full_degree = scene.sh_degree;
    const int n_coeffs = sh_coeff_count(full_degree);

    TrainerState state;
    if (resume) {
        state = *resume;
        if (state.pos_m.size() != scene.size() * 3)
            throw Error(ErrorCode::shape_mismatch, "optimizer state misaligned");
    } else {
        state.resize(scene.size(), n_coeffs);
    }

    TrainResult result;
    result.report.counts.push_back({state.iter, scene.size(), "init"});

    RenderOptions<float> opts;
    opts.background = cfg.background;

    SceneModel<float> snapshot_scene = scene;
    TrainerState snapshot_state = state;

    auto evaluate = [&](int iter) {
        const std::vector<int>& views = eval_idx.empty() ? train_idx : eval_idx;
        double psnr_sum = 0, ssim_sum = 0;
        int saved_degree = scene.sh_degree;
        scene.sh_degree = full_degree;
        for (int i : views) {
            auto out = rasterize(scene, data.cameras[std::size_t(i)], opts);
            psnr_sum += psnr(out.color, data.images[std::size_t(i)]);
            ssim_sum += ssim(out.color, data.images[std::size_t(i)]);
        }
        scene.sh_degree = saved_degree;
        result.report.evals.push_back(
            {iter, psnr_sum / double(views.size()), ssim_sum / double(views.size())});
    };

    // Stateless epoch shuffles so a checkpoint resume replays the stream.
    std::vector<int> epoch_order;
    std::size_t shuffled_epoch = SIZE_MAX;
    auto view_for_iter = [&](int iter) {
        const std::size_t nt = train_idx.size();
        const std::size_t epoch = std::size_t(iter - 1) / nt;
        const std::size_t slot = std::size_t(iter - 1) % nt;
        if (epoch != shuffled_epoch) {
            epoch_order = train_idx;
            SplitMix64 rng(hash_combine(cfg.seed, 0xe90cULL ^ epoch));
            for (std::size_t i = nt; i > 1; --i)
                std::swap(epoch_order[i - 1], epoch_order[rng.below(i)]);
            shuffled_epoch = epoch;
        }
        return epoch_order[slot];
    };

    auto scheduled = [](const std::vector<int>& iters, int iter) {
        return std::find(iters.begin(), iters.end(), iter) != iters.end();
    };

    const int last_iter = cfg.stop_after > 0 ? cfg.stop_after : cfg.total_iters;
    for (int iter = state.iter + 1; iter <= last_iter; ++iter) {
        const int view = view_for_iter(iter);
        const Camera<float>& cam = data.cameras[std::size_t(view)];
        const Image<float>& target = data.images[std::size_t(view)];

        // SH degree ramp: one extra band per sh_ramp_every iterations.
        scene.sh_degree = std::min(
            full_degree,
            cfg.sh_ramp_every > 0 ? (iter - 1) / cfg.sh_ramp_every : full_degree);
        const int active_coeffs = sh_coeff_count(scene.sh_degree);

        ParamGrads<float> grads;
        try {
            auto ctx = rasterize_forward(scene, cam, opts);
            auto loss = photometric_loss(ctx.output.color, target, cfg.dssim_weight);
            if (!std::isfinite(loss.loss))
                throw Error(ErrorCode::non_finite, "non-finite loss");
            result.report.losses.push_back(float(loss.loss));
            grads = rasterize_backward(ctx, scene, loss.grad);
        } catch (const Error& e) {
            // Non-finite loss or parameters: abort with the last-good
            // snapshot restored.
            if (e.code() != ErrorCode::non_finite &&
                e.code() != ErrorCode::render_abort)
                throw;
            scene = snapshot_scene;
            state = snapshot_state;
            result.report.aborted_non_finite = true;
            break;
        }

        state.adam_step += 1;
        detail::AdamStep adam(state.adam_step);
        const double decay =
            std::pow(cfg.lr_final_scale, double(iter) / double(cfg.total_iters));
        const double pos_lr = cfg.lr_position * spatial * decay;
        const double bary_lr = cfg.lr_bary * decay;

        for (std::size_t i = 0; i < scene.size(); ++i) {
            auto& g = scene.gaussians[i];
            if (g.anchor) {
                adam.apply(&state.pos_m[i * 3], &state.pos_v[i * 3],
                           grads.bary_logits[i].data(), g.anchor->logits.data(), 3,
                           bary_lr);
            } else {
                adam.apply(&state.pos_m[i * 3], &state.pos_v[i * 3],
                           grads.position[i].data(), g.position.data(), 3, pos_lr);
            }
            adam.apply(&state.rot_m[i * 4], &state.rot_v[i * 4],
                       grads.rotation[i].data(), g.rotation.data(), 4,
                       cfg.lr_rotation);
            adam.apply(&state.scale_m[i * 3], &state.scale_v[i * 3],
                       grads.log_scale[i].data(), g.log_scale.data(), 3,
                       cfg.lr_scale);
            adam.apply(&state.op_m[i], &state.op_v[i], &grads.opacity_logit[i],
                       &g.opacity_logit, 1, cfg.lr_opacity);
            // SH: DC at the base rate, higher bands at 1/20 (standard ratio).
            const std::size_t sh_base = i * std::size_t(n_coeffs) * 3;
            float* sh_param = g.sh.data();  // column-major (coeffs x 3)
            float grad_buf[48];
            for (int c = 0; c < 3; ++c)
                for (int r = 0; r < active_coeffs; ++r)
                    grad_buf[c * active_coeffs + r] = grads.sh[i](r, c);
            // Column-major layout: channel c, row r lives at c*n_coeffs + r.
            for (int c = 0; c < 3; ++c) {
                std::size_t off = sh_base + std::size_t(c) * std::size_t(n_coeffs);
                adam.apply(&state.sh_m[off], &state.sh_v[off],
                           &grad_buf[c * active_coeffs],
                           sh_param + std::size_t(c) * std::size_t(n_coeffs), 1,
                           cfg.lr_sh);
                if (active_coeffs > 1)
                    adam.apply(&state.sh_m[off + 1], &state.sh_v[off + 1],
                               &grad_buf[c * active_coeffs + 1],
                               sh_param + std::size_t(c) * std::size_t(n_coeffs) + 1,
                               std::size_t(active_coeffs - 1), cfg.lr_sh / 20.0);
            }
        }

        refresh_anchored_positions(scene);

        // Scheduled adaptive control: prune first, then densify.
        if (scheduled(cfg.prune_iters, iter) && scene.size() > std::size_t(cfg.knn) + 1) {
            auto scores = accumulate_importance(scene, train_cams, opts);
            auto curv = local_curvature(scene_positions(scene), cfg.knn, cfg.tau);
            auto pruned = prune(scene, scores, cfg.prune_ratio, curv.protect_mask);
            scene = std::move(pruned.scene);
            state.gather(pruned.survivors, n_coeffs);
            result.report.counts.push_back({iter, scene.size(), "prune"});
        }
        if (scheduled(cfg.densify_iters, iter) &&
            scene.size() > std::size_t(cfg.knn) + 1) {
            auto curv = local_curvature(scene_positions(scene), cfg.knn, cfg.tau);
            std::size_t before = scene.size();
            scene = densify_low_curvature(scene, curv, cfg.tau,
                                          hash_combine(cfg.seed, 0xdeec ^ std::uint64_t(iter)));
            state.append_zero_rows(scene.size() - before, n_coeffs);
            result.report.counts.push_back({iter, scene.size(), "densify"});
        }

        if (hooks.after_step) hooks.after_step(iter, scene);

        state.iter = iter;
        if (iter % cfg.snapshot_every == 0) {
            snapshot_scene = scene;
            snapshot_state = state;
        }
        if (cfg.eval_every > 0 && iter % cfg.eval_every == 0) evaluate(iter);
    }

    scene.sh_degree = full_degree;
    result.scene = std::move(scene);
    result.state = std::move(state);
    result.report.final_count = result.scene.size();
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    return result;
}

/// Optimizer-state sidecar for checkpoint files.
inline void save_trainer_state(const std::filesystem::path& path,
                               const TrainerState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open())
        throw Error(ErrorCode::io_error, "cannot write " + path.string());
    auto put = [&](const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), long(n));
    };
    const char magic[4] = {'E', 'A', '3', 'O'};
    put(magic, 4);
    std::uint32_t version = 1;
    put(&version, 4);
    std::int64_t iter = state.iter, step = state.adam_step;
    put(&iter, 8);
    put(&step, 8);
    auto put_vec = [&](const std::vector<float>& v) {
        std::uint64_t n = v.size();
        put(&n, 8);
        put(v.data(), v.size() * 4);
    };
    put_vec(state.pos_m);
    put_vec(state.pos_v);
    put_vec(state.rot_m);
    put_vec(state.rot_v);
    put_vec(state.scale_m);
    put_vec(state.scale_v);
    put_vec(state.op_m);
    put_vec(state.op_v);
    put_vec(state.sh_m);
    put_vec(state.sh_v);
}

inline TrainerState load_trainer_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open())
        throw Error(ErrorCode::not_found, "missing file: " + path.string());
    auto get = [&](void* p, std::size_t n) {
        if (!in.read(static_cast<char*>(p), long(n)))
            throw Error(ErrorCode::length_mismatch, path.string() + ": truncated");
    };
    char magic[4];
    get(magic, 4);
    if (std::memcmp(magic, "EA3O", 4) != 0)
        throw Error(ErrorCode::bad_magic, path.string() + ": bad magic");
    std::uint32_t version;
    get(&version, 4);
    if (version != 1)
        throw Error(ErrorCode::bad_version, path.string() + ": unsupported version");
    TrainerState state;
    std::int64_t iter, step;
    get(&iter, 8);
    get(&step, 8);
    state.iter = int(iter);
    state.adam_step = step;
    auto get_vec = [&](std::vector<float>& v) {
        std::uint64_t n;
        get(&n, 8);
        if (n > (std::uint64_t(1) << 36))
            throw Error(ErrorCode::length_mismatch, path.string() + ": size beyond cap");
        v.resize(std::size_t(n));
        get(v.data(), v.size() * 4);
    };
    get_vec(state.pos_m);
    get_vec(state.pos_v);
    get_vec(state.rot_m);
    get_vec(state.rot_v);
    get_vec(state.scale_m);
    get_vec(state.scale_v);
    get_vec(state.op_m);
    get_vec(state.op_v);
    get_vec(state.sh_m);
    get_vec(state.sh_v);
    return state;
}

}  // namespace ea3d
