#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "ea3d/error.hpp"
#include "pipeline.hpp"

// Batch pipeline driver. One subcommand per stage so the stages can be
// scripted and tested independently:
//   ea3d synth | init | train | prune | compress | render | eval
// EA3D_THREADS overrides the worker count (default 1, deterministic).

namespace {

std::vector<int> parse_iter_list(const std::string& s) {
    std::vector<int> out;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t j = s.find(',', i);
        if (j == std::string::npos) j = s.size();
        if (j > i) out.push_back(std::stoi(s.substr(i, j - i)));
        i = j + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    using ea3d::cli::PipelineOptions;

    PipelineOptions opts;

    try {
        // The config file seeds the defaults; flags parsed afterwards win.
        for (int i = 1; i + 1 < argc; ++i)
            if (std::string(argv[i]) == "--config")
                ea3d::cli::apply_config_file(opts, argv[i + 1]);
    } catch (const ea3d::Error& e) {
        std::cerr << "error (" << e.code_name() << "): " << e.what() << "\n";
        return 1;
    }

    CLI::App app{"mesh-guided Gaussian splatting pipeline"};
    app.require_subcommand(1);

    std::string config_sink;          // consumed above
    std::string prune_list, densify_list;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_sink, "key = value pipeline config file");
        cmd->add_option("--seed", opts.seed, "RNG seed");
        cmd->add_option("--output", opts.output_dir, "output directory");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic fixture");
    add_common(synth);
    synth->add_option("--shape", opts.shape, "primitive: cube, sphere, or plane");
    synth->add_option("--views", opts.views, "number of orbit views");
    synth->add_option("--resolution", opts.resolution, "image resolution");
    synth->add_option("--grid", opts.grid, "ground-truth splats per face edge");
    synth->add_option("--points", opts.points, "SfM cloud size");

    CLI::App* init = app.add_subcommand("init", "tetrahedral-mesh Gaussian init");
    add_common(init);
    init->add_option("--sfm", opts.sfm_dir, "COLMAP text directory");
    init->add_option("--k", opts.k, "splats per face");
    init->add_option("--sh-degree", opts.sh_degree, "SH degree (0..3)");

    CLI::App* train = app.add_subcommand("train", "photometric optimization");
    add_common(train);
    train->add_option("--sfm", opts.sfm_dir, "COLMAP text directory");
    train->add_option("--images", opts.images_dir, "training images directory");
    train->add_option("--model", opts.model, "initial model (init_model.ea3d)");
    train->add_option("--iters", opts.total_iters, "total iterations");
    train->add_option("--prune-iters", prune_list, "comma-separated prune iterations");
    train->add_option("--densify-iters", densify_list,
                      "comma-separated densify iterations");
    train->add_option("--prune-ratio", opts.prune_ratio, "prune ratio in (0,1)");
    train->add_option("--tau", opts.tau, "curvature threshold");
    train->add_option("--knn", opts.knn, "curvature neighborhood size");
    train->add_option("--eval-every", opts.eval_every, "held-out eval cadence");
    train->add_option("--k", opts.k, "splats per face (bookkeeping)");
    train->add_option("--resume", opts.resume, "checkpoint to resume from");

    CLI::App* prune = app.add_subcommand("prune", "importance pruning");
    add_common(prune);
    prune->add_option("--sfm", opts.sfm_dir, "COLMAP text directory");
    prune->add_option("--model", opts.model, "model checkpoint");
    prune->add_option("--prune-ratio", opts.prune_ratio, "prune ratio in (0,1)");
    prune->add_option("--tau", opts.tau, "curvature threshold");
    prune->add_option("--knn", opts.knn, "curvature neighborhood size");

    CLI::App* compress = app.add_subcommand("compress", "codebook quantization");
    add_common(compress);
    compress->add_option("--model", opts.model, "model checkpoint");
    compress->add_option("--codebook-size", opts.codebook_size,
                         "entries per codebook");

    CLI::App* render = app.add_subcommand("render", "render bundle views");
    add_common(render);
    render->add_option("--sfm", opts.sfm_dir, "COLMAP text directory");
    render->add_option("--model", opts.model, "model checkpoint");
    render->add_flag("--holdout-only", opts.holdout_only,
                     "render only held-out views");

    CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM against ground truth");
    add_common(eval);
    eval->add_option("--sfm", opts.sfm_dir, "COLMAP text directory");
    eval->add_option("--images", opts.images_dir, "ground-truth images directory");
    eval->add_option("--model", opts.model, "model checkpoint");
    eval->add_flag("--holdout-only", opts.holdout_only,
                   "evaluate only held-out views");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!prune_list.empty()) opts.prune_iters = parse_iter_list(prune_list);
        if (!densify_list.empty()) opts.densify_iters = parse_iter_list(densify_list);

        if (synth->parsed()) return ea3d::cli::cmd_synth(opts);
        if (init->parsed()) return ea3d::cli::cmd_init(opts);
        if (train->parsed()) return ea3d::cli::cmd_train(opts);
        if (prune->parsed()) return ea3d::cli::cmd_prune(opts);
        if (compress->parsed()) return ea3d::cli::cmd_compress(opts);
        if (render->parsed()) return ea3d::cli::cmd_render(opts);
        if (eval->parsed()) return ea3d::cli::cmd_eval(opts);
    } catch (const ea3d::Error& e) {
        std::cerr << "error (" << e.code_name() << "): " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
