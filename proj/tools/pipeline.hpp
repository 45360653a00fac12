#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ea3d::cli {

/// One flat option set shared by every stage; the key=value config file
/// and command-line flags both land here (flags win).
struct PipelineOptions {
    std::filesystem::path sfm_dir;
    std::filesystem::path images_dir;
    std::filesystem::path output_dir;
    std::filesystem::path model;  // input model/checkpoint for later stages

    std::uint64_t seed = 0;

    // synth
    std::string shape = "cube";
    int views = 20;
    int resolution = 128;
    int grid = 12;
    int points = 160;

    // init
    int k = 3;
    int sh_degree = 3;

    // train
    int total_iters = 30000;
    std::vector<int> prune_iters{12000, 20000};
    std::vector<int> densify_iters{12000, 20000};
    double prune_ratio = 0.2;
    double tau = 0.02;
    int knn = 16;
    int eval_every = 1000;
    double dssim_weight = 0.2;
    double lr_position = 1.6e-4;
    double lr_bary = 0.02;
    double lr_opacity = 0.05;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_sh = 2.5e-3;
    std::filesystem::path resume;  // optional checkpoint to continue

    // compress
    int codebook_size = 8192;

    // render / eval
    bool holdout_only = false;
};

/// Parses the human-readable `key = value` pipeline config document.
/// Unknown keys are rejected; '#' starts a comment.
void apply_config_file(PipelineOptions& opts, const std::filesystem::path& path);

int cmd_synth(const PipelineOptions& opts);
int cmd_init(const PipelineOptions& opts);
int cmd_train(const PipelineOptions& opts);
int cmd_prune(const PipelineOptions& opts);
int cmd_compress(const PipelineOptions& opts);
int cmd_render(const PipelineOptions& opts);
int cmd_eval(const PipelineOptions& opts);

}  // namespace ea3d::cli
