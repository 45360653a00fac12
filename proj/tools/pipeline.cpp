#include "pipeline.hpp"

#include <json.hpp>

#include <fstream>
#include <iostream>

#include "ea3d/adaptive.hpp"
#include "ea3d/colmap.hpp"
#include "ea3d/compact.hpp"
#include "ea3d/mesh_io.hpp"
#include "ea3d/metrics.hpp"
#include "ea3d/png_io.hpp"
#include "ea3d/synth.hpp"
#include "ea3d/tetra.hpp"
#include "ea3d/trainer.hpp"
#include "ea3d/vq.hpp"

namespace ea3d::cli {

namespace {

using nlohmann::ordered_json;

void require_exists(const std::filesystem::path& p, const std::string& what) {
    if (p.empty() || !std::filesystem::exists(p))
        throw Error(ErrorCode::stage_dependency,
                    "missing " + what + ": " + (p.empty() ? "<unset>" : p.string()));
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t j = text.find(',', i);
        if (j == std::string::npos) j = text.size();
        std::string tok = text.substr(i, j - i);
        if (!tok.empty()) out.push_back(std::stoi(tok));
        i = j + 1;
    }
    return out;
}

TrainConfig to_train_config(const PipelineOptions& o) {
    TrainConfig cfg;
    cfg.total_iters = o.total_iters;
    cfg.prune_iters = o.prune_iters;
    cfg.densify_iters = o.densify_iters;
    cfg.prune_ratio = o.prune_ratio;
    cfg.tau = o.tau;
    cfg.knn = o.knn;
    cfg.k = o.k;
    cfg.eval_every = o.eval_every;
    cfg.dssim_weight = o.dssim_weight;
    cfg.lr_position = o.lr_position;
    cfg.lr_bary = o.lr_bary;
    cfg.lr_opacity = o.lr_opacity;
    cfg.lr_scale = o.lr_scale;
    cfg.lr_rotation = o.lr_rotation;
    cfg.lr_sh = o.lr_sh;
    cfg.seed = o.seed;
    return cfg;
}

/// Loads the bundle plus the (linearized) training images.
TrainData load_train_data(const SfmBundle& bundle,
                          const std::filesystem::path& images_dir) {
    TrainData data;
    for (const auto& img : bundle.images) {
        data.cameras.push_back(bundle_camera(bundle, img));
        data.images.push_back(read_png_linear(images_dir / img.name));
        if (data.images.back().height != data.cameras.back().height ||
            data.images.back().width != data.cameras.back().width)
            throw Error(ErrorCode::shape_mismatch,
                        img.name + " does not match its camera dimensions");
    }
    return data;
}

void write_json(const std::filesystem::path& path, const ordered_json& doc) {
    std::ofstream out(path);
    if (!out.is_open())
        throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

}  // namespace

void apply_config_file(PipelineOptions& o, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.is_open())
        throw Error(ErrorCode::not_found, "missing config: " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw Error(ErrorCode::parse_error,
                            path.string() + ":" + std::to_string(line_no) +
                                ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t\r");
            std::size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw Error(ErrorCode::parse_error,
                        path.string() + ":" + std::to_string(line_no) +
                            ": empty key or value");

        try {
            if (key == "sfm_dir") o.sfm_dir = value;
            else if (key == "images_dir") o.images_dir = value;
            else if (key == "output_dir") o.output_dir = value;
            else if (key == "model") o.model = value;
            else if (key == "resume") o.resume = value;
            else if (key == "seed") o.seed = std::stoull(value);
            else if (key == "shape") o.shape = value;
            else if (key == "views") o.views = std::stoi(value);
            else if (key == "resolution") o.resolution = std::stoi(value);
            else if (key == "grid") o.grid = std::stoi(value);
            else if (key == "points") o.points = std::stoi(value);
            else if (key == "k") o.k = std::stoi(value);
            else if (key == "sh_degree") o.sh_degree = std::stoi(value);
            else if (key == "total_iters") o.total_iters = std::stoi(value);
            else if (key == "prune_iters") o.prune_iters = parse_int_list(value);
            else if (key == "densify_iters") o.densify_iters = parse_int_list(value);
            else if (key == "prune_ratio") o.prune_ratio = std::stod(value);
            else if (key == "tau") o.tau = std::stod(value);
            else if (key == "knn") o.knn = std::stoi(value);
            else if (key == "eval_every") o.eval_every = std::stoi(value);
            else if (key == "dssim_weight") o.dssim_weight = std::stod(value);
            else if (key == "lr_position") o.lr_position = std::stod(value);
            else if (key == "lr_bary") o.lr_bary = std::stod(value);
            else if (key == "lr_opacity") o.lr_opacity = std::stod(value);
            else if (key == "lr_scale") o.lr_scale = std::stod(value);
            else if (key == "lr_rotation") o.lr_rotation = std::stod(value);
            else if (key == "lr_sh") o.lr_sh = std::stod(value);
            else if (key == "codebook_size") o.codebook_size = std::stoi(value);
            else if (key == "holdout_only") o.holdout_only = (value == "true" || value == "1");
            else
                throw Error(ErrorCode::config_error,
                            path.string() + ":" + std::to_string(line_no) +
                                ": unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw Error(ErrorCode::parse_error,
                        path.string() + ":" + std::to_string(line_no) +
                            ": malformed value for '" + key + "'");
        }
    }
}

int cmd_synth(const PipelineOptions& o) {
    if (o.output_dir.empty())
        throw Error(ErrorCode::config_error, "synth needs --output");
    if (o.resolution < 1) throw Error(ErrorCode::config_error, "resolution must be > 0");

    SynthConfig cfg;
    cfg.shape = o.shape;
    cfg.views = o.views;
    cfg.resolution = o.resolution;
    cfg.seed = o.seed;
    cfg.grid = o.grid;
    cfg.sfm_points = o.points;
    SynthScene synth = make_synthetic_scene(cfg);

    std::filesystem::create_directories(o.output_dir / "images");
    write_colmap_text(synth.bundle, o.output_dir);
    for (std::size_t i = 0; i < synth.images.size(); ++i)
        write_png_srgb(o.output_dir / "images" / synth.bundle.images[i].name,
                       synth.images[i]);
    save_compact(o.output_dir / "gt_model.ea3d", synth.ground_truth);
    std::cout << "synth: " << synth.ground_truth.size() << " ground-truth splats, "
              << synth.bundle.points.size() << " SfM points, " << synth.images.size()
              << " views -> " << o.output_dir.string() << "\n";
    return 0;
}

int cmd_init(const PipelineOptions& o) {
    require_exists(o.sfm_dir / "cameras.txt", "SfM bundle (cameras.txt)");
    if (o.output_dir.empty())
        throw Error(ErrorCode::config_error, "init needs --output");

    SfmBundle bundle = parse_colmap_text(o.sfm_dir);
    std::vector<Eigen::Vector3d> points;
    for (const auto& pt : bundle.points) points.push_back(pt.xyz);

    auto mesh = std::make_shared<const TetraMesh>(delaunay_tetrahedralize(points));
    auto scene = init_gaussians_on_faces<float>(mesh, o.k, o.sh_degree);

    // Mesh vertices are the deduplicated cloud in first-occurrence order;
    // walk the original points to map each vertex back to its SfM color.
    std::vector<int> vertex_to_point(mesh->vertices.size(), -1);
    {
        std::size_t cursor = 0;
        for (std::size_t v = 0; v < mesh->vertices.size(); ++v) {
            while (cursor < points.size() && points[cursor] != mesh->vertices[v])
                ++cursor;
            if (cursor < points.size()) vertex_to_point[v] = int(cursor++);
        }
    }

    // Seed colors from the SfM cloud: mean vertex color per face.
    for (auto& g : scene.gaussians) {
        const auto& f = mesh->faces[std::size_t(g.anchor->face_id)];
        Eigen::Vector3d color = Eigen::Vector3d::Zero();
        int used = 0;
        for (int v : f) {
            int p = vertex_to_point[std::size_t(v)];
            if (p < 0) continue;
            const auto& rgb = bundle.points[std::size_t(p)].rgb;
            for (int c = 0; c < 3; ++c) color[c] += srgb_decode(double(rgb[c]) / 255.0);
            ++used;
        }
        color /= std::max(used, 1);
        for (int c = 0; c < 3; ++c)
            g.sh(0, c) = float((color[c] - 0.5) / shc::C0);
    }

    std::filesystem::create_directories(o.output_dir);
    write_tetmesh_text(o.output_dir / "mesh.tetmesh", *mesh);
    save_compact(o.output_dir / "init_model.ea3d", scene);
    std::cout << "init: " << mesh->tetrahedra.size() << " tets, "
              << mesh->faces.size() << " faces, k=" << o.k << " -> "
              << scene.size() << " Gaussians\n";
    return 0;
}

int cmd_train(const PipelineOptions& o) {
    require_exists(o.model, "initial model (run init first)");
    require_exists(o.sfm_dir / "images.txt", "SfM bundle (images.txt)");
    require_exists(o.images_dir, "images directory");
    if (o.output_dir.empty())
        throw Error(ErrorCode::config_error, "train needs --output");

    SfmBundle bundle = parse_colmap_text(o.sfm_dir);
    TrainData data = load_train_data(bundle, o.images_dir);
    LoadedModel model = load_compact(o.model);

    TrainConfig cfg = to_train_config(o);
    TrainerState resume_state;
    const TrainerState* resume = nullptr;
    if (!o.resume.empty()) {
        require_exists(o.resume, "resume checkpoint");
        LoadedModel ck = load_compact(o.resume);
        model.scene = ck.scene;
        resume_state = load_trainer_state(o.resume.string() + ".optim");
        resume = &resume_state;
    }

    TrainResult result = train(model.scene, data, cfg, {}, resume);

    std::filesystem::create_directories(o.output_dir);
    save_compact(o.output_dir / "checkpoint.ea3d", result.scene);
    save_trainer_state(o.output_dir / "checkpoint.ea3d.optim", result.state);

    // Line-delimited structured log plus a machine-readable summary
    // (wall-clock stays on the console so artifacts are byte-stable).
    {
        std::ofstream log(o.output_dir / "report.jsonl");
        for (std::size_t i = 0; i < result.report.losses.size(); ++i) {
            ordered_json row;
            row["iter"] = i + 1 + (resume ? std::size_t(resume_state.iter) : 0);
            row["loss"] = result.report.losses[i];
            log << row.dump() << "\n";
        }
        for (const auto& c : result.report.counts) {
            ordered_json row;
            row["iter"] = c.iter;
            row["event"] = c.event;
            row["count"] = c.count;
            log << row.dump() << "\n";
        }
        for (const auto& e : result.report.evals) {
            ordered_json row;
            row["iter"] = e.iter;
            row["psnr"] = e.psnr;
            row["ssim"] = e.ssim;
            log << row.dump() << "\n";
        }
    }
    ordered_json summary;
    summary["final_count"] = result.report.final_count;
    summary["iters"] = cfg.total_iters;
    summary["aborted_non_finite"] = result.report.aborted_non_finite;
    ordered_json evals = ordered_json::array();
    for (const auto& e : result.report.evals)
        evals.push_back({{"iter", e.iter}, {"psnr", e.psnr}, {"ssim", e.ssim}});
    summary["evals"] = evals;
    ordered_json counts = ordered_json::array();
    for (const auto& c : result.report.counts)
        counts.push_back({{"iter", c.iter}, {"event", c.event}, {"count", c.count}});
    summary["counts"] = counts;
    write_json(o.output_dir / "train_summary.json", summary);

    std::cout << "train: " << result.report.final_count << " Gaussians after "
              << cfg.total_iters << " iters in " << result.report.wall_seconds
              << " s\n";
    if (!result.report.evals.empty())
        std::cout << "train: final held-out psnr "
                  << result.report.evals.back().psnr << " dB, ssim "
                  << result.report.evals.back().ssim << "\n";
    return result.report.aborted_non_finite ? 1 : 0;
}

int cmd_prune(const PipelineOptions& o) {
    require_exists(o.model, "model checkpoint");
    require_exists(o.sfm_dir / "images.txt", "SfM bundle (images.txt)");
    if (o.output_dir.empty())
        throw Error(ErrorCode::config_error, "prune needs --output");

    SfmBundle bundle = parse_colmap_text(o.sfm_dir);
    LoadedModel model = load_compact(o.model);
    std::vector<Camera<float>> cams;
    for (const auto& img : bundle.images) cams.push_back(bundle_camera(bundle, img));

    auto scores = accumulate_importance(model.scene, cams);
    auto curv = local_curvature(scene_positions(model.scene), o.knn, o.tau);
    auto result = prune(model.scene, scores, o.prune_ratio, curv.protect_mask);

    std::filesystem::create_directories(o.output_dir);
    save_compact(o.output_dir / "pruned.ea3d", result.scene);
    {
        std::ofstream sc(o.output_dir / "scores.txt");
        sc << "# per-Gaussian importance scores (pre-prune order)\n";
        for (double s : scores.scores) sc << s << "\n";
        std::ofstream cv(o.output_dir / "curvature.txt");
        cv << "# per-Gaussian surface variation rho (pre-prune order)\n";
        for (double r : curv.rho) cv << r << "\n";
    }
    std::cout << "prune: removed " << result.removed << " of "
              << scores.scores.size() << " (ratio " << o.prune_ratio << ")"
              << (result.all_protected ? " [all candidates protected]" : "") << "\n";
    return 0;
}

int cmd_compress(const PipelineOptions& o) {
    require_exists(o.model, "model checkpoint");
    if (o.output_dir.empty())
        throw Error(ErrorCode::config_error, "compress needs --output");

    LoadedModel model = load_compact(o.model);
    VqConfig cfg;
    cfg.k_color = cfg.k_sh = cfg.k_scale = cfg.k_rotation = o.codebook_size;
    cfg.seed = o.seed;
    auto quant = quantize_scene(model.scene, cfg);

    std::filesystem::create_directories(o.output_dir);
    const auto raw_path = o.output_dir / "raw.ea3d";
    const auto quant_path = o.output_dir / "quantized.ea3d";
    save_compact(raw_path, model.scene);
    save_compact(quant_path, model.scene, &quant.books);

    CompressionReport report = compression_report(raw_path, quant_path);
    ordered_json doc;
    doc["raw_bytes"] = report.raw_bytes;
    doc["quantized_bytes"] = report.quantized_bytes;
    doc["ratio"] = report.ratio;
    doc["no_data"] = report.no_data;
    ordered_json groups;
    for (const auto& [k, v] : report.group_bytes) groups[k] = v;
    doc["group_bytes"] = groups;
    write_json(o.output_dir / "compression_report.json", doc);

    std::cout << "compress: " << report.raw_bytes << " -> " << report.quantized_bytes
              << " bytes (ratio " << report.ratio << ")\n";
    return 0;
}

int cmd_render(const PipelineOptions& o) {
    require_exists(o.model, "model checkpoint");
    require_exists(o.sfm_dir / "images.txt", "SfM bundle (images.txt)");
    if (o.output_dir.empty())
        throw Error(ErrorCode::config_error, "render needs --output");

    SfmBundle bundle = parse_colmap_text(o.sfm_dir);
    LoadedModel model = load_compact(o.model);

    auto holdout = holdout_indices(bundle.images.size());
    std::vector<std::uint8_t> is_holdout(bundle.images.size(), 0);
    for (int i : holdout) is_holdout[std::size_t(i)] = 1;

    std::filesystem::create_directories(o.output_dir);
    int rendered = 0;
    for (std::size_t i = 0; i < bundle.images.size(); ++i) {
        if (o.holdout_only && !is_holdout[i]) continue;
        auto cam = bundle_camera(bundle, bundle.images[i]);
        auto out = rasterize(model.scene, cam);
        write_png_srgb(o.output_dir / bundle.images[i].name, out.color);
        ++rendered;
    }
    std::cout << "render: wrote " << rendered << " views\n";
    return 0;
}

int cmd_eval(const PipelineOptions& o) {
    require_exists(o.model, "model checkpoint");
    require_exists(o.sfm_dir / "images.txt", "SfM bundle (images.txt)");
    require_exists(o.images_dir, "images directory");
    if (o.output_dir.empty())
        throw Error(ErrorCode::config_error, "eval needs --output");

    SfmBundle bundle = parse_colmap_text(o.sfm_dir);
    LoadedModel model = load_compact(o.model);

    auto holdout = holdout_indices(bundle.images.size());
    std::vector<std::uint8_t> is_holdout(bundle.images.size(), 0);
    for (int i : holdout) is_holdout[std::size_t(i)] = 1;

    ordered_json views = ordered_json::array();
    double psnr_sum = 0, ssim_sum = 0;
    int counted = 0;
    for (std::size_t i = 0; i < bundle.images.size(); ++i) {
        if (o.holdout_only && !is_holdout[i]) continue;
        auto cam = bundle_camera(bundle, bundle.images[i]);
        auto target = read_png_linear(o.images_dir / bundle.images[i].name);
        auto out = rasterize(model.scene, cam);
        double p = psnr(out.color, target);
        double s = ssim(out.color, target);
        views.push_back({{"name", bundle.images[i].name},
                         {"holdout", bool(is_holdout[i])},
                         {"psnr", p},
                         {"ssim", s}});
        psnr_sum += p;
        ssim_sum += s;
        ++counted;
    }
    if (counted == 0) throw Error(ErrorCode::empty_input, "no views to evaluate");

    ordered_json doc;
    doc["mean_psnr"] = psnr_sum / counted;
    doc["mean_ssim"] = ssim_sum / counted;
    doc["views"] = views;
    std::filesystem::create_directories(o.output_dir);
    write_json(o.output_dir / "metrics.json", doc);
    std::cout << "eval: mean psnr " << psnr_sum / counted << " dB, mean ssim "
              << ssim_sum / counted << " over " << counted << " views\n";
    return 0;
}

}  // namespace ea3d::cli
