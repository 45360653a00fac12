#include <doctest.h>

#include <filesystem>
#include <random>
#include <fstream>

#include "ea3d/colmap.hpp"
#include "ea3d/compact.hpp"
#include "ea3d/mesh_io.hpp"
#include "ea3d/png_io.hpp"
#include "ea3d/ply.hpp"
#include "ea3d/tetra.hpp"
#include "ea3d/util.hpp"
#include "ea3d/vq.hpp"
#include "support/scene_gen.hpp"

using namespace ea3d;
namespace fs = std::filesystem;
namespace tt = ea3d::testing;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("ea3d_test_" + std::to_string(SplitMix64(
                                   std::random_device{}()).next()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SfmBundle minimal_bundle() {
    SfmBundle b;
    SfmCamera cam;
    cam.camera_id = 1;
    cam.model = "PINHOLE";
    cam.width = 64;
    cam.height = 48;
    cam.fx = 50;
    cam.fy = 52;
    cam.cx = 32;
    cam.cy = 24;
    b.cameras[1] = cam;
    SfmImage img;
    img.image_id = 1;
    img.camera_id = 1;
    img.name = "a.png";
    img.quat = Eigen::Vector4d(1, 0, 0, 0);
    b.images.push_back(img);
    SfmPoint pt;
    pt.point_id = 1;
    pt.xyz = Eigen::Vector3d(0.5, -0.25, 2.0);
    pt.rgb = Eigen::Matrix<int, 3, 1>(10, 200, 30);
    pt.error = 1.25;
    pt.track_length = 2;
    b.points.push_back(pt);
    return b;
}

}  // namespace

TEST_CASE("colmap: minimal fixture parses with counts (1,1,1)") {
    TempDir dir;
    write_colmap_text(minimal_bundle(), dir.path);
    SfmBundle b = parse_colmap_text(dir.path);
    CHECK(b.cameras.size() == 1);
    CHECK(b.images.size() == 1);
    CHECK(b.points.size() == 1);
    CHECK(b.cameras[1].fy == 52.0);

    // Identity quaternion, zero translation -> identity world-to-camera.
    auto cam = bundle_camera(b, b.images[0]);
    CHECK((cam.rotation - Eigen::Matrix3f::Identity()).norm() == 0.0f);
    CHECK(cam.translation.norm() == 0.0f);
}

TEST_CASE("colmap: synthetic bundle round-trips through our writer") {
    SplitMix64 rng(3);
    SfmBundle b;
    SfmCamera cam;
    cam.camera_id = 2;
    cam.model = "SIMPLE_PINHOLE";
    cam.width = 128;
    cam.height = 128;
    cam.fx = cam.fy = 100.25;
    cam.cx = 64.5;
    cam.cy = 63.5;
    b.cameras[2] = cam;
    for (int i = 0; i < 7; ++i) {
        SfmImage img;
        img.image_id = i + 1;
        img.camera_id = 2;
        img.name = "img_" + std::to_string(i) + ".png";
        Eigen::Vector4d q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                          rng.uniform(-1, 1));
        img.quat = q.normalized();
        img.translation =
            Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        b.images.push_back(img);
    }
    for (int i = 0; i < 50; ++i) {
        SfmPoint pt;
        pt.point_id = std::uint64_t(i + 10);
        pt.xyz = Eigen::Vector3d(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        pt.rgb = Eigen::Matrix<int, 3, 1>(int(rng.below(256)), int(rng.below(256)),
                                          int(rng.below(256)));
        pt.error = rng.uniform(0, 2);
        pt.track_length = int(rng.below(5));
        b.points.push_back(pt);
    }

    TempDir dir;
    write_colmap_text(b, dir.path);
    SfmBundle c = parse_colmap_text(dir.path);
    REQUIRE(c.images.size() == b.images.size());
    REQUIRE(c.points.size() == b.points.size());
    CHECK(c.cameras[2].model == "SIMPLE_PINHOLE");
    for (std::size_t i = 0; i < b.images.size(); ++i) {
        // Writer emits %.17g, so doubles survive exactly; quaternion may
        // flip sign only through normalization of an already-unit input.
        CHECK((c.images[i].quat - b.images[i].quat).norm() < 1e-15);
        CHECK((c.images[i].translation - b.images[i].translation).norm() == 0.0);
        CHECK(c.images[i].name == b.images[i].name);
    }
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        CHECK((c.points[i].xyz - b.points[i].xyz).norm() == 0.0);
        CHECK(c.points[i].rgb == b.points[i].rgb);
        CHECK(c.points[i].track_length == b.points[i].track_length);
    }
}

TEST_CASE("colmap: errors are structured and specific") {
    TempDir dir;
    CHECK_THROWS_AS((void)parse_colmap_text(dir.path), Error);  // not found

    write_colmap_text(minimal_bundle(), dir.path);
    {
        std::ofstream out(dir.path / "cameras.txt");
        out << "# Number of cameras: 1\n1 FISHEYE 64 48 1 2 3 4\n";
    }
    try {
        (void)parse_colmap_text(dir.path);
        FAIL("expected unsupported_model");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unsupported_model);
        CHECK(std::string(e.what()).find("FISHEYE") != std::string::npos);
    }

    {
        std::ofstream out(dir.path / "cameras.txt");
        out << "1 PINHOLE 64 48 50 52 32 24\n";
        std::ofstream img(dir.path / "images.txt");
        img << "1 1 0 0 0 0 0 zz 1 a.png\n\n";  // malformed tz
    }
    try {
        (void)parse_colmap_text(dir.path);
        FAIL("expected parse_error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::parse_error);
        CHECK(std::string(e.what()).find(":1") != std::string::npos);  // line no
    }
}

TEST_CASE("ply: three-point ascii cloud") {
    TempDir dir;
    fs::path p = dir.path / "tri.ply";
    {
        std::ofstream out(p);
        out << "ply\nformat ascii 1.0\nelement vertex 3\n"
               "property float x\nproperty float y\nproperty float z\n"
               "end_header\n0 0 0\n1 0 0\n0 1 0\n";
    }
    PlyCloud cloud = read_ply_points(p);
    REQUIRE(cloud.positions.size() == 3);
    CHECK(cloud.positions[1] == Eigen::Vector3d(1, 0, 0));
}

TEST_CASE("ply: gaussian write/read round trip is bit-identical") {
    auto scene = tt::random_scene<float>(100, 9);
    TempDir dir;
    fs::path p = dir.path / "model.ply";
    write_ply_gaussians(p, scene);
    SceneModelf back = read_ply_gaussians(p);
    REQUIRE(back.size() == scene.size());
    CHECK(back.sh_degree == scene.sh_degree);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        CHECK(back.gaussians[i].position == scene.gaussians[i].position);
        CHECK(back.gaussians[i].rotation == scene.gaussians[i].rotation);
        CHECK(back.gaussians[i].log_scale == scene.gaussians[i].log_scale);
        CHECK(back.gaussians[i].opacity_logit == scene.gaussians[i].opacity_logit);
        CHECK(back.gaussians[i].sh == scene.gaussians[i].sh);
    }
}

TEST_CASE("ply: SH degree inferred from f_rest property count") {
    for (int degree = 0; degree <= 3; ++degree) {
        auto scene = tt::random_scene<float>(4, 11, degree);
        TempDir dir;
        fs::path p = dir.path / "g.ply";
        write_ply_gaussians(p, scene);
        CHECK(read_ply_gaussians(p).sh_degree == degree);
    }
}

TEST_CASE("ply: schema and truncation errors") {
    TempDir dir;
    fs::path p = dir.path / "bad.ply";
    {
        std::ofstream out(p);
        out << "ply\nformat ascii 1.0\nelement vertex 1\n"
               "property float a\nproperty float b\nend_header\n1 2\n";
    }
    CHECK_THROWS_AS((void)read_ply_points(p), Error);  // missing xyz

    auto scene = tt::random_scene<float>(10, 13);
    fs::path q = dir.path / "trunc.ply";
    write_ply_gaussians(q, scene);
    auto bytes = std::vector<char>();
    {
        std::ifstream in(q, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    {
        std::ofstream out(q, std::ios::binary);
        out.write(bytes.data(), long(bytes.size()) - 40);
    }
    try {
        (void)read_ply_gaussians(q);
        FAIL("expected length_mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::length_mismatch);
    }
}

TEST_CASE("png: linear round trip within 8-bit sRGB quantization") {
    Image<float> img(24, 32, 3);
    SplitMix64 rng(5);
    for (auto& v : img.data) v = float(rng.uniform());
    TempDir dir;
    fs::path p = dir.path / "img.png";
    write_png_srgb(p, img);
    Image<float> back = read_png_linear(p);
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    float worst = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i)
        worst = std::max(worst, std::abs(img.data[i] - back.data[i]));
    CHECK(worst < 0.01f);

    // Deterministic bytes: second write is identical.
    fs::path p2 = dir.path / "img2.png";
    write_png_srgb(p2, img);
    std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
    std::vector<char> ba(std::istreambuf_iterator<char>(a), {});
    std::vector<char> bb(std::istreambuf_iterator<char>(b), {});
    CHECK(ba == bb);
}

TEST_CASE("png: garbage input is rejected") {
    TempDir dir;
    fs::path p = dir.path / "x.png";
    {
        std::ofstream out(p, std::ios::binary);
        out << "definitely not a png";
    }
    CHECK_THROWS_AS((void)read_png_linear(p), Error);
}

TEST_CASE("compact: empty scene round-trips header-only") {
    SceneModelf scene;
    scene.sh_degree = 3;
    TempDir dir;
    fs::path p = dir.path / "empty.ea3d";
    save_compact(p, scene);
    LoadedModel back = load_compact(p);
    CHECK(back.scene.size() == 0);
    CHECK(back.scene.sh_degree == 3);
    CHECK(!back.quantized);
}

TEST_CASE("compact: raw scene round trip is exact; bytes match the formula") {
    auto scene = tt::random_scene<float>(1000, 15);
    TempDir dir;
    fs::path p = dir.path / "raw.ea3d";
    save_compact(p, scene);

    // header 32B + payload-length field already included; per splat:
    // 12 pos + 4 opacity + 16 rot + 12 scale + 192 sh = 236 bytes (L=3).
    CHECK(fs::file_size(p) == 32 + 1000 * 236);

    LoadedModel back = load_compact(p);
    REQUIRE(back.scene.size() == scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        CHECK(back.scene.gaussians[i].position == scene.gaussians[i].position);
        CHECK(back.scene.gaussians[i].rotation == scene.gaussians[i].rotation);
        CHECK(back.scene.gaussians[i].log_scale == scene.gaussians[i].log_scale);
        CHECK(back.scene.gaussians[i].opacity_logit == scene.gaussians[i].opacity_logit);
        CHECK(back.scene.gaussians[i].sh == scene.gaussians[i].sh);
    }
}

TEST_CASE("compact: anchored scene with mesh round-trips and stays anchored") {
    auto mesh = std::make_shared<const TetraMesh>(delaunay_tetrahedralize(
        {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.9, 0.9, 0.9}}));
    auto scene = init_gaussians_on_faces<float>(mesh, 2, 2);
    TempDir dir;
    fs::path p = dir.path / "anchored.ea3d";
    save_compact(p, scene);
    LoadedModel back = load_compact(p);
    REQUIRE(back.scene.mesh);
    REQUIRE(back.scene.size() == scene.size());
    CHECK(back.scene.mesh->faces == mesh->faces);  // same face enumeration
    for (std::size_t i = 0; i < scene.size(); ++i) {
        REQUIRE(back.scene.gaussians[i].anchor.has_value());
        CHECK(back.scene.gaussians[i].anchor->face_id ==
              scene.gaussians[i].anchor->face_id);
        CHECK(back.scene.gaussians[i].anchor->logits ==
              scene.gaussians[i].anchor->logits);
    }
    // Anchoring closure after the round trip.
    SceneModelf recomputed = back.scene;
    refresh_anchored_positions(recomputed);
    for (std::size_t i = 0; i < recomputed.size(); ++i)
        CHECK((recomputed.gaussians[i].position - back.scene.gaussians[i].position)
                  .norm() < 1e-6f);
}

TEST_CASE("compact: quantized round trip reproduces the reconstruction") {
    auto scene = tt::random_scene<float>(300, 17);
    VqConfig cfg;
    cfg.k_color = cfg.k_sh = cfg.k_scale = cfg.k_rotation = 32;
    auto quant = quantize_scene(scene, cfg);

    TempDir dir;
    fs::path p = dir.path / "q.ea3d";
    save_compact(p, scene, &quant.books);
    LoadedModel back = load_compact(p);
    CHECK(back.quantized);
    REQUIRE(back.books.has_value());
    REQUIRE(back.scene.size() == scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        CHECK(back.scene.gaussians[i].sh == quant.reconstructed.gaussians[i].sh);
        CHECK(back.scene.gaussians[i].log_scale ==
              quant.reconstructed.gaussians[i].log_scale);
        CHECK(back.scene.gaussians[i].rotation ==
              quant.reconstructed.gaussians[i].rotation);
        CHECK(back.scene.gaussians[i].position == scene.gaussians[i].position);
    }

    // Re-render equality: the loaded reconstruction is the same scene.
    auto cam = tt::default_camera<float>(24);
    auto a = rasterize(quant.reconstructed, cam);
    auto b = rasterize(back.scene, cam);
    CHECK(a.color.data == b.color.data);
}

TEST_CASE("compact: each corruption class gets its own error") {
    auto scene = tt::random_scene<float>(20, 19);
    TempDir dir;
    fs::path p = dir.path / "m.ea3d";
    save_compact(p, scene);
    std::vector<unsigned char> bytes;
    {
        std::ifstream in(p, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write_variant = [&](std::size_t offset, unsigned char value,
                             std::size_t truncate = 0) {
        auto copy = bytes;
        if (offset < copy.size()) copy[offset] = value;
        if (truncate) copy.resize(copy.size() - truncate);
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<const char*>(copy.data()), long(copy.size()));
    };
    auto expect_code = [&](ErrorCode code) {
        try {
            (void)load_compact(p);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };

    write_variant(0, 'X');
    expect_code(ErrorCode::bad_magic);
    write_variant(4, 9);  // version
    expect_code(ErrorCode::bad_version);
    write_variant(17, 0x80);  // unknown flag bit
    expect_code(ErrorCode::bad_flags);
    write_variant(0, bytes[0], 8);  // truncation
    expect_code(ErrorCode::length_mismatch);
    write_variant(100, bytes[100] ^ 0xff);  // payload corruption
    expect_code(ErrorCode::checksum_mismatch);
}

TEST_CASE("compact: codebooks beyond 65536 entries use u32 indices") {
    auto scene = tt::random_scene<float>(10, 23);
    VqConfig small;
    small.k_color = small.k_sh = small.k_scale = small.k_rotation = 4;
    auto quant = quantize_scene(scene, small);
    // Blow up one group past the u16 limit (contents are irrelevant to the
    // container; the width is derived from K).
    quant.books.scale.centroids = Eigen::MatrixXf::Zero(70000, 3);
    for (auto& idx : quant.books.scale.indices) idx = 69999;

    TempDir dir;
    fs::path p = dir.path / "wide.ea3d";
    save_compact(p, scene, &quant.books);
    LoadedModel back = load_compact(p);
    REQUIRE(back.books.has_value());
    CHECK(back.books->scale.k() == 70000);
    CHECK(back.books->scale.indices[0] == 69999);
    CHECK(back.books->color_dc.k() == 4);  // narrow group keeps u16
}

TEST_CASE("tetmesh text interchange round trip") {
    SplitMix64 rng(21);
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 40; ++i)
        pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
    TetraMesh mesh = delaunay_tetrahedralize(pts);

    TempDir dir;
    fs::path p = dir.path / "mesh.tetmesh";
    write_tetmesh_text(p, mesh);
    TetraMesh back = read_tetmesh_text(p);
    CHECK(back.tetrahedra == mesh.tetrahedra);
    CHECK(back.faces == mesh.faces);          // same enumeration
    CHECK(back.face_of_tet == mesh.face_of_tet);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        CHECK(back.vertices[i] == mesh.vertices[i]);  // %.17g is lossless

    {
        std::ofstream out(p);
        out << "tetmesh 1\nvertices 5\n0 0 0\n";  // truncated
    }
    CHECK_THROWS_AS((void)read_tetmesh_text(p), Error);
}
