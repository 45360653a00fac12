#include <doctest.h>

#include <Eigen/Dense>

#include "ea3d/tetra.hpp"
#include "ea3d/util.hpp"
#include "support/oracles.hpp"

using namespace ea3d;

namespace {

std::shared_ptr<const TetraMesh> mesh_of(std::vector<Eigen::Vector3d> pts) {
    return std::make_shared<const TetraMesh>(delaunay_tetrahedralize(pts));
}

std::vector<Eigen::Vector3d> random_cloud(std::size_t n, uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<Eigen::Vector3d> pts;
    for (std::size_t i = 0; i < n; ++i)
        pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
    return pts;
}

}  // namespace

TEST_CASE("barycentric_position basics") {
    Eigen::Vector3d v1(0, 0, 0), v2(1, 0, 0), v3(0, 1, 0);
    CHECK((barycentric_position(v1, v2, v3, {1, 0, 0}) - v1).norm() == 0.0);
    CHECK((barycentric_position(v1, v2, v3, Eigen::Vector3d(1, 1, 1) / 3.0) -
           Eigen::Vector3d(1.0 / 3, 1.0 / 3, 0))
              .norm() < 1e-15);
    CHECK((barycentric_position(v1, v2, v3, {0.5, 0.25, 0.25}) -
           Eigen::Vector3d(0.25, 0.25, 0))
              .norm() < 1e-15);
    CHECK_THROWS_AS(
        (void)barycentric_position(v1, v2, v3, Eigen::Vector3d(0.5, 0.5, 0.5)), Error);
    CHECK_THROWS_AS(
        (void)barycentric_position(v1, v2, v3, Eigen::Vector3d(1.2, -0.2, 0.0)), Error);
}

TEST_CASE("single tetra with k=3 yields 12 anchored Gaussians") {
    auto mesh = mesh_of({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    REQUIRE(mesh->faces.size() == 4);
    auto scene = init_gaussians_on_faces<float>(mesh, 3, 3);
    CHECK(scene.size() == 12);
    for (const auto& g : scene.gaussians) {
        REQUIRE(g.anchor.has_value());
        CHECK(g.anchor->face_id >= 0);
        CHECK(g.anchor->face_id < int(mesh->faces.size()));
    }
    CHECK(scene.sh_degree == 3);
    CHECK(scene.mesh == mesh);
}

TEST_CASE("k=1 puts every splat at its face centroid") {
    auto mesh = mesh_of(random_cloud(30, 3));
    auto scene = init_gaussians_on_faces<double>(mesh, 1, 1);
    REQUIRE(scene.size() == mesh->faces.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& g = scene.gaussians[i];
        const auto& f = mesh->faces[std::size_t(g.anchor->face_id)];
        Eigen::Vector3d centroid = (mesh->vertices[std::size_t(f[0])] +
                                    mesh->vertices[std::size_t(f[1])] +
                                    mesh->vertices[std::size_t(f[2])]) / 3.0;
        CHECK((g.position - centroid).norm() < 1e-9);
    }
}

TEST_CASE("count rule k*n for the cube mesh across k") {
    auto cloud = std::vector<Eigen::Vector3d>{};
    for (int i = 0; i < 8; ++i)
        cloud.emplace_back(double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1));
    auto mesh = mesh_of(cloud);

    // Independent count of unique faces from the tet list.
    auto incidence = ea3d::testing::face_incidence(*mesh);
    std::size_t n_faces = incidence.size();
    REQUIRE(n_faces == mesh->faces.size());

    for (int k = 1; k <= 4; ++k) {
        auto scene = init_gaussians_on_faces<float>(mesh, k, 2);
        CHECK(scene.size() == std::size_t(k) * n_faces);
    }
}

TEST_CASE("anchored positions satisfy the convex-combination equation") {
    auto mesh = mesh_of(random_cloud(40, 17));
    auto scene = init_gaussians_on_faces<float>(mesh, 3, 3);
    for (const auto& g : scene.gaussians) {
        const auto& f = mesh->faces[std::size_t(g.anchor->face_id)];
        Eigen::Vector3d w = g.anchor->weights_double();
        CHECK(w.minCoeff() > 0.0);
        CHECK(std::abs(w.sum() - 1.0) < 1e-9);
        Eigen::Vector3d p = barycentric_position(mesh->vertices[std::size_t(f[0])],
                                                 mesh->vertices[std::size_t(f[1])],
                                                 mesh->vertices[std::size_t(f[2])], w);
        CHECK((g.position.cast<double>() - p).norm() < 1e-6);
    }
}

TEST_CASE("spread weights: lattice points are interior and distinct") {
    for (int k = 1; k <= 6; ++k) {
        auto w = splat_spread_weights(k);
        REQUIRE(int(w.size()) == k);
        for (const auto& x : w) {
            CHECK(x.minCoeff() > 0.0);
            CHECK(std::abs(x.sum() - 1.0) < 1e-12);
        }
        for (std::size_t i = 0; i < w.size(); ++i)
            for (std::size_t j = i + 1; j < w.size(); ++j)
                CHECK((w[i] - w[j]).norm() > 1e-6);
    }
    CHECK((splat_spread_weights(1)[0] - Eigen::Vector3d(1, 1, 1) / 3.0).norm() < 1e-12);
}

TEST_CASE("face frames are orthonormal with positive extents") {
    auto mesh = mesh_of(random_cloud(25, 5));
    for (int f = 0; f < int(mesh->faces.size()); ++f) {
        FaceFrame frame = face_frame(*mesh, f);
        CHECK(std::abs(frame.normal.norm() - 1.0) < 1e-9);
        CHECK(std::abs(frame.normal.dot(frame.axis_u)) < 1e-6);
        CHECK(std::abs(frame.normal.dot(frame.axis_v)) < 1e-6);
        CHECK(std::abs(frame.axis_u.dot(frame.axis_v)) < 1e-6);
        CHECK(frame.edge_scales.minCoeff() > 0.0);
        CHECK(frame.edge_scales.z() <=
              0.05 * std::min(frame.edge_scales.x(), frame.edge_scales.y()) + 1e-12);
    }
}

TEST_CASE("init rotation aligns the splat to its face plane") {
    auto mesh = mesh_of(random_cloud(20, 29));
    auto scene = init_gaussians_on_faces<double>(mesh, 2, 0);
    for (const auto& g : scene.gaussians) {
        FaceFrame frame = face_frame(*mesh, g.anchor->face_id);
        Eigen::Matrix3d r = quat_to_matrix<double>(g.unit_rotation());
        // Third body axis carries the (smallest) thickness scale and must
        // match the face normal up to sign.
        CHECK(std::abs(std::abs(r.col(2).dot(frame.normal)) - 1.0) < 1e-9);
        Eigen::Vector3d s = g.scale();
        CHECK(s.z() == doctest::Approx(frame.edge_scales.z()).epsilon(1e-9));
    }
}

TEST_CASE("empty mesh and bad k are rejected") {
    auto mesh = std::make_shared<const TetraMesh>();
    CHECK_THROWS_AS((void)init_gaussians_on_faces<float>(mesh, 3, 3), Error);
    auto good = mesh_of({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK_THROWS_AS((void)init_gaussians_on_faces<float>(good, 0, 3), Error);
}
