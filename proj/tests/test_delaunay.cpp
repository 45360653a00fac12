#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "ea3d/tetra.hpp"
#include "ea3d/util.hpp"
#include "support/oracles.hpp"

using namespace ea3d;
namespace oracle = ea3d::testing;

namespace {

std::vector<Eigen::Vector3d> random_cloud(std::size_t n, uint64_t seed,
                                          double scale = 1.0) {
    SplitMix64 rng(seed);
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pts.emplace_back(rng.uniform(0, scale), rng.uniform(0, scale),
                         rng.uniform(0, scale));
    return pts;
}

std::vector<Eigen::Vector3d> cube_corners() {
    std::vector<Eigen::Vector3d> pts;
    for (int i = 0; i < 8; ++i)
        pts.emplace_back(double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1));
    return pts;
}

}  // namespace

TEST_CASE("four non-coplanar points give one tetrahedron, four faces") {
    std::vector<Eigen::Vector3d> pts = {
        {0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    TetraMesh mesh = delaunay_tetrahedralize(pts);
    CHECK(mesh.tetrahedra.size() == 1);
    CHECK(mesh.faces.size() == 4);
    CHECK(mesh.vertices.size() == 4);
    CHECK(mesh.face_of_tet.size() == 1);
}

TEST_CASE("errors: too few or fully degenerate input") {
    std::vector<Eigen::Vector3d> three = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    CHECK_THROWS_AS((void)delaunay_tetrahedralize(three), Error);

    std::vector<Eigen::Vector3d> dup = {
        {0, 0, 0}, {0, 0, 0}, {1, 1, 1}, {1.0 + 1e-13, 1, 1}, {0.5, 0.5, 0.5}};
    CHECK_THROWS_AS((void)delaunay_tetrahedralize(dup), Error);  // 3 distinct

    try {
        (void)delaunay_tetrahedralize(three);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::insufficient_points);
    }
}

TEST_CASE("coplanar input is rescued by deterministic jitter") {
    std::vector<Eigen::Vector3d> plane;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) plane.emplace_back(i * 0.2, j * 0.2, 0.7);
    TetraMesh mesh = delaunay_tetrahedralize(plane);
    CHECK(mesh.tetrahedra.size() > 0);
    TetraMesh again = delaunay_tetrahedralize(plane);
    CHECK(mesh.tetrahedra == again.tetrahedra);  // seeded, deterministic
}

TEST_CASE("cube corners: tetrahedra fill the cube, circumspheres empty") {
    TetraMesh mesh = delaunay_tetrahedralize(cube_corners());
    CHECK(mesh.vertices.size() == 8);
    CHECK(mesh.tetrahedra.size() >= 5);

    // Brute-force empty-circumsphere predicate over all (tet, vertex) pairs.
    CHECK(oracle::max_insphere_violation(mesh) <= 1e-9);

    // Volumes of the tetrahedra must sum to the cube volume.
    double vol = 0.0;
    for (const auto& tet : mesh.tetrahedra) {
        Eigen::Matrix3d m;
        m.col(0) = mesh.vertices[std::size_t(tet[1])] - mesh.vertices[std::size_t(tet[0])];
        m.col(1) = mesh.vertices[std::size_t(tet[2])] - mesh.vertices[std::size_t(tet[0])];
        m.col(2) = mesh.vertices[std::size_t(tet[3])] - mesh.vertices[std::size_t(tet[0])];
        vol += std::abs(m.determinant()) / 6.0;
    }
    CHECK(vol == doctest::Approx(1.0).epsilon(1e-9));

    SplitMix64 rng(2024);
    for (int i = 0; i < 2000; ++i) {
        Eigen::Vector3d p(rng.uniform(), rng.uniform(), rng.uniform());
        CHECK(oracle::covered_by_mesh(mesh, p, 1e-9));
    }
}

TEST_CASE("random clouds satisfy all TetraMesh invariants") {
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        auto pts = random_cloud(50, seed);
        TetraMesh mesh = delaunay_tetrahedralize(pts);
        REQUIRE(mesh.tetrahedra.size() > 0);

        CHECK(oracle::max_insphere_violation(mesh) <= 1e-9);

        // Each face is incident to one (hull) or two (interior) tetrahedra,
        // and the deduplicated face list matches the incidence keys.
        auto incidence = oracle::face_incidence(mesh);
        CHECK(incidence.size() == mesh.faces.size());
        for (const auto& [face, count] : incidence) {
            CHECK(count >= 1);
            CHECK(count <= 2);
        }

        // face_of_tet consistency: the face opposite vertex i omits v[i].
        for (std::size_t t = 0; t < mesh.tetrahedra.size(); ++t)
            for (int i = 0; i < 4; ++i) {
                const auto& f = mesh.faces[std::size_t(mesh.face_of_tet[t][std::size_t(i)])];
                for (int v : f) CHECK(v != mesh.tetrahedra[t][std::size_t(i)]);
            }
    }
}

TEST_CASE("hull coverage: inside points covered, outside points not") {
    auto pts = random_cloud(80, 77);
    TetraMesh mesh = delaunay_tetrahedralize(pts);

    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= double(pts.size());

    SplitMix64 rng(123);
    int inside_checked = 0;
    for (int i = 0; i < 10000; ++i) {
        // Convex combination of four cloud points lies inside the hull.
        Eigen::Vector3d w4(rng.uniform(), rng.uniform(), rng.uniform());
        double w0 = rng.uniform();
        Eigen::Vector4d w(w0, w4.x(), w4.y(), w4.z());
        w /= w.sum();
        Eigen::Vector3d p = w[0] * pts[rng.below(pts.size())] +
                            w[1] * pts[rng.below(pts.size())] +
                            w[2] * pts[rng.below(pts.size())] +
                            w[3] * pts[rng.below(pts.size())];
        CHECK(oracle::covered_by_mesh(mesh, p, 1e-9));
        ++inside_checked;
    }
    CHECK(inside_checked == 10000);

    for (int i = 0; i < 10000; ++i) {
        // Support-function construction: strictly outside along a random dir.
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        double support = -1e300;
        for (const auto& q : pts) support = std::max(support, dir.dot(q - centroid));
        Eigen::Vector3d p = centroid + dir * (support + 1e-3);
        CHECK(!oracle::covered_by_mesh(mesh, p, 1e-12));
    }
}

TEST_CASE("adaptivity: densifying a subregion shrinks its tetrahedra") {
    auto base = random_cloud(400, 31);
    auto dense = base;
    SplitMix64 rng(32);
    for (int i = 0; i < 400; ++i)
        dense.emplace_back(rng.uniform(0, 0.4), rng.uniform(0, 0.4), rng.uniform(0, 0.4));

    auto median_sub_radius = [](const TetraMesh& mesh) {
        std::vector<double> radii;
        for (std::size_t t = 0; t < mesh.tetrahedra.size(); ++t) {
            const auto& tet = mesh.tetrahedra[t];
            Eigen::Vector3d c = (mesh.vertices[std::size_t(tet[0])] +
                                 mesh.vertices[std::size_t(tet[1])] +
                                 mesh.vertices[std::size_t(tet[2])] +
                                 mesh.vertices[std::size_t(tet[3])]) / 4.0;
            if ((c.array() >= 0.0).all() && (c.array() <= 0.4).all())
                radii.push_back(oracle::tet_circumradius(mesh, t));
        }
        REQUIRE(!radii.empty());
        std::sort(radii.begin(), radii.end());
        return radii[radii.size() / 2];
    };

    double before = median_sub_radius(delaunay_tetrahedralize(base));
    double after = median_sub_radius(delaunay_tetrahedralize(dense));
    CHECK(after < before);
}

TEST_CASE("duplicates merge at 1e-9 of the extent") {
    auto pts = random_cloud(20, 9);
    auto dup = pts;
    for (const auto& p : pts) dup.push_back(p + Eigen::Vector3d(1e-12, -1e-12, 0));
    TetraMesh a = delaunay_tetrahedralize(pts);
    TetraMesh b = delaunay_tetrahedralize(dup);
    CHECK(a.vertices.size() == b.vertices.size());
    CHECK(a.tetrahedra.size() == b.tetrahedra.size());
}

TEST_CASE("determinism: same input gives the same mesh") {
    auto pts = random_cloud(120, 55);
    TetraMesh a = delaunay_tetrahedralize(pts);
    TetraMesh b = delaunay_tetrahedralize(pts);
    CHECK(a.tetrahedra == b.tetrahedra);
    CHECK(a.faces == b.faces);
}
