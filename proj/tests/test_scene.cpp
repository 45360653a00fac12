#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ea3d/scene.hpp"
#include "ea3d/util.hpp"

using namespace ea3d;

namespace {

Gaussiand make_gaussian(const Eigen::Vector4d& rot, const Eigen::Vector3d& log_scale) {
    Gaussiand g;
    g.rotation = rot;
    g.log_scale = log_scale;
    g.sh = ShBlock<double>::Zero(16, 3);
    return g;
}

}  // namespace

TEST_CASE("covariance: identity rotation, unit scale") {
    auto g = make_gaussian({1, 0, 0, 0}, {0, 0, 0});
    CHECK((covariance(g) - Eigen::Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("covariance: identity rotation, scaled x") {
    auto g = make_gaussian({1, 0, 0, 0}, {std::log(2.0), 0, 0});
    Eigen::Matrix3d expect = Eigen::Vector3d(4, 1, 1).asDiagonal();
    CHECK((covariance(g) - expect).norm() < 1e-12);
}

TEST_CASE("covariance: 90 degree z rotation moves the long axis") {
    double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
    auto g = make_gaussian({c, 0, 0, s}, {std::log(2.0), 0, 0});
    // Oracle: build R*S*S^T*R^T with Eigen directly.
    Eigen::Matrix3d r = Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()).matrix();
    Eigen::Matrix3d ss = Eigen::Vector3d(4, 1, 1).asDiagonal();
    Eigen::Matrix3d expect = r * ss * r.transpose();
    CHECK((covariance(g) - expect).norm() < 1e-12);
    CHECK(std::abs(covariance(g)(1, 1) - 4.0) < 1e-12);
}

TEST_CASE("covariance: unnormalized quaternion is normalized internally") {
    auto g = make_gaussian({2, 0, 0, 0}, {0.5, -0.25, 0});
    auto h = make_gaussian({1, 0, 0, 0}, {0.5, -0.25, 0});
    CHECK((covariance(g) - covariance(h)).norm() < 1e-12);
}

TEST_CASE("covariance round-trip: eigenvalues recover exp(2s)") {
    SplitMix64 rng(41);
    for (int trial = 0; trial < 1000; ++trial) {
        Eigen::Vector4d q;
        for (int i = 0; i < 4; ++i) q[i] = rng.uniform(-1, 1);
        if (q.norm() < 1e-3) q = Eigen::Vector4d(1, 0, 0, 0);
        Eigen::Vector3d ls;
        for (int i = 0; i < 3; ++i) ls[i] = rng.uniform(-2, 2);
        auto g = make_gaussian(q, ls);

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(covariance(g));
        Eigen::Vector3d got = es.eigenvalues();
        Eigen::Vector3d expect = (2.0 * ls.array()).exp();
        std::sort(expect.data(), expect.data() + 3);
        CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-9 * expect.maxCoeff());
    }
}

TEST_CASE("evaluate_gaussian basics") {
    auto g = make_gaussian({1, 0, 0, 0}, {0, 0, 0});
    g.position = Eigen::Vector3d(0.3, -0.7, 2.0);

    CHECK(evaluate_gaussian(g, g.position) == doctest::Approx(1.0));
    CHECK(evaluate_gaussian(g, Eigen::Vector3d(g.position + Eigen::Vector3d(1, 0, 0))) ==
          doctest::Approx(std::exp(-0.5)));

    auto g2 = make_gaussian({1, 0, 0, 0}, {std::log(2.0), 0, 0});
    CHECK(evaluate_gaussian(g2, Eigen::Vector3d(2, 0, 0)) ==
          doctest::Approx(std::exp(-0.5)));  // quadratic form 4/4 = 1
}

TEST_CASE("evaluate_gaussian: rigid invariance") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::Vector4d q;
        for (int i = 0; i < 4; ++i) q[i] = rng.uniform(-1, 1);
        q.normalize();
        Eigen::Vector3d ls(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        auto g = make_gaussian(q, ls);
        g.position = Eigen::Vector3d(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        Eigen::Vector3d x(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        double base = evaluate_gaussian(g, x);

        // Random rigid transform applied to (mu, r) and x together.
        Eigen::Vector4d rq(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                           rng.uniform(-1, 1));
        rq.normalize();
        Eigen::Matrix3d R = quat_to_matrix<double>(rq);
        Eigen::Vector3d t(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));

        Gaussiand h = g;
        h.position = R * g.position + t;
        Eigen::Quaterniond qr(R);
        Eigen::Quaterniond qg(q[0], q[1], q[2], q[3]);
        Eigen::Quaterniond qc = qr * qg;
        h.rotation = Eigen::Vector4d(qc.w(), qc.x(), qc.y(), qc.z());
        double moved = evaluate_gaussian(h, Eigen::Vector3d(R * x + t));
        CHECK(moved == doctest::Approx(base).epsilon(1e-9));
    }
}

TEST_CASE("evaluate_gaussian: degenerate covariance reported") {
    auto g = make_gaussian({1, 0, 0, 0}, {std::log(1e-7), 20.0, 0});
    CHECK_THROWS_WITH_AS(evaluate_gaussian(g, Eigen::Vector3d(1, 1, 1)),
                         doctest::Contains("condition"), Error);
}

TEST_CASE("evaluate_sh: DC-only matches the offset convention") {
    ShBlock<double> sh = ShBlock<double>::Zero(1, 3);
    sh(0, 0) = 1.0 / shc::C0;
    Eigen::Vector3d dir(0, 0, 1);
    Eigen::Vector3d rgb = evaluate_sh(sh, dir, 0);
    CHECK(rgb.x() == doctest::Approx(1.5));
    CHECK(rgb.y() == doctest::Approx(0.5));
    CHECK(rgb.z() == doctest::Approx(0.5));
}

TEST_CASE("evaluate_sh: all-zero coefficients give the plain offset") {
    ShBlock<double> sh = ShBlock<double>::Zero(16, 3);
    Eigen::Vector3d rgb = evaluate_sh(sh, Eigen::Vector3d(1, 0, 0), 3);
    CHECK((rgb - Eigen::Vector3d(0.5, 0.5, 0.5)).norm() < 1e-12);
}

TEST_CASE("evaluate_sh: degree-1 terms flip sign with direction") {
    SplitMix64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        ShBlock<double> sh = ShBlock<double>::Zero(4, 3);
        for (int i = 1; i < 4; ++i)
            for (int c = 0; c < 3; ++c) sh(i, c) = rng.uniform(-0.2, 0.2);
        Eigen::Vector3d dir(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        dir.normalize();
        Eigen::Vector3d a = evaluate_sh(sh, dir, 1) - Eigen::Vector3d::Constant(0.5);
        Eigen::Vector3d b = evaluate_sh(sh, Eigen::Vector3d(-dir), 1) -
                            Eigen::Vector3d::Constant(0.5);
        CHECK((a + b).norm() < 1e-12);  // odd parity (clamp not hit at these scales)
    }
}

TEST_CASE("evaluate_sh: degree 0 is direction independent") {
    ShBlock<double> sh = ShBlock<double>::Zero(1, 3);
    sh(0, 0) = 0.3;
    sh(0, 1) = -0.1;
    sh(0, 2) = 0.9;
    SplitMix64 rng(11);
    Eigen::Vector3d first = evaluate_sh(sh, Eigen::Vector3d(0, 0, 1), 0);
    for (int trial = 0; trial < 1000; ++trial) {
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        CHECK((evaluate_sh(sh, dir, 0) - first).norm() == 0.0);
    }
}

TEST_CASE("evaluate_sh: coefficient count mismatch is a shape error") {
    ShBlock<double> sh = ShBlock<double>::Zero(9, 3);
    CHECK_THROWS_AS((void)evaluate_sh(sh, Eigen::Vector3d(0, 0, 1), 3), Error);
}

TEST_CASE("anchor weights form a simplex point") {
    Anchor<float> a;
    a.logits = Eigen::Vector3f(0.7f, -2.0f, 1.3f);
    Eigen::Vector3d w = a.weights_double();
    CHECK(w.minCoeff() > 0.0);
    CHECK(std::abs(w.sum() - 1.0) < 1e-15);
}

TEST_CASE("activation invariants hold for raw parameters") {
    SplitMix64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        Gaussianf g;
        g.rotation = Eigen::Vector4f(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)),
                                     float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)));
        if (g.rotation.norm() < 1e-3f) g.rotation = Eigen::Vector4f(1, 0, 0, 0);
        g.log_scale = Eigen::Vector3f(float(rng.uniform(-30, 3)), float(rng.uniform(-30, 3)),
                                      float(rng.uniform(-30, 3)));
        g.opacity_logit = float(rng.uniform(-20, 20));
        CHECK(std::abs(g.unit_rotation().norm() - 1.0f) < 1e-6f);
        CHECK(g.scale().minCoeff() > 0.0f);
        CHECK(g.opacity() > 0.0f);
        CHECK(g.opacity() < 1.0f);
    }
}
