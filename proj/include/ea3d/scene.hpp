#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "ea3d/error.hpp"
#include "ea3d/sh.hpp"

namespace ea3d {

inline constexpr int kMaxShDegree = 3;
inline constexpr double kScaleFloor = 1e-6;  // keeps Sigma invertible

template <class S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <class S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S> using Vec4 = Eigen::Matrix<S, 4, 1>;
template <class S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <class S> using Mat3 = Eigen::Matrix<S, 3, 3>;
// SH coefficient block: one row per basis function, columns = RGB.
template <class S>
using ShBlock = Eigen::Matrix<S, Eigen::Dynamic, 3, Eigen::ColMajor, 16, 3>;

template <class S>
S sigmoid(S x) {
    return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                     : std::exp(x) / (S(1) + std::exp(x));
}

template <class S>
S logit(S p) {
    return std::log(p / (S(1) - p));
}

/// Barycentric anchoring of a splat to a mesh face. Weights are
/// softmax(logits), so the simplex constraint holds unconditionally.
template <class S>
struct Anchor {
    int face_id = -1;
    Vec3<S> logits = Vec3<S>::Zero();

    Vec3<S> weights() const {
        Vec3<S> w = (logits.array() - logits.maxCoeff()).exp();
        return w / w.sum();
    }

    /// Double-precision weights for position recomputation; softmax output
    /// sums to 1 within ~1e-16 regardless of the storage scalar.
    Eigen::Vector3d weights_double() const {
        Eigen::Vector3d l = logits.template cast<double>();
        Eigen::Vector3d w = (l.array() - l.maxCoeff()).exp();
        return w / w.sum();
    }
};

/// One splat primitive. Stored parameters are raw (pre-activation); the
/// activated accessors apply normalize/exp/sigmoid.
template <class S>
struct Gaussian {
    Vec3<S> position = Vec3<S>::Zero();
    Vec4<S> rotation = Vec4<S>(S(1), S(0), S(0), S(0));  // (w,x,y,z), raw
    Vec3<S> log_scale = Vec3<S>::Zero();
    S opacity_logit = S(0);
    ShBlock<S> sh;  // (L+1)^2 x 3
    std::optional<Anchor<S>> anchor;

    Vec4<S> unit_rotation() const {
        S n = rotation.norm();
        return n > S(0) ? Vec4<S>(rotation / n) : Vec4<S>(S(1), S(0), S(0), S(0));
    }

    Vec3<S> scale() const {
        return log_scale.array().exp().max(S(kScaleFloor)).matrix();
    }

    S opacity() const {
        // sigmoid saturates to exactly 0/1 in finite precision for extreme
        // logits; pin the result to the open interval.
        S o = sigmoid(opacity_logit);
        const S lo = std::numeric_limits<S>::min();
        const S hi = std::nextafter(S(1), S(0));
        return std::clamp(o, lo, hi);
    }
};

/// Rotation matrix from a unit quaternion (w,x,y,z).
template <class S>
Mat3<S> quat_to_matrix(const Vec4<S>& q) {
    const S w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3<S> r;
    r << S(1) - S(2) * (y * y + z * z), S(2) * (x * y - w * z), S(2) * (x * z + w * y),
         S(2) * (x * y + w * z), S(1) - S(2) * (x * x + z * z), S(2) * (y * z - w * x),
         S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y);
    return r;
}

/// Sigma = R S S^T R^T with R from the normalized quaternion and
/// S = diag(exp(log_scale)).
template <class S>
Mat3<S> covariance(const Gaussian<S>& g) {
    Mat3<S> r = quat_to_matrix(g.unit_rotation());
    Mat3<S> m = r * g.scale().asDiagonal();
    return m * m.transpose();
}

/// exp(-1/2 (x-mu)^T Sigma^{-1} (x-mu)). Throws degenerate_covariance when
/// the conditioning makes the inverse meaningless.
template <class S>
S evaluate_gaussian(const Gaussian<S>& g, const Vec3<S>& x) {
    Vec3<S> s = g.scale();
    S cond = (s.maxCoeff() * s.maxCoeff()) / (s.minCoeff() * s.minCoeff());
    if (!std::isfinite(cond) || cond > S(1e18))
        throw Error(ErrorCode::degenerate_covariance,
                    "covariance condition number above cap");
    Mat3<S> sigma = covariance(g);
    Vec3<S> chi = x - g.position;
    S q = chi.dot(sigma.llt().solve(chi));
    return std::exp(S(-0.5) * q);
}

/// View-dependent color: 0.5 + sum c_lm Y_lm(dir), clamped to >= 0.
template <class S>
Vec3<S> evaluate_sh(const ShBlock<S>& sh, const Vec3<S>& view_dir, int degree) {
    const int n = sh_coeff_count(degree);
    if (sh.rows() != n)
        throw Error(ErrorCode::shape_mismatch,
                    "SH block has " + std::to_string(sh.rows()) +
                        " coefficients, degree " + std::to_string(degree) +
                        " needs " + std::to_string(n));
    S basis[16];
    sh_basis(view_dir, degree, basis);
    Vec3<S> rgb = Vec3<S>::Constant(S(0.5));
    for (int i = 0; i < n; ++i) rgb += basis[i] * sh.row(i).transpose();
    return rgb.cwiseMax(S(0));
}

/// Pinhole camera with a rigid world-to-camera transform.
template <class S>
struct Camera {
    S fx = S(1), fy = S(1), cx = S(0), cy = S(0);
    int width = 1, height = 1;
    Mat3<S> rotation = Mat3<S>::Identity();   // world-to-camera
    Vec3<S> translation = Vec3<S>::Zero();

    Vec3<S> to_camera(const Vec3<S>& p_world) const {
        return rotation * p_world + translation;
    }

    Vec3<S> center() const { return -(rotation.transpose() * translation); }

    bool valid(S tol = S(1e-6)) const {
        if (!(fx > S(0)) || !(fy > S(0)) || width < 1 || height < 1) return false;
        Mat3<S> rtr = rotation.transpose() * rotation;
        return (rtr - Mat3<S>::Identity()).template lpNorm<Eigen::Infinity>() < tol &&
               std::abs(rotation.determinant() - S(1)) < tol;
    }

    template <class T>
    Camera<T> cast() const {
        Camera<T> c;
        c.fx = T(fx); c.fy = T(fy); c.cx = T(cx); c.cy = T(cy);
        c.width = width; c.height = height;
        c.rotation = rotation.template cast<T>();
        c.translation = translation.template cast<T>();
        return c;
    }
};

struct TetraMesh;  // tetra.hpp

/// Gaussian collection plus the optional anchoring mesh.
template <class S>
struct SceneModel {
    std::vector<Gaussian<S>> gaussians;
    std::shared_ptr<const TetraMesh> mesh;  // present iff any splat is anchored
    int sh_degree = kMaxShDegree;

    std::size_t size() const { return gaussians.size(); }

    bool any_anchored() const {
        for (const auto& g : gaussians)
            if (g.anchor) return true;
        return false;
    }

    template <class T>
    SceneModel<T> cast() const {
        SceneModel<T> out;
        out.sh_degree = sh_degree;
        out.mesh = mesh;
        out.gaussians.reserve(gaussians.size());
        for (const auto& g : gaussians) {
            Gaussian<T> h;
            h.position = g.position.template cast<T>();
            h.rotation = g.rotation.template cast<T>();
            h.log_scale = g.log_scale.template cast<T>();
            h.opacity_logit = T(g.opacity_logit);
            h.sh = g.sh.template cast<T>();
            if (g.anchor) {
                Anchor<T> a;
                a.face_id = g.anchor->face_id;
                a.logits = g.anchor->logits.template cast<T>();
                h.anchor = a;
            }
            out.gaussians.push_back(std::move(h));
        }
        return out;
    }
};

using Gaussianf = Gaussian<float>;
using Gaussiand = Gaussian<double>;
using Cameraf = Camera<float>;
using Camerad = Camera<double>;
using SceneModelf = SceneModel<float>;
using SceneModeld = SceneModel<double>;

}  // namespace ea3d
