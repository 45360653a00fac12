#pragma once

#include <Eigen/Core>

#include "ea3d/error.hpp"

namespace ea3d {

// Real spherical harmonics basis, degrees 0..3, in the ordering used by the
// common splatting checkpoint layout (f_dc / f_rest interchange relies on it).
namespace shc {
inline constexpr double C0 = 0.28209479177387814;
inline constexpr double C1 = 0.4886025119029199;
inline constexpr double C2[5] = {1.0925484305920792, -1.0925484305920792,
                                 0.31539156525252005, -1.0925484305920792,
                                 0.5462742152960396};
inline constexpr double C3[7] = {-0.5900435899266435, 2.890611442640554,
                                 -0.4570457994644658, 0.3731763325901154,
                                 -0.4570457994644658, 1.445305721320277,
                                 -0.5900435899266435};
}  // namespace shc

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Basis values Y_lm(dir) for degree <= 3. dir must be unit length.
/// out must hold (degree+1)^2 entries.
template <class S>
void sh_basis(const Eigen::Matrix<S, 3, 1>& dir, int degree, S* out) {
    const S x = dir.x(), y = dir.y(), z = dir.z();
    out[0] = S(shc::C0);
    if (degree < 1) return;
    out[1] = S(-shc::C1) * y;
    out[2] = S(shc::C1) * z;
    out[3] = S(-shc::C1) * x;
    if (degree < 2) return;
    const S xx = x * x, yy = y * y, zz = z * z;
    const S xy = x * y, yz = y * z, xz = x * z;
    out[4] = S(shc::C2[0]) * xy;
    out[5] = S(shc::C2[1]) * yz;
    out[6] = S(shc::C2[2]) * (S(2) * zz - xx - yy);
    out[7] = S(shc::C2[3]) * xz;
    out[8] = S(shc::C2[4]) * (xx - yy);
    if (degree < 3) return;
    out[9] = S(shc::C3[0]) * y * (S(3) * xx - yy);
    out[10] = S(shc::C3[1]) * xy * z;
    out[11] = S(shc::C3[2]) * y * (S(4) * zz - xx - yy);
    out[12] = S(shc::C3[3]) * z * (S(2) * zz - S(3) * xx - S(3) * yy);
    out[13] = S(shc::C3[4]) * x * (S(4) * zz - xx - yy);
    out[14] = S(shc::C3[5]) * z * (xx - yy);
    out[15] = S(shc::C3[6]) * x * (xx - S(3) * yy);
}

/// d(Y_lm)/d(dir), one 3-vector per basis function.
template <class S>
void sh_basis_grad(const Eigen::Matrix<S, 3, 1>& dir, int degree,
                   Eigen::Matrix<S, 3, 1>* out) {
    using V = Eigen::Matrix<S, 3, 1>;
    const S x = dir.x(), y = dir.y(), z = dir.z();
    out[0] = V::Zero();
    if (degree < 1) return;
    out[1] = V(S(0), S(-shc::C1), S(0));
    out[2] = V(S(0), S(0), S(shc::C1));
    out[3] = V(S(-shc::C1), S(0), S(0));
    if (degree < 2) return;
    out[4] = S(shc::C2[0]) * V(y, x, S(0));
    out[5] = S(shc::C2[1]) * V(S(0), z, y);
    out[6] = S(shc::C2[2]) * V(S(-2) * x, S(-2) * y, S(4) * z);
    out[7] = S(shc::C2[3]) * V(z, S(0), x);
    out[8] = S(shc::C2[4]) * V(S(2) * x, S(-2) * y, S(0));
    if (degree < 3) return;
    const S xx = x * x, yy = y * y, zz = z * z;
    out[9] = S(shc::C3[0]) * V(S(6) * x * y, S(3) * xx - S(3) * yy, S(0));
    out[10] = S(shc::C3[1]) * V(y * z, x * z, x * y);
    out[11] = S(shc::C3[2]) * V(S(-2) * x * y, S(4) * zz - xx - S(3) * yy, S(8) * y * z);
    out[12] = S(shc::C3[3]) * V(S(-6) * x * z, S(-6) * y * z, S(6) * zz - S(3) * xx - S(3) * yy);
    out[13] = S(shc::C3[4]) * V(S(4) * zz - S(3) * xx - yy, S(-2) * x * y, S(8) * x * z);
    out[14] = S(shc::C3[5]) * V(S(2) * x * z, S(-2) * y * z, xx - yy);
    out[15] = S(shc::C3[6]) * V(S(3) * xx - S(3) * yy, S(-6) * x * y, S(0));
}

}  // namespace ea3d
