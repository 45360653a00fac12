#pragma once

#include <cmath>
#include <vector>

#include "ea3d/error.hpp"
#include "ea3d/image.hpp"

namespace ea3d {

inline constexpr double kPsnrCap = 99.0;  // reported for identical images

template <class S>
void check_same_shape(const Image<S>& a, const Image<S>& b) {
    if (!a.same_shape(b))
        throw Error(ErrorCode::shape_mismatch, "image dimensions differ");
}

/// 10*log10(1/MSE) on [0,1] images, capped at 99 dB.
template <class S>
double psnr(const Image<S>& a, const Image<S>& b) {
    check_same_shape(a, b);
    if (a.data.empty()) throw Error(ErrorCode::empty_input, "empty image");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = double(a.data[i]) - double(b.data[i]);
        mse += d * d;
    }
    mse /= double(a.data.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Normalized 1D Gaussian window (default 11 taps, sigma 1.5).
inline std::vector<double> gaussian_window(int size = 11, double sigma = 1.5) {
    std::vector<double> w(static_cast<std::size_t>(size));
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        double d = double(i) - double(size - 1) / 2.0;
        w[std::size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[std::size_t(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

namespace detail {

// Valid-mode separable filtering of one channel plane (doubles).
struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    double& at(int y, int x) { return v[std::size_t(y) * std::size_t(w) + std::size_t(x)]; }
    double at(int y, int x) const {
        return v[std::size_t(y) * std::size_t(w) + std::size_t(x)];
    }
};

inline Plane filter_valid(const Plane& in, const std::vector<double>& k) {
    const int n = int(k.size());
    Plane tmp{in.h, in.w - n + 1, {}};
    tmp.v.assign(std::size_t(tmp.h) * std::size_t(tmp.w), 0.0);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * in.at(y, x + i);
            tmp.at(y, x) = s;
        }
    Plane out{in.h - n + 1, tmp.w, {}};
    out.v.assign(std::size_t(out.h) * std::size_t(out.w), 0.0);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[std::size_t(i)] * tmp.at(y + i, x);
            out.at(y, x) = s;
        }
    return out;
}

// Adjoint of filter_valid: scatter a (H-n+1)x(W-n+1) map back to H x W.
inline Plane scatter_valid(const Plane& map, int out_h, int out_w,
                           const std::vector<double>& k) {
    const int n = int(k.size());
    Plane tmp{out_h, map.w, {}};
    tmp.v.assign(std::size_t(out_h) * std::size_t(map.w), 0.0);
    for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x) {
            const double m = map.at(y, x);
            if (m == 0.0) continue;
            for (int i = 0; i < n; ++i) tmp.at(y + i, x) += k[std::size_t(i)] * m;
        }
    Plane out{out_h, out_w, {}};
    out.v.assign(std::size_t(out_h) * std::size_t(out_w), 0.0);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            const double m = tmp.at(y, x);
            if (m == 0.0) continue;
            for (int i = 0; i < n; ++i) out.at(y, x + i) += k[std::size_t(i)] * m;
        }
    return out;
}

template <class S>
Plane channel_plane(const Image<S>& img, int c) {
    Plane p{img.height, img.width, {}};
    p.v.resize(std::size_t(img.height) * std::size_t(img.width));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) p.at(y, x) = double(img.at(y, x, c));
    return p;
}

}  // namespace detail

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over channels, 11x11 Gaussian window (sigma 1.5), valid
/// windows only, C1=(0.01)^2, C2=(0.03)^2 on [0,1] images. Optionally
/// accumulates d(meanSSIM)/d(a) into grad_a (same shape as a).
template <class S>
double ssim(const Image<S>& a, const Image<S>& b, Image<S>* grad_a = nullptr) {
    check_same_shape(a, b);
    if (a.data.empty()) throw Error(ErrorCode::empty_input, "empty image");
    // Largest odd window <= min(11, image dims).
    int win = std::min({11, a.height, a.width});
    if (win % 2 == 0) --win;
    win = std::max(win, 1);
    const auto kern = gaussian_window(win, 1.5);
    if (grad_a) {
        *grad_a = Image<S>(a.height, a.width, a.channels);
    }

    using detail::Plane;
    double total = 0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels; ++c) {
        Plane x = detail::channel_plane(a, c);
        Plane y = detail::channel_plane(b, c);
        Plane x2 = x, y2 = y, xy = x;
        for (std::size_t i = 0; i < x.v.size(); ++i) {
            x2.v[i] = x.v[i] * x.v[i];
            y2.v[i] = y.v[i] * y.v[i];
            xy.v[i] = x.v[i] * y.v[i];
        }
        Plane mx = detail::filter_valid(x, kern);
        Plane my = detail::filter_valid(y, kern);
        Plane ex2 = detail::filter_valid(x2, kern);
        Plane ey2 = detail::filter_valid(y2, kern);
        Plane exy = detail::filter_valid(xy, kern);

        Plane g_m = mx, g_ex2 = mx, g_exy = mx;  // shape copies
        for (int py = 0; py < mx.h; ++py)
            for (int px = 0; px < mx.w; ++px) {
                const double ux = mx.at(py, px), uy = my.at(py, px);
                const double sx2 = ex2.at(py, px) - ux * ux;
                const double sy2 = ey2.at(py, px) - uy * uy;
                const double sxy = exy.at(py, px) - ux * uy;
                const double a1 = 2 * ux * uy + kSsimC1;
                const double a2 = 2 * sxy + kSsimC2;
                const double b1 = ux * ux + uy * uy + kSsimC1;
                const double b2 = sx2 + sy2 + kSsimC2;
                const double d = b1 * b2;
                const double s = (a1 * a2) / d;
                total += s;
                ++count;
                if (grad_a) {
                    if (a1 == b1 && a2 == b2) {
                        // Identical window statistics: S is at its maximum
                        // and the analytic gradient is exactly zero. Writing
                        // the cancellation residue instead would let an
                        // adaptive optimizer amplify pure noise.
                        g_m.at(py, px) = 0.0;
                        g_ex2.at(py, px) = 0.0;
                        g_exy.at(py, px) = 0.0;
                    } else {
                        const double ds_dmu = 2 * (uy * a2 - s * ux * b2) / d;
                        const double ds_dsx2 = -s / b2;
                        const double ds_dsxy = 2 * a1 / d;
                        g_m.at(py, px) =
                            ds_dmu + ds_dsx2 * (-2 * ux) + ds_dsxy * (-uy);
                        g_ex2.at(py, px) = ds_dsx2;
                        g_exy.at(py, px) = ds_dsxy;
                    }
                }
            }

        if (grad_a) {
            Plane sm = detail::scatter_valid(g_m, a.height, a.width, kern);
            Plane se = detail::scatter_valid(g_ex2, a.height, a.width, kern);
            Plane sx = detail::scatter_valid(g_exy, a.height, a.width, kern);
            for (int py = 0; py < a.height; ++py)
                for (int px = 0; px < a.width; ++px)
                    grad_a->at(py, px, c) +=
                        S(sm.at(py, px) + 2 * x.at(py, px) * se.at(py, px) +
                          y.at(py, px) * sx.at(py, px));
        }
    }

    const double mean = total / double(count);
    if (grad_a) {
        // Convert accumulated dS-sums to d(mean)/da.
        const S inv = S(1.0 / double(count));
        for (auto& v : grad_a->data) v *= inv;
    }
    return mean;
}

}  // namespace ea3d
