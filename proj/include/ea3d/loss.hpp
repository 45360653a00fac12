#pragma once

#include "ea3d/image.hpp"
#include "ea3d/metrics.hpp"

namespace ea3d {

template <class S>
struct LossResult {
    double loss = 0;
    double l1 = 0;
    double ssim_value = 0;
    Image<S> grad;  // dloss / d(rendered)
};

/// (1-lambda)*L1 + lambda*(1-SSIM) with analytic pixel gradients.
template <class S>
LossResult<S> photometric_loss(const Image<S>& rendered, const Image<S>& target,
                               double lambda) {
    check_same_shape(rendered, target);
    if (rendered.data.empty()) throw Error(ErrorCode::empty_input, "empty image");

    LossResult<S> out;
    out.grad = Image<S>(rendered.height, rendered.width, rendered.channels);

    const double inv_n = 1.0 / double(rendered.data.size());
    double l1 = 0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = double(rendered.data[i]) - double(target.data[i]);
        l1 += std::abs(d);
        const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        out.grad.data[i] = S((1.0 - lambda) * sign * inv_n);
    }
    out.l1 = l1 * inv_n;

    if (lambda != 0.0) {
        Image<S> ssim_grad;
        out.ssim_value = ssim(rendered, target, &ssim_grad);
        for (std::size_t i = 0; i < out.grad.data.size(); ++i)
            out.grad.data[i] -= S(lambda) * ssim_grad.data[i];
    } else {
        out.ssim_value = 0.0;
    }

    out.loss = (1.0 - lambda) * out.l1 + lambda * (1.0 - out.ssim_value);
    return out;
}

}  // namespace ea3d
