#pragma once

#include <cstdint>
#include <vector>

#include "ea3d/error.hpp"

namespace ea3d {

/// Row-major interleaved image buffer.
template <class T>
struct Image {
    int height = 0, width = 0, channels = 0;
    std::vector<T> data;

    Image() = default;
    Image(int h, int w, int c, T fill = T(0))
        : height(h), width(w), channels(c),
          data(std::size_t(h) * std::size_t(w) * std::size_t(c), fill) {}

    T& at(int y, int x, int c = 0) {
        return data[(std::size_t(y) * std::size_t(width) + std::size_t(x)) *
                        std::size_t(channels) +
                    std::size_t(c)];
    }
    const T& at(int y, int x, int c = 0) const {
        return data[(std::size_t(y) * std::size_t(width) + std::size_t(x)) *
                        std::size_t(channels) +
                    std::size_t(c)];
    }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    template <class U>
    Image<U> cast() const {
        Image<U> out(height, width, channels);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
        return out;
    }
};

using ImageF = Image<float>;
using ImageD = Image<double>;

}  // namespace ea3d
