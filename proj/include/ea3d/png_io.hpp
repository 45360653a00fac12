#pragma once

#include <filesystem>

#include "ea3d/image.hpp"

namespace ea3d {

/// Decodes an 8-bit RGB/RGBA PNG and linearizes with the sRGB transfer
/// function. Alpha, if present, is dropped.
Image<float> read_png_linear(const std::filesystem::path& path);

/// sRGB-encodes a linear [0,1] RGB image and writes an 8-bit PNG.
void write_png_srgb(const std::filesystem::path& path, const Image<float>& linear);

}  // namespace ea3d
