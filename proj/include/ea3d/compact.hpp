#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "ea3d/scene.hpp"
#include "ea3d/vq.hpp"

namespace ea3d {

// CompactModel container (see docs/compact_format.md, which is normative).
// Little-endian, 8-byte aligned sections, crc32 of the payload in the
// header so corruption is always detectable.

inline constexpr std::uint32_t kCompactVersion = 1;

enum CompactFlags : std::uint8_t {
    kFlagQuantized = 1 << 0,
    kFlagAnchored = 1 << 1,
    kFlagMesh = 1 << 2,
    kFlagWideIndices = 1 << 3,  // some group uses u32 indices
};

struct LoadedModel {
    SceneModel<float> scene;  // quantized models come back reconstructed
    bool quantized = false;
    std::optional<CodebookSet> books;
};

/// Writes a raw model, or a quantized one when books are given (the scene
/// then supplies positions/opacities/anchors/mesh and the SH degree).
void save_compact(const std::filesystem::path& path, const SceneModel<float>& scene,
                  const CodebookSet* books = nullptr);

/// Validates magic/version/flags/crc and every declared length before
/// trusting any size field. Throws bad_magic, bad_version, bad_flags,
/// length_mismatch, index_out_of_range, or checksum_mismatch.
LoadedModel load_compact(const std::filesystem::path& path);

struct CompressionReport {
    std::uint64_t raw_bytes = 0;
    std::uint64_t quantized_bytes = 0;
    double ratio = 0.0;            // quantized / raw
    std::map<std::string, std::uint64_t> group_bytes;
    bool no_data = false;          // empty scene: ratio undefined
};

/// Exact byte accounting of two serialized artifacts.
CompressionReport compression_report(const std::filesystem::path& raw_file,
                                     const std::filesystem::path& quantized_file);

}  // namespace ea3d
