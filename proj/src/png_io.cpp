#include "ea3d/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "ea3d/error.hpp"
#include "ea3d/util.hpp"

namespace ea3d {

namespace {

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
}

std::uint32_t get_u32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_chunk(std::vector<unsigned char>& out, const char type[5],
                 const std::vector<unsigned char>& data) {
    put_u32(out, std::uint32_t(data.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uLong crc = crc32(0L, out.data() + crc_start, uInt(out.size() - crc_start));
    put_u32(out, std::uint32_t(crc));
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png_srgb(const std::filesystem::path& path, const Image<float>& linear) {
    if (linear.channels != 3)
        throw Error(ErrorCode::shape_mismatch, "PNG writer expects 3 channels");
    const int w = linear.width, h = linear.height;
    if (w < 1 || h < 1) throw Error(ErrorCode::empty_input, "empty image");

    // Filter 0 scanlines, sRGB transfer.
    std::vector<unsigned char> raw(std::size_t(h) * (std::size_t(w) * 3 + 1));
    std::size_t p = 0;
    for (int y = 0; y < h; ++y) {
        raw[p++] = 0;
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double s = srgb_encode(double(linear.at(y, x, c)));
                raw[p++] = (unsigned char)std::clamp(int(s * 255.0 + 0.5), 0, 255);
            }
    }

    uLongf comp_cap = compressBound(uLong(raw.size()));
    std::vector<unsigned char> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw Error(ErrorCode::io_error, "deflate failed");
    comp.resize(comp_cap);

    std::vector<unsigned char> out(kSignature, kSignature + 8);
    std::vector<unsigned char> ihdr;
    put_u32(ihdr, std::uint32_t(w));
    put_u32(ihdr, std::uint32_t(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    write_chunk(out, "IHDR", ihdr);
    write_chunk(out, "IDAT", comp);
    write_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f.is_open()) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), long(out.size()));
}

Image<float> read_png_linear(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f.is_open()) throw Error(ErrorCode::not_found, "missing file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw Error(ErrorCode::parse_error, path.string() + ": not a PNG");

    std::size_t pos = 8;
    std::uint32_t w = 0, h = 0;
    int channels = 0;
    std::vector<unsigned char> idat;
    bool saw_end = false;
    while (pos + 8 <= bytes.size()) {
        std::uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size())
            throw Error(ErrorCode::length_mismatch, path.string() + ": truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const unsigned char* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw Error(ErrorCode::parse_error, "bad IHDR");
            w = get_u32(data);
            h = get_u32(data + 4);
            int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8 || (color != 2 && color != 6) || interlace != 0)
                throw Error(ErrorCode::unsupported_model,
                            path.string() + ": only 8-bit RGB/RGBA supported");
            channels = color == 2 ? 3 : 4;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_end = true;
            break;
        }
        pos += 12 + len;
    }
    if (w == 0 || h == 0 || channels == 0 || !saw_end || idat.empty())
        throw Error(ErrorCode::parse_error, path.string() + ": incomplete PNG");
    if (w > (1u << 16) || h > (1u << 16))
        throw Error(ErrorCode::parse_error, path.string() + ": unreasonable dimensions");

    const std::size_t stride = std::size_t(w) * std::size_t(channels);
    std::vector<unsigned char> raw(std::size_t(h) * (stride + 1));
    uLongf raw_len = uLongf(raw.size());
    int zrc = uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size())
        throw Error(ErrorCode::length_mismatch, path.string() + ": bad IDAT stream");

    // Undo per-scanline filters.
    std::vector<unsigned char> pix(std::size_t(h) * stride);
    const int bpp = channels;
    for (std::uint32_t y = 0; y < h; ++y) {
        const unsigned char* src = raw.data() + std::size_t(y) * (stride + 1);
        unsigned char filter = src[0];
        const unsigned char* in = src + 1;
        unsigned char* cur = pix.data() + std::size_t(y) * stride;
        const unsigned char* up = y > 0 ? cur - stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= std::size_t(bpp) ? cur[i - std::size_t(bpp)] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= std::size_t(bpp)) ? up[i - std::size_t(bpp)] : 0;
            int v = in[i];
            switch (filter) {
            case 0: break;
            case 1: v += a; break;
            case 2: v += b; break;
            case 3: v += (a + b) / 2; break;
            case 4: v += paeth(a, b, c); break;
            default:
                throw Error(ErrorCode::parse_error, path.string() + ": bad filter");
            }
            cur[i] = (unsigned char)(v & 0xff);
        }
    }

    Image<float> img(int(h), int(w), 3);
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                unsigned char v =
                    pix[std::size_t(y) * stride + std::size_t(x) * std::size_t(channels) +
                        std::size_t(c)];
                img.at(int(y), int(x), c) = float(srgb_decode(double(v) / 255.0));
            }
    return img;
}

}  // namespace ea3d
