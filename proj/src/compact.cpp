#include "ea3d/compact.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "ea3d/error.hpp"
#include "ea3d/mesh_io.hpp"

namespace ea3d {

namespace {

constexpr char kMagic[4] = {'E', 'A', '3', 'D'};
constexpr std::size_t kHeaderBytes = 32;

struct Writer {
    std::vector<unsigned char> bytes;

    void pad8() {
        while (bytes.size() % 8 != 0) bytes.push_back(0);
    }
    template <class T>
    void put(T v) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        bytes.insert(bytes.end(), b, b + sizeof(T));
    }
    void put_floats(const float* p, std::size_t n) {
        const unsigned char* b = reinterpret_cast<const unsigned char*>(p);
        bytes.insert(bytes.end(), b, b + n * 4);
    }
};

struct Reader {
    const unsigned char* p;
    std::size_t size;
    std::size_t pos = 0;
    std::string name;

    void need(std::size_t n) const {
        if (pos + n > size)
            throw Error(ErrorCode::length_mismatch,
                        name + ": declared sizes exceed the file length");
    }
    void pad8() {
        std::size_t target = (pos + 7) & ~std::size_t(7);
        need(target - pos);
        pos = target;
    }
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    const unsigned char* take(std::size_t n) {
        need(n);
        const unsigned char* q = p + pos;
        pos += n;
        return q;
    }
};

void write_group(Writer& w, const Codebook& book, std::size_t n) {
    w.pad8();
    w.put<std::uint32_t>(book.k());
    w.put<std::uint32_t>(book.dim());
    w.put_floats(book.centroids.data(), std::size_t(book.centroids.size()));
    w.pad8();
    const bool wide = book.k() > 65536;
    for (std::size_t i = 0; i < n; ++i) {
        if (wide)
            w.put<std::uint32_t>(book.indices[i]);
        else
            w.put<std::uint16_t>(std::uint16_t(book.indices[i]));
    }
}

Codebook read_group(Reader& r, std::size_t n, const char* what) {
    r.pad8();
    Codebook book;
    std::uint32_t k = r.get<std::uint32_t>();
    std::uint32_t d = r.get<std::uint32_t>();
    if (std::uint64_t(k) * d > (std::uint64_t(1) << 32))
        throw Error(ErrorCode::length_mismatch,
                    r.name + ": codebook size beyond sanity cap");
    r.need(std::size_t(k) * d * 4);
    book.centroids.resize(k, d);
    std::memcpy(book.centroids.data(), r.take(std::size_t(k) * d * 4),
                std::size_t(k) * d * 4);
    r.pad8();
    const bool wide = k > 65536;
    book.indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t idx = wide ? r.get<std::uint32_t>() : r.get<std::uint16_t>();
        if (k > 0 && idx >= k)
            throw Error(ErrorCode::index_out_of_range,
                        r.name + ": " + what + " index " + std::to_string(idx) +
                            " out of range (K=" + std::to_string(k) + ")");
        book.indices[i] = idx;
    }
    return book;
}

}  // namespace

void save_compact(const std::filesystem::path& path, const SceneModel<float>& scene,
                  const CodebookSet* books) {
    const std::size_t n = scene.size();
    const bool anchored = scene.any_anchored();
    const bool has_mesh = bool(scene.mesh);
    if (anchored && !has_mesh)
        throw Error(ErrorCode::config_error, "anchored scene without a mesh");
    if (books &&
        (books->color_dc.indices.size() != n || books->scale.indices.size() != n ||
         books->rotation.indices.size() != n ||
         (books->sh_rest.dim() > 0 && books->sh_rest.indices.size() != n)))
        throw Error(ErrorCode::shape_mismatch, "codebooks not aligned with scene");

    Writer w;
    // Payload sections first; the header is prepended with the crc.
    for (const auto& g : scene.gaussians) w.put_floats(g.position.data(), 3);
    w.pad8();
    for (const auto& g : scene.gaussians) w.put<float>(g.opacity_logit);
    w.pad8();

    if (anchored) {
        for (const auto& g : scene.gaussians)
            w.put<std::uint32_t>(g.anchor ? std::uint32_t(g.anchor->face_id)
                                          : 0xffffffffu);
        w.pad8();
        for (const auto& g : scene.gaussians) {
            Eigen::Vector3f logits =
                g.anchor ? g.anchor->logits : Eigen::Vector3f::Zero();
            w.put_floats(logits.data(), 3);
        }
        w.pad8();
    }

    if (books) {
        write_group(w, books->color_dc, n);
        write_group(w, books->sh_rest, n);
        write_group(w, books->scale, n);
        write_group(w, books->rotation, n);
        w.pad8();
    } else {
        for (const auto& g : scene.gaussians) w.put_floats(g.rotation.data(), 4);
        w.pad8();
        for (const auto& g : scene.gaussians) w.put_floats(g.log_scale.data(), 3);
        w.pad8();
        const int n_coeffs = sh_coeff_count(scene.sh_degree);
        for (const auto& g : scene.gaussians)
            for (int r = 0; r < n_coeffs; ++r)
                for (int c = 0; c < 3; ++c) w.put<float>(g.sh(r, c));
        w.pad8();
    }

    if (has_mesh) {
        const TetraMesh& mesh = *scene.mesh;
        w.put<std::uint64_t>(mesh.vertices.size());
        w.put<std::uint64_t>(mesh.tetrahedra.size());
        for (const auto& v : mesh.vertices) {
            w.put<double>(v.x());
            w.put<double>(v.y());
            w.put<double>(v.z());
        }
        for (const auto& t : mesh.tetrahedra)
            for (int v : t) w.put<std::uint32_t>(std::uint32_t(v));
        w.pad8();
    }

    std::uint8_t flags = 0;
    if (books) flags |= kFlagQuantized;
    if (anchored) flags |= kFlagAnchored;
    if (has_mesh) flags |= kFlagMesh;
    if (books && (books->color_dc.k() > 65536 || books->sh_rest.k() > 65536 ||
                  books->scale.k() > 65536 || books->rotation.k() > 65536))
        flags |= kFlagWideIndices;

    // The crc covers the header (with the crc field zeroed) plus the whole
    // payload, so header corruption (e.g. the count) is detected too.
    Writer header;
    header.bytes.insert(header.bytes.end(), kMagic, kMagic + 4);
    header.put<std::uint32_t>(kCompactVersion);
    header.put<std::uint64_t>(n);
    header.put<std::uint8_t>(std::uint8_t(scene.sh_degree));
    header.put<std::uint8_t>(flags);
    header.put<std::uint16_t>(0);  // reserved
    const std::size_t crc_at = header.bytes.size();
    header.put<std::uint32_t>(0);  // crc placeholder
    header.put<std::uint64_t>(w.bytes.size());  // payload length
    uLong crc = crc32(0L, header.bytes.data(), uInt(header.bytes.size()));
    if (!w.bytes.empty()) crc = crc32(crc, w.bytes.data(), uInt(w.bytes.size()));
    std::uint32_t crc32_value = std::uint32_t(crc);
    std::memcpy(header.bytes.data() + crc_at, &crc32_value, 4);

    std::ofstream out(path, std::ios::binary);
    if (!out.is_open())
        throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(header.bytes.data()),
              long(header.bytes.size()));
    out.write(reinterpret_cast<const char*>(w.bytes.data()), long(w.bytes.size()));
}

LoadedModel load_compact(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open())
        throw Error(ErrorCode::not_found, "missing file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

    const std::string name = path.filename().string();
    if (bytes.size() < kHeaderBytes)
        throw Error(ErrorCode::length_mismatch, name + ": shorter than the header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(ErrorCode::bad_magic, name + ": bad magic");

    Reader r{bytes.data(), bytes.size(), 4, name};
    std::uint32_t version = r.get<std::uint32_t>();
    if (version != kCompactVersion)
        throw Error(ErrorCode::bad_version,
                    name + ": unsupported version " + std::to_string(version));
    std::uint64_t count = r.get<std::uint64_t>();
    std::uint8_t sh_degree = r.get<std::uint8_t>();
    std::uint8_t flags = r.get<std::uint8_t>();
    std::uint16_t reserved = r.get<std::uint16_t>();
    std::uint32_t crc_expected = r.get<std::uint32_t>();
    std::uint64_t payload_len = r.get<std::uint64_t>();

    if (flags & ~std::uint8_t(kFlagQuantized | kFlagAnchored | kFlagMesh |
                              kFlagWideIndices))
        throw Error(ErrorCode::bad_flags, name + ": unknown flag bits");
    if (reserved != 0)
        throw Error(ErrorCode::bad_flags, name + ": reserved bits set");
    if (sh_degree > kMaxShDegree)
        throw Error(ErrorCode::bad_flags, name + ": unsupported SH degree");
    if (count > (std::uint64_t(1) << 36))
        throw Error(ErrorCode::length_mismatch, name + ": count beyond sanity cap");
    if (bytes.size() != kHeaderBytes + payload_len)
        throw Error(ErrorCode::length_mismatch,
                    name + ": payload length mismatch (declared " +
                        std::to_string(payload_len) + ", actual " +
                        std::to_string(bytes.size() - kHeaderBytes) + ")");
    {
        // Header (crc field zeroed) plus payload.
        unsigned char head[kHeaderBytes];
        std::memcpy(head, bytes.data(), kHeaderBytes);
        std::memset(head + 20, 0, 4);
        uLong crc = crc32(0L, head, uInt(kHeaderBytes));
        if (payload_len > 0)
            crc = crc32(crc, bytes.data() + kHeaderBytes, uInt(payload_len));
        if (std::uint32_t(crc) != crc_expected)
            throw Error(ErrorCode::checksum_mismatch, name + ": crc mismatch");
    }
    // Every Gaussian takes at least 16 payload bytes (position + opacity);
    // reject impossible counts before any allocation.
    if (count * 16 > payload_len)
        throw Error(ErrorCode::length_mismatch,
                    name + ": count inconsistent with payload length");

    const bool quantized = flags & kFlagQuantized;
    const bool anchored = flags & kFlagAnchored;
    const bool has_mesh = flags & kFlagMesh;
    if (anchored && !has_mesh)
        throw Error(ErrorCode::bad_flags, name + ": anchored without a mesh block");

    const std::size_t n = std::size_t(count);
    LoadedModel out;
    out.quantized = quantized;
    out.scene.sh_degree = int(sh_degree);
    out.scene.gaussians.resize(n);
    const int n_coeffs = sh_coeff_count(int(sh_degree));
    for (auto& g : out.scene.gaussians) g.sh = ShBlock<float>::Zero(n_coeffs, 3);

    Reader body{bytes.data(), bytes.size(), kHeaderBytes, name};
    for (auto& g : out.scene.gaussians) {
        std::memcpy(g.position.data(), body.take(12), 12);
    }
    body.pad8();
    for (auto& g : out.scene.gaussians) g.opacity_logit = body.get<float>();
    body.pad8();

    std::vector<std::uint32_t> face_ids;
    if (anchored) {
        face_ids.resize(n);
        for (auto& f : face_ids) f = body.get<std::uint32_t>();
        body.pad8();
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Vector3f logits;
            std::memcpy(logits.data(), body.take(12), 12);
            if (face_ids[i] != 0xffffffffu) {
                Anchor<float> a;
                a.face_id = int(face_ids[i]);
                a.logits = logits;
                out.scene.gaussians[i].anchor = a;
            }
        }
        body.pad8();
    }

    if (quantized) {
        CodebookSet books;
        books.color_dc = read_group(body, n, "color-DC");
        books.sh_rest = read_group(body, n, "SH-rest");
        books.scale = read_group(body, n, "scale");
        books.rotation = read_group(body, n, "rotation");
        body.pad8();
        if (int(books.color_dc.dim()) != 3 && n > 0)
            throw Error(ErrorCode::length_mismatch, name + ": color-DC dim != 3");
        if (n > 0 && int(books.sh_rest.dim()) != (n_coeffs - 1) * 3)
            throw Error(ErrorCode::length_mismatch,
                        name + ": SH-rest dim inconsistent with SH degree");
        out.books = books;
        out.scene = reconstruct_scene(out.scene, books);
    } else {
        for (auto& g : out.scene.gaussians) std::memcpy(g.rotation.data(), body.take(16), 16);
        body.pad8();
        for (auto& g : out.scene.gaussians) std::memcpy(g.log_scale.data(), body.take(12), 12);
        body.pad8();
        for (auto& g : out.scene.gaussians)
            for (int rr = 0; rr < n_coeffs; ++rr)
                for (int c = 0; c < 3; ++c) g.sh(rr, c) = body.get<float>();
        body.pad8();
    }

    if (has_mesh) {
        std::uint64_t nv = body.get<std::uint64_t>();
        std::uint64_t nt = body.get<std::uint64_t>();
        if (nv > (std::uint64_t(1) << 32) || nt > (std::uint64_t(1) << 32))
            throw Error(ErrorCode::length_mismatch, name + ": mesh beyond sanity cap");
        body.need(std::size_t(nv) * 24 + std::size_t(nt) * 16);
        TetraMesh mesh;
        mesh.vertices.resize(std::size_t(nv));
        for (auto& v : mesh.vertices) {
            v.x() = body.get<double>();
            v.y() = body.get<double>();
            v.z() = body.get<double>();
        }
        mesh.tetrahedra.resize(std::size_t(nt));
        for (auto& t : mesh.tetrahedra)
            for (int& v : t) {
                std::uint32_t u = body.get<std::uint32_t>();
                if (u >= nv)
                    throw Error(ErrorCode::index_out_of_range,
                                name + ": tet vertex out of range");
                v = int(u);
            }
        body.pad8();
        rebuild_face_tables(mesh);
        for (const auto& g : out.scene.gaussians)
            if (g.anchor && std::size_t(g.anchor->face_id) >= mesh.faces.size())
                throw Error(ErrorCode::index_out_of_range,
                            name + ": anchor face id out of range");
        out.scene.mesh = std::make_shared<const TetraMesh>(std::move(mesh));
    }

    if (body.pos != bytes.size())
        throw Error(ErrorCode::length_mismatch, name + ": trailing bytes in payload");
    return out;
}

CompressionReport compression_report(const std::filesystem::path& raw_file,
                                     const std::filesystem::path& quantized_file) {
    std::error_code ec;
    auto raw_size = std::filesystem::file_size(raw_file, ec);
    if (ec) throw Error(ErrorCode::not_found, "missing file: " + raw_file.string());
    auto qt_size = std::filesystem::file_size(quantized_file, ec);
    if (ec)
        throw Error(ErrorCode::not_found, "missing file: " + quantized_file.string());

    LoadedModel quant = load_compact(quantized_file);

    CompressionReport report;
    report.raw_bytes = raw_size;
    report.quantized_bytes = qt_size;
    const std::size_t n = quant.scene.size();
    if (n == 0) {
        report.no_data = true;
        return report;
    }
    report.ratio = double(qt_size) / double(raw_size);

    report.group_bytes["positions"] = n * 12;
    report.group_bytes["opacity"] = n * 4;
    if (quant.books) {
        auto group = [&](const char* key, const Codebook& book) {
            std::uint64_t idx_w = book.k() > 65536 ? 4 : 2;
            report.group_bytes[key] =
                8 + std::uint64_t(book.k()) * book.dim() * 4 + n * idx_w;
        };
        group("codebook.color_dc", quant.books->color_dc);
        group("codebook.sh_rest", quant.books->sh_rest);
        group("codebook.scale", quant.books->scale);
        group("codebook.rotation", quant.books->rotation);
    }
    return report;
}

}  // namespace ea3d
