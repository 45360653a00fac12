#include "ea3d/ply.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ea3d/error.hpp"

namespace ea3d {

namespace {

enum class PType { f32, f64, u8, i32, u32 };

std::size_t type_size(PType t) {
    switch (t) {
    case PType::f32: return 4;
    case PType::f64: return 8;
    case PType::u8: return 1;
    case PType::i32: return 4;
    case PType::u32: return 4;
    }
    return 0;
}

PType parse_type(const std::string& s) {
    if (s == "float" || s == "float32") return PType::f32;
    if (s == "double" || s == "float64") return PType::f64;
    if (s == "uchar" || s == "uint8") return PType::u8;
    if (s == "int" || s == "int32") return PType::i32;
    if (s == "uint" || s == "uint32") return PType::u32;
    throw Error(ErrorCode::parse_error, "unsupported PLY property type " + s);
}

struct PlyHeader {
    bool binary = false;
    std::size_t vertex_count = 0;
    std::vector<std::pair<std::string, PType>> properties;  // vertex element
    std::size_t data_offset = 0;
};

PlyHeader parse_header(const std::vector<char>& bytes,
                       const std::filesystem::path& path) {
    PlyHeader h;
    std::size_t pos = 0;
    auto next_line = [&]() {
        std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size())
            throw Error(ErrorCode::parse_error, path.string() + ": unterminated header");
        std::string line(bytes.begin() + long(start), bytes.begin() + long(pos));
        ++pos;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply")
        throw Error(ErrorCode::parse_error, path.string() + ": missing ply magic");

    bool in_vertex = false;
    bool format_seen = false;
    while (true) {
        std::string line = next_line();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment") continue;
        if (tok == "format") {
            std::string fmt, ver;
            ss >> fmt >> ver;
            if (fmt == "ascii")
                h.binary = false;
            else if (fmt == "binary_little_endian")
                h.binary = true;
            else
                throw Error(ErrorCode::parse_error,
                            path.string() + ": unsupported format " + fmt);
            format_seen = true;
        } else if (tok == "element") {
            std::string name;
            std::size_t count;
            ss >> name >> count;
            if (!ss) throw Error(ErrorCode::parse_error, path.string() + ": bad element");
            if (name == "vertex") {
                h.vertex_count = count;
                in_vertex = true;
            } else {
                if (count != 0)
                    throw Error(ErrorCode::parse_error,
                                path.string() + ": unsupported element " + name);
                in_vertex = false;
            }
        } else if (tok == "property") {
            std::string type, name;
            ss >> type >> name;
            if (type == "list")
                throw Error(ErrorCode::parse_error,
                            path.string() + ": list properties unsupported");
            if (in_vertex) h.properties.emplace_back(name, parse_type(type));
        } else if (tok == "end_header") {
            break;
        } else if (!tok.empty()) {
            throw Error(ErrorCode::parse_error,
                        path.string() + ": unknown header line '" + line + "'");
        }
    }
    if (!format_seen)
        throw Error(ErrorCode::parse_error, path.string() + ": missing format line");
    h.data_offset = pos;
    return h;
}

std::vector<char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open())
        throw Error(ErrorCode::not_found, "missing file: " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

/// All vertex properties as doubles, row per vertex.
struct PlyTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return int(i);
        return -1;
    }
};

PlyTable read_table(const std::filesystem::path& path) {
    std::vector<char> bytes = read_all(path);
    PlyHeader h = parse_header(bytes, path);

    PlyTable table;
    for (const auto& [name, type] : h.properties) table.names.push_back(name);
    table.rows.reserve(h.vertex_count);

    if (h.binary) {
        std::size_t row_bytes = 0;
        for (const auto& [name, type] : h.properties) row_bytes += type_size(type);
        if (bytes.size() - h.data_offset < row_bytes * h.vertex_count)
            throw Error(ErrorCode::length_mismatch,
                        path.string() + ": payload shorter than declared");
        const char* p = bytes.data() + h.data_offset;
        for (std::size_t v = 0; v < h.vertex_count; ++v) {
            std::vector<double> row;
            row.reserve(h.properties.size());
            for (const auto& [name, type] : h.properties) {
                double value = 0;
                switch (type) {
                case PType::f32: {
                    float f;
                    std::memcpy(&f, p, 4);
                    value = f;
                    break;
                }
                case PType::f64: {
                    double d;
                    std::memcpy(&d, p, 8);
                    value = d;
                    break;
                }
                case PType::u8: value = double(*reinterpret_cast<const unsigned char*>(p)); break;
                case PType::i32: {
                    std::int32_t i;
                    std::memcpy(&i, p, 4);
                    value = i;
                    break;
                }
                case PType::u32: {
                    std::uint32_t u;
                    std::memcpy(&u, p, 4);
                    value = u;
                    break;
                }
                }
                p += type_size(type);
                row.push_back(value);
            }
            table.rows.push_back(std::move(row));
        }
    } else {
        std::istringstream in(std::string(bytes.begin() + long(h.data_offset), bytes.end()));
        for (std::size_t v = 0; v < h.vertex_count; ++v) {
            std::vector<double> row(h.properties.size());
            for (std::size_t c = 0; c < h.properties.size(); ++c)
                if (!(in >> row[c]))
                    throw Error(ErrorCode::length_mismatch,
                                path.string() + ": truncated ascii payload");
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

void append_le(std::vector<char>& out, float v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

}  // namespace

PlyCloud read_ply_points(const std::filesystem::path& path) {
    PlyTable t = read_table(path);
    int x = t.column("x"), y = t.column("y"), z = t.column("z");
    if (x < 0 || y < 0 || z < 0)
        throw Error(ErrorCode::parse_error, path.string() + ": missing x/y/z");
    int nx = t.column("nx"), ny = t.column("ny"), nz = t.column("nz");
    int r = t.column("red"), g = t.column("green"), b = t.column("blue");

    PlyCloud cloud;
    for (const auto& row : t.rows) {
        cloud.positions.emplace_back(row[std::size_t(x)], row[std::size_t(y)],
                                     row[std::size_t(z)]);
        if (nx >= 0 && ny >= 0 && nz >= 0)
            cloud.normals.emplace_back(row[std::size_t(nx)], row[std::size_t(ny)],
                                       row[std::size_t(nz)]);
        if (r >= 0 && g >= 0 && b >= 0)
            cloud.colors.emplace_back(row[std::size_t(r)] / 255.0,
                                      row[std::size_t(g)] / 255.0,
                                      row[std::size_t(b)] / 255.0);
    }
    return cloud;
}

void write_ply_points(const std::filesystem::path& path, const PlyCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open())
        throw Error(ErrorCode::io_error, "cannot write " + path.string());
    bool colors = !cloud.colors.empty();
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << cloud.positions.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (colors)
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    std::vector<char> buf;
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        for (int c = 0; c < 3; ++c) append_le(buf, float(cloud.positions[i][c]));
        if (colors)
            for (int c = 0; c < 3; ++c)
                buf.push_back(char(std::clamp(int(cloud.colors[i][c] * 255.0 + 0.5), 0, 255)));
    }
    out.write(buf.data(), long(buf.size()));
}

SceneModel<float> read_ply_gaussians(const std::filesystem::path& path) {
    PlyTable t = read_table(path);
    int x = t.column("x"), y = t.column("y"), z = t.column("z");
    if (x < 0 || y < 0 || z < 0)
        throw Error(ErrorCode::parse_error, path.string() + ": missing x/y/z");

    int n_rest = 0;
    while (t.column("f_rest_" + std::to_string(n_rest)) >= 0) ++n_rest;
    if (n_rest % 3 != 0)
        throw Error(ErrorCode::parse_error, path.string() + ": f_rest count not 3k");
    int rest_per_channel = n_rest / 3;
    int n_coeffs = rest_per_channel + 1;
    int degree = int(std::round(std::sqrt(double(n_coeffs)))) - 1;
    if (sh_coeff_count(degree) != n_coeffs || degree > kMaxShDegree)
        throw Error(ErrorCode::parse_error,
                    path.string() + ": f_rest count does not match an SH degree");

    std::vector<int> dc(3), scale(3), rot(4);
    std::vector<int> rest(static_cast<std::size_t>(n_rest));
    for (int c = 0; c < 3; ++c) dc[std::size_t(c)] = t.column("f_dc_" + std::to_string(c));
    for (int i = 0; i < n_rest; ++i)
        rest[std::size_t(i)] = t.column("f_rest_" + std::to_string(i));
    for (int c = 0; c < 3; ++c)
        scale[std::size_t(c)] = t.column("scale_" + std::to_string(c));
    for (int c = 0; c < 4; ++c) rot[std::size_t(c)] = t.column("rot_" + std::to_string(c));
    int opacity = t.column("opacity");
    for (int c : dc)
        if (c < 0) throw Error(ErrorCode::parse_error, path.string() + ": missing f_dc");
    if (opacity < 0)
        throw Error(ErrorCode::parse_error, path.string() + ": missing opacity");
    for (int c : scale)
        if (c < 0) throw Error(ErrorCode::parse_error, path.string() + ": missing scale");
    for (int c : rot)
        if (c < 0) throw Error(ErrorCode::parse_error, path.string() + ": missing rot");

    SceneModel<float> scene;
    scene.sh_degree = degree;
    for (const auto& row : t.rows) {
        Gaussian<float> g;
        g.position = Eigen::Vector3f(float(row[std::size_t(x)]), float(row[std::size_t(y)]),
                                     float(row[std::size_t(z)]));
        g.sh = ShBlock<float>::Zero(n_coeffs, 3);
        for (int c = 0; c < 3; ++c) g.sh(0, c) = float(row[std::size_t(dc[std::size_t(c)])]);
        // f_rest layout: channel-major (all of channel R's coefficients first).
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < rest_per_channel; ++i)
                g.sh(i + 1, c) =
                    float(row[std::size_t(rest[std::size_t(c * rest_per_channel + i)])]);
        g.opacity_logit = float(row[std::size_t(opacity)]);
        g.log_scale =
            Eigen::Vector3f(float(row[std::size_t(scale[0])]), float(row[std::size_t(scale[1])]),
                            float(row[std::size_t(scale[2])]));
        g.rotation =
            Eigen::Vector4f(float(row[std::size_t(rot[0])]), float(row[std::size_t(rot[1])]),
                            float(row[std::size_t(rot[2])]), float(row[std::size_t(rot[3])]));
        scene.gaussians.push_back(std::move(g));
    }
    return scene;
}

void write_ply_gaussians(const std::filesystem::path& path,
                         const SceneModel<float>& scene) {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open())
        throw Error(ErrorCode::io_error, "cannot write " + path.string());
    const int n_coeffs = sh_coeff_count(scene.sh_degree);
    const int rest_per_channel = n_coeffs - 1;

    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << scene.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property float nx\nproperty float ny\nproperty float nz\n";
    for (int c = 0; c < 3; ++c) out << "property float f_dc_" << c << "\n";
    for (int i = 0; i < rest_per_channel * 3; ++i)
        out << "property float f_rest_" << i << "\n";
    out << "property float opacity\n";
    for (int c = 0; c < 3; ++c) out << "property float scale_" << c << "\n";
    for (int c = 0; c < 4; ++c) out << "property float rot_" << c << "\n";
    out << "end_header\n";

    std::vector<char> buf;
    for (const auto& g : scene.gaussians) {
        for (int c = 0; c < 3; ++c) append_le(buf, g.position[c]);
        for (int c = 0; c < 3; ++c) append_le(buf, 0.0f);  // normals
        for (int c = 0; c < 3; ++c) append_le(buf, g.sh(0, c));
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < rest_per_channel; ++i) append_le(buf, g.sh(i + 1, c));
        append_le(buf, g.opacity_logit);
        for (int c = 0; c < 3; ++c) append_le(buf, g.log_scale[c]);
        for (int c = 0; c < 4; ++c) append_le(buf, g.rotation[c]);
    }
    out.write(buf.data(), long(buf.size()));
}

}  // namespace ea3d
