#include "ea3d/mesh_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ea3d/error.hpp"

namespace ea3d {

void rebuild_face_tables(TetraMesh& mesh) {
    mesh.faces.clear();
    mesh.face_of_tet.clear();
    std::map<std::array<int, 3>, int> ids;
    for (const auto& tet : mesh.tetrahedra) {
        std::array<int, 4> fids{};
        for (int i = 0; i < 4; ++i) {
            std::array<int, 3> tri{};
            int n = 0;
            for (int j = 0; j < 4; ++j)
                if (j != i) tri[std::size_t(n++)] = tet[std::size_t(j)];
            std::sort(tri.begin(), tri.end());
            auto it = ids.find(tri);
            if (it == ids.end()) {
                it = ids.emplace(tri, int(mesh.faces.size())).first;
                mesh.faces.push_back(tri);
            }
            fids[std::size_t(i)] = it->second;
        }
        mesh.face_of_tet.push_back(fids);
    }
}

void write_tetmesh_text(const std::filesystem::path& path, const TetraMesh& mesh) {
    std::ofstream out(path);
    if (!out.is_open())
        throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out << "tetmesh 1\n";
    out << "vertices " << mesh.vertices.size() << "\n";
    char buf[128];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    out << "tets " << mesh.tetrahedra.size() << "\n";
    for (const auto& t : mesh.tetrahedra)
        out << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
}

TetraMesh read_tetmesh_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.is_open())
        throw Error(ErrorCode::not_found, "missing file: " + path.string());
    auto fail = [&](const std::string& why) -> void {
        throw Error(ErrorCode::parse_error, path.string() + ": " + why);
    };

    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "tetmesh") fail("bad magic");
    if (version != 1) fail("unsupported version");

    std::string section;
    std::size_t n = 0;
    if (!(in >> section >> n) || section != "vertices") fail("expected vertices");
    if (n > (std::size_t(1) << 32)) fail("vertex count beyond sanity cap");
    TetraMesh mesh;
    mesh.vertices.resize(n);
    for (auto& v : mesh.vertices)
        if (!(in >> v.x() >> v.y() >> v.z())) fail("truncated vertex list");

    std::size_t m = 0;
    if (!(in >> section >> m) || section != "tets") fail("expected tets");
    if (m > (std::size_t(1) << 32)) fail("tet count beyond sanity cap");
    mesh.tetrahedra.resize(m);
    for (auto& t : mesh.tetrahedra) {
        if (!(in >> t[0] >> t[1] >> t[2] >> t[3])) fail("truncated tet list");
        for (int v : t)
            if (v < 0 || std::size_t(v) >= mesh.vertices.size())
                throw Error(ErrorCode::index_out_of_range,
                            path.string() + ": tet vertex out of range");
    }

    rebuild_face_tables(mesh);
    return mesh;
}

}  // namespace ea3d
