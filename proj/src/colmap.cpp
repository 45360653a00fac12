#include "ea3d/colmap.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ea3d/error.hpp"

namespace ea3d {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

[[noreturn]] void bad_line(const std::filesystem::path& file, int line_no,
                           const std::string& why) {
    throw Error(ErrorCode::parse_error,
                file.filename().string() + ":" + std::to_string(line_no) + ": " + why);
}

double parse_double(const std::string& tok, const std::filesystem::path& file,
                    int line_no) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || tok.empty())
        bad_line(file, line_no, "malformed number '" + tok + "'");
    return v;
}

long parse_int(const std::string& tok, const std::filesystem::path& file, int line_no) {
    long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        bad_line(file, line_no, "malformed integer '" + tok + "'");
    return v;
}

struct LineReader {
    std::ifstream in;
    std::filesystem::path file;
    int line_no = 0;
    long declared_count = -1;

    explicit LineReader(const std::filesystem::path& p) : in(p), file(p) {
        if (!in.is_open())
            throw Error(ErrorCode::not_found, "missing file: " + p.string());
    }

    /// Next non-comment line; harvests "# Number of ...: N" declarations.
    bool next(std::string& line) {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty() && line[0] == '#') {
                auto pos = line.find("Number of");
                if (pos != std::string::npos) {
                    auto colon = line.find(':', pos);
                    if (colon != std::string::npos) {
                        auto fields = split_fields(line.substr(colon + 1));
                        if (!fields.empty()) {
                            char* end = nullptr;
                            long n = std::strtol(fields[0].c_str(), &end, 10);
                            if (end == fields[0].c_str() + fields[0].size())
                                declared_count = n;
                        }
                    }
                }
                continue;
            }
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            return true;
        }
        return false;
    }

    void check_count(long actual, const char* what) const {
        if (declared_count >= 0 && declared_count != actual)
            throw Error(ErrorCode::parse_error,
                        file.filename().string() + ": declared " +
                            std::to_string(declared_count) + " " + what + ", found " +
                            std::to_string(actual));
    }
};

}  // namespace

SfmBundle parse_colmap_text(const std::filesystem::path& dir) {
    SfmBundle bundle;

    {
        LineReader rd(dir / "cameras.txt");
        std::string line;
        while (rd.next(line)) {
            auto f = split_fields(line);
            if (f.size() < 4) bad_line(rd.file, rd.line_no, "camera line too short");
            SfmCamera cam;
            cam.camera_id = int(parse_int(f[0], rd.file, rd.line_no));
            cam.model = f[1];
            cam.width = int(parse_int(f[2], rd.file, rd.line_no));
            cam.height = int(parse_int(f[3], rd.file, rd.line_no));
            if (cam.model == "PINHOLE") {
                if (f.size() != 8)
                    bad_line(rd.file, rd.line_no, "PINHOLE expects 4 parameters");
                cam.fx = parse_double(f[4], rd.file, rd.line_no);
                cam.fy = parse_double(f[5], rd.file, rd.line_no);
                cam.cx = parse_double(f[6], rd.file, rd.line_no);
                cam.cy = parse_double(f[7], rd.file, rd.line_no);
            } else if (cam.model == "SIMPLE_PINHOLE") {
                if (f.size() != 7)
                    bad_line(rd.file, rd.line_no, "SIMPLE_PINHOLE expects 3 parameters");
                cam.fx = cam.fy = parse_double(f[4], rd.file, rd.line_no);
                cam.cx = parse_double(f[5], rd.file, rd.line_no);
                cam.cy = parse_double(f[6], rd.file, rd.line_no);
            } else {
                throw Error(ErrorCode::unsupported_model,
                            "unsupported camera model " + cam.model);
            }
            if (cam.width < 1 || cam.height < 1 || !(cam.fx > 0) || !(cam.fy > 0))
                bad_line(rd.file, rd.line_no, "invalid camera parameters");
            bundle.cameras[cam.camera_id] = cam;
        }
        rd.check_count(long(bundle.cameras.size()), "cameras");
        if (bundle.cameras.empty())
            throw Error(ErrorCode::parse_error, "cameras.txt has no cameras");
    }

    {
        LineReader rd(dir / "images.txt");
        std::string line;
        while (rd.next(line)) {
            auto f = split_fields(line);
            if (f.size() < 10) bad_line(rd.file, rd.line_no, "image line too short");
            SfmImage img;
            img.image_id = int(parse_int(f[0], rd.file, rd.line_no));
            for (int i = 0; i < 4; ++i)
                img.quat[i] = parse_double(f[std::size_t(1 + i)], rd.file, rd.line_no);
            for (int i = 0; i < 3; ++i)
                img.translation[i] =
                    parse_double(f[std::size_t(5 + i)], rd.file, rd.line_no);
            img.camera_id = int(parse_int(f[8], rd.file, rd.line_no));
            img.name = f[9];
            for (std::size_t i = 10; i < f.size(); ++i) img.name += " " + f[i];

            double n = img.quat.norm();
            if (!(n > 0)) bad_line(rd.file, rd.line_no, "zero quaternion");
            img.quat /= n;
            if (!bundle.cameras.count(img.camera_id))
                bad_line(rd.file, rd.line_no,
                         "image references unknown camera " +
                             std::to_string(img.camera_id));

            // Second line: 2D observations (possibly empty).
            std::string obs;
            if (!std::getline(rd.in, obs))
                bad_line(rd.file, rd.line_no, "missing observations line");
            ++rd.line_no;
            auto of = split_fields(obs);
            if (of.size() % 3 != 0)
                bad_line(rd.file, rd.line_no, "observations not in triplets");

            bundle.images.push_back(std::move(img));
        }
        rd.check_count(long(bundle.images.size()), "images");
        if (bundle.images.empty())
            throw Error(ErrorCode::parse_error, "images.txt has no images");
    }

    {
        LineReader rd(dir / "points3D.txt");
        std::string line;
        while (rd.next(line)) {
            auto f = split_fields(line);
            if (f.size() < 8) bad_line(rd.file, rd.line_no, "point line too short");
            if ((f.size() - 8) % 2 != 0)
                bad_line(rd.file, rd.line_no, "track not in (image, point2d) pairs");
            SfmPoint pt;
            pt.point_id = std::uint64_t(parse_int(f[0], rd.file, rd.line_no));
            for (int i = 0; i < 3; ++i)
                pt.xyz[i] = parse_double(f[std::size_t(1 + i)], rd.file, rd.line_no);
            for (int i = 0; i < 3; ++i) {
                long c = parse_int(f[std::size_t(4 + i)], rd.file, rd.line_no);
                if (c < 0 || c > 255) bad_line(rd.file, rd.line_no, "rgb out of range");
                pt.rgb[i] = int(c);
            }
            pt.error = parse_double(f[7], rd.file, rd.line_no);
            pt.track_length = int((f.size() - 8) / 2);
            bundle.points.push_back(pt);
        }
        rd.check_count(long(bundle.points.size()), "points");
        if (bundle.points.empty())
            throw Error(ErrorCode::parse_error, "points3D.txt has no points");
    }

    return bundle;
}

void write_colmap_text(const SfmBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out.is_open())
            throw Error(ErrorCode::io_error, "cannot write " + (dir / name).string());
        return out;
    };

    {
        std::ofstream out = open("cameras.txt");
        out << "# Camera list with one line of data per camera:\n";
        out << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
        out << "# Number of cameras: " << bundle.cameras.size() << "\n";
        char buf[512];
        for (const auto& [id, cam] : bundle.cameras) {
            if (cam.model == "SIMPLE_PINHOLE")
                std::snprintf(buf, sizeof buf,
                              "%d SIMPLE_PINHOLE %d %d %.17g %.17g %.17g\n", id,
                              cam.width, cam.height, cam.fx, cam.cx, cam.cy);
            else
                std::snprintf(buf, sizeof buf,
                              "%d PINHOLE %d %d %.17g %.17g %.17g %.17g\n", id,
                              cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy);
            out << buf;
        }
    }
    {
        std::ofstream out = open("images.txt");
        out << "# Image list with two lines of data per image:\n";
        out << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n";
        out << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
        out << "# Number of images: " << bundle.images.size() << "\n";
        char buf[512];
        for (const auto& img : bundle.images) {
            std::snprintf(buf, sizeof buf,
                          "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d %s\n",
                          img.image_id, img.quat[0], img.quat[1], img.quat[2],
                          img.quat[3], img.translation[0], img.translation[1],
                          img.translation[2], img.camera_id, img.name.c_str());
            out << buf << "\n";  // empty observations line
        }
    }
    {
        std::ofstream out = open("points3D.txt");
        out << "# 3D point list with one line of data per point:\n";
        out << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
        out << "# Number of points: " << bundle.points.size() << "\n";
        char buf[512];
        for (const auto& pt : bundle.points) {
            std::snprintf(buf, sizeof buf, "%llu %.17g %.17g %.17g %d %d %d %.17g",
                          static_cast<unsigned long long>(pt.point_id), pt.xyz[0],
                          pt.xyz[1], pt.xyz[2], pt.rgb[0], pt.rgb[1], pt.rgb[2],
                          pt.error);
            out << buf;
            for (int t = 0; t < pt.track_length; ++t) out << " 0 0";
            out << "\n";
        }
    }
}

Camera<float> bundle_camera(const SfmBundle& bundle, const SfmImage& image) {
    auto it = bundle.cameras.find(image.camera_id);
    if (it == bundle.cameras.end())
        throw Error(ErrorCode::not_found,
                    "camera " + std::to_string(image.camera_id) + " not in bundle");
    const SfmCamera& c = it->second;
    Camera<float> cam;
    cam.fx = float(c.fx);
    cam.fy = float(c.fy);
    cam.cx = float(c.cx);
    cam.cy = float(c.cy);
    cam.width = c.width;
    cam.height = c.height;
    cam.rotation = image.rotation().cast<float>();
    cam.translation = image.translation.cast<float>();
    return cam;
}

}  // namespace ea3d
