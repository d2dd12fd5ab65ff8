/*
 * p2ssm - self-supervised correspondence learning for statistical shape models.
 *
 * Copyright 2026 The p2ssm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "p2ssm/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace p2ssm::io {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in)
{
    std::ifstream in(path, mode);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

std::string lower_ext(const fs::path& path)
{
    std::string ext = path.extension().string();
    for (auto& c : ext) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return ext;
}

} // namespace

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string format_exact(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

PointCloud read_points(const fs::path& path)
{
    auto in = open_in(path);
    std::vector<std::array<double, 3>> pts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream ss(line);
        std::array<double, 3> p{};
        if (!(ss >> p[0] >> p[1] >> p[2])) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 'x y z'");
        }
        pts.push_back(p);
    }
    PointCloud out(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) << pts[i][0], pts[i][1], pts[i][2];
    }
    require_finite(out, "read_points");
    return out;
}

void write_points(const fs::path& path, const PointCloud& points)
{
    auto out = open_out(path);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        out << format_double(points(i, 0)) << ' ' << format_double(points(i, 1)) << ' '
            << format_double(points(i, 2)) << '\n';
    }
}

namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType parse_ply_type(const std::string& t)
{
    if (t == "char" || t == "int8") return PlyType::i8;
    if (t == "uchar" || t == "uint8") return PlyType::u8;
    if (t == "short" || t == "int16") return PlyType::i16;
    if (t == "ushort" || t == "uint16") return PlyType::u16;
    if (t == "int" || t == "int32") return PlyType::i32;
    if (t == "uint" || t == "uint32") return PlyType::u32;
    if (t == "float" || t == "float32") return PlyType::f32;
    if (t == "double" || t == "float64") return PlyType::f64;
    throw ParseError("ply: unknown property type " + t);
}

struct PlyProperty
{
    std::string name;
    PlyType type = PlyType::f32;
    bool is_list = false;
    PlyType count_type = PlyType::u8;
};

struct PlyElement
{
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

template <typename T>
T read_le(std::istream& in)
{
    std::array<char, sizeof(T)> raw{};
    if (!in.read(raw.data(), sizeof(T))) {
        throw ParseError("ply: unexpected end of binary data");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(raw.begin(), raw.end());
    }
    T v;
    std::memcpy(&v, raw.data(), sizeof(T));
    return v;
}

double read_binary_value(std::istream& in, PlyType t)
{
    switch (t) {
    case PlyType::i8: return read_le<std::int8_t>(in);
    case PlyType::u8: return read_le<std::uint8_t>(in);
    case PlyType::i16: return read_le<std::int16_t>(in);
    case PlyType::u16: return read_le<std::uint16_t>(in);
    case PlyType::i32: return read_le<std::int32_t>(in);
    case PlyType::u32: return read_le<std::uint32_t>(in);
    case PlyType::f32: return read_le<float>(in);
    case PlyType::f64: return read_le<double>(in);
    }
    return 0.0;
}

double read_ascii_value(std::istream& in)
{
    double v;
    if (!(in >> v)) {
        throw ParseError("ply: malformed ascii value");
    }
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v)
{
    std::array<char, sizeof(T)> raw{};
    std::memcpy(raw.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(raw.begin(), raw.end());
    }
    out.write(raw.data(), sizeof(T));
}

} // namespace

TriangleMesh read_ply(const fs::path& path)
{
    auto in = open_in(path, std::ios::in | std::ios::binary);
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
        throw ParseError(path.string() + ": not a PLY file");
    }
    bool binary = false;
    std::vector<PlyElement> elements;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "binary_little_endian") {
                binary = true;
            } else if (fmt != "ascii") {
                throw ParseError(path.string() + ": unsupported PLY format " + fmt);
            }
        } else if (key == "element") {
            PlyElement e;
            ss >> e.name >> e.count;
            elements.push_back(e);
        } else if (key == "property") {
            if (elements.empty()) {
                throw ParseError(path.string() + ": property before element");
            }
            PlyProperty p;
            std::string t;
            ss >> t;
            if (t == "list") {
                std::string ct, it;
                ss >> ct >> it >> p.name;
                p.is_list = true;
                p.count_type = parse_ply_type(ct);
                p.type = parse_ply_type(it);
            } else {
                p.type = parse_ply_type(t);
                ss >> p.name;
            }
            elements.back().properties.push_back(p);
        } else if (key == "end_header") {
            break;
        }
    }

    TriangleMesh mesh;
    std::vector<std::array<int, 3>> faces;
    for (const auto& e : elements) {
        const bool is_vertex = e.name == "vertex";
        const bool is_face = e.name == "face";
        if (is_vertex) {
            mesh.vertices.resize(static_cast<Eigen::Index>(e.count), 3);
        }
        int xyz[3] = {-1, -1, -1};
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
            const auto& n = e.properties[k].name;
            if (n == "x") xyz[0] = static_cast<int>(k);
            if (n == "y") xyz[1] = static_cast<int>(k);
            if (n == "z") xyz[2] = static_cast<int>(k);
        }
        if (is_vertex && (xyz[0] < 0 || xyz[1] < 0 || xyz[2] < 0)) {
            throw ParseError(path.string() + ": vertex element lacks x/y/z");
        }
        for (std::size_t i = 0; i < e.count; ++i) {
            for (std::size_t k = 0; k < e.properties.size(); ++k) {
                const auto& p = e.properties[k];
                if (p.is_list) {
                    const auto n = static_cast<std::size_t>(binary ? read_binary_value(in, p.count_type)
                                                                    : read_ascii_value(in));
                    std::vector<int> idx(n);
                    for (auto& v : idx) {
                        v = static_cast<int>(binary ? read_binary_value(in, p.type) : read_ascii_value(in));
                    }
                    if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) {
                        for (std::size_t t = 1; t + 1 < n; ++t) {
                            faces.push_back({idx[0], idx[t], idx[t + 1]});
                        }
                    }
                } else {
                    const double v = binary ? read_binary_value(in, p.type) : read_ascii_value(in);
                    if (is_vertex) {
                        for (int a = 0; a < 3; ++a) {
                            if (xyz[a] == static_cast<int>(k)) {
                                mesh.vertices(static_cast<Eigen::Index>(i), a) = v;
                            }
                        }
                    }
                }
            }
        }
    }
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t f = 0; f < faces.size(); ++f) {
        mesh.faces.row(static_cast<Eigen::Index>(f)) << faces[f][0], faces[f][1], faces[f][2];
    }
    require_finite(mesh.vertices, "read_ply");
    return mesh;
}

void write_ply(const fs::path& path, const TriangleMesh& mesh, PlyFormat format)
{
    auto out = open_out(path, std::ios::out | std::ios::binary);
    const bool binary = format == PlyFormat::binary_little_endian;
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
        << "element vertex " << mesh.vertices.rows() << "\n"
        << "property double x\nproperty double y\nproperty double z\n";
    if (mesh.faces.rows() > 0) {
        out << "element face " << mesh.faces.rows() << "\nproperty list uchar int vertex_indices\n";
    }
    out << "end_header\n";
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
        if (binary) {
            for (int a = 0; a < 3; ++a) {
                write_le<double>(out, mesh.vertices(v, a));
            }
        } else {
            out << format_double(mesh.vertices(v, 0)) << ' ' << format_double(mesh.vertices(v, 1)) << ' '
                << format_double(mesh.vertices(v, 2)) << '\n';
        }
    }
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        if (binary) {
            write_le<std::uint8_t>(out, 3);
            for (int a = 0; a < 3; ++a) {
                write_le<std::int32_t>(out, mesh.faces(f, a));
            }
        } else {
            out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
        }
    }
}

TriangleMesh read_obj(const fs::path& path)
{
    auto in = open_in(path);
    std::vector<std::array<double, 3>> verts;
    std::vector<std::array<int, 3>> faces;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) {
            continue;
        }
        if (key == "v") {
            std::array<double, 3> p{};
            if (!(ss >> p[0] >> p[1] >> p[2])) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
            }
            verts.push_back(p);
        } else if (key == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                const int i = std::stoi(tok.substr(0, tok.find('/')));
                idx.push_back(i > 0 ? i - 1 : static_cast<int>(verts.size()) + i);
            }
            if (idx.size() < 3) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": face with < 3 vertices");
            }
            for (std::size_t t = 1; t + 1 < idx.size(); ++t) {
                faces.push_back({idx[0], idx[t], idx[t + 1]});
            }
        }
    }
    TriangleMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        mesh.vertices.row(static_cast<Eigen::Index>(i)) << verts[i][0], verts[i][1], verts[i][2];
    }
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t f = 0; f < faces.size(); ++f) {
        mesh.faces.row(static_cast<Eigen::Index>(f)) << faces[f][0], faces[f][1], faces[f][2];
    }
    require_finite(mesh.vertices, "read_obj");
    return mesh;
}

void write_obj(const fs::path& path, const TriangleMesh& mesh)
{
    auto out = open_out(path);
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
        out << "v " << format_double(mesh.vertices(v, 0)) << ' ' << format_double(mesh.vertices(v, 1)) << ' '
            << format_double(mesh.vertices(v, 2)) << '\n';
    }
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' ' << mesh.faces(f, 2) + 1 << '\n';
    }
}

TriangleMesh read_mesh(const fs::path& path)
{
    const auto ext = lower_ext(path);
    if (ext == ".ply") {
        return read_ply(path);
    }
    if (ext == ".obj") {
        return read_obj(path);
    }
    throw ParseError(path.string() + ": unsupported mesh extension");
}

void write_mesh(const fs::path& path, const TriangleMesh& mesh)
{
    const auto ext = lower_ext(path);
    if (ext == ".ply") {
        write_ply(path, mesh);
    } else if (ext == ".obj") {
        write_obj(path, mesh);
    } else {
        throw std::invalid_argument(path.string() + ": unsupported mesh extension");
    }
}

PointCloud read_cloud(const fs::path& path)
{
    if (lower_ext(path) == ".ply") {
        return read_ply(path).vertices;
    }
    return read_points(path);
}

void write_cloud(const fs::path& path, const PointCloud& cloud)
{
    if (lower_ext(path) == ".ply") {
        write_ply(path, TriangleMesh{cloud, FaceMatrix(0, 3)});
    } else {
        write_points(path, cloud);
    }
}

} // namespace p2ssm::io
