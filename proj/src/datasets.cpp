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
#include "p2ssm/datasets.hpp"

#include "p2ssm/io.hpp"
#include "p2ssm/random.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace p2ssm {

// ---- half torus -----------------------------------------------------------

void HalfTorusParams::validate() const
{
    if (!(major_radius > 0.0) || !(minor_radius > 0.0) || !(minor_radius < major_radius)) {
        throw InvalidInput("half torus: radii must satisfy 0 < minor < major");
    }
    if (!(bump_sigma > 0.0) || !std::isfinite(bump_amplitude) || bump_amplitude <= -minor_radius) {
        throw InvalidInput("half torus: invalid bump parameters");
    }
    if (!(u_min >= 0.0) || !(u_max <= 1.0) || !(u_min <= u_max)) {
        throw InvalidInput("half torus: bump range must lie within [0, 1]");
    }
    if (cloud_points < 1 || mesh_segments < 3 || mesh_rings < 3) {
        throw InvalidInput("half torus: invalid resolution");
    }
}

Vec3 half_torus_point(double phi, double theta, double u, const HalfTorusParams& p)
{
    const double pi = std::numbers::pi;
    const double dphi = phi - pi * u;
    const double dtheta = std::remainder(theta, 2.0 * pi);
    const double ratio = p.minor_radius / p.major_radius;
    const double d2 = dphi * dphi + ratio * ratio * dtheta * dtheta;
    const double rho = p.minor_radius + p.bump_amplitude * std::exp(-d2 / (2.0 * p.bump_sigma * p.bump_sigma));
    const double ring = p.major_radius + rho * std::cos(theta);
    return {ring * std::cos(phi), ring * std::sin(phi), rho * std::sin(theta)};
}

Vec3 half_torus_apex(double u, const HalfTorusParams& p)
{
    return half_torus_point(std::numbers::pi * u, 0.0, u, p);
}

double half_torus_arc_position(const Vec3& p)
{
    double a = std::atan2(p.y(), p.x());
    if (a < -0.5 * std::numbers::pi) {
        a += 2.0 * std::numbers::pi;
    }
    return std::clamp(a / std::numbers::pi, 0.0, 1.0);
}

HalfTorusShape make_half_torus(double u, const HalfTorusParams& p, std::uint64_t seed)
{
    p.validate();
    const double pi = std::numbers::pi;
    const int S = p.mesh_segments;
    const int Rg = p.mesh_rings;
    HalfTorusShape shape;
    shape.u = u;
    shape.mesh.vertices.resize(static_cast<Eigen::Index>(S + 1) * Rg, 3);
    for (int s = 0; s <= S; ++s) {
        const double phi = pi * s / S;
        for (int r = 0; r < Rg; ++r) {
            const double theta = 2.0 * pi * r / Rg;
            shape.mesh.vertices.row(s * Rg + r) = half_torus_point(phi, theta, u, p).transpose();
        }
    }
    shape.mesh.faces.resize(2 * static_cast<Eigen::Index>(S) * Rg, 3);
    Eigen::Index f = 0;
    for (int s = 0; s < S; ++s) {
        for (int r = 0; r < Rg; ++r) {
            const int a = s * Rg + r;
            const int b = s * Rg + (r + 1) % Rg;
            const int c = (s + 1) * Rg + r;
            const int d = (s + 1) * Rg + (r + 1) % Rg;
            shape.mesh.faces.row(f++) << a, c, d;
            shape.mesh.faces.row(f++) << a, d, b;
        }
    }
    shape.cloud = sample_surface(shape.mesh, p.cloud_points, derive_seed(seed, std::bit_cast<std::uint64_t>(u)));
    return shape;
}

std::vector<HalfTorusShape> generate_half_torus_bump(int n, const HalfTorusParams& p, std::uint64_t seed)
{
    if (n < 2) {
        throw InvalidInput("generate_half_torus_bump: need at least 2 shapes");
    }
    p.validate();
    Rng rng(seed);
    std::vector<HalfTorusShape> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.push_back(make_half_torus(uniform(rng, p.u_min, p.u_max), p, seed));
    }
    return out;
}

// ---- ellipsoids -----------------------------------------------------------

double EllipsoidParams::y_diameter(int t) const
{
    return y_base + y_amplitude * std::sin(2.0 * std::numbers::pi * t / time_points);
}

void EllipsoidParams::validate() const
{
    if (time_points < 2) {
        throw InvalidInput("ellipsoids: need at least 2 time points");
    }
    if (!(x_mean > 0.0) || !(x_std >= 0.0) || !(z_diameter > 0.0) || !(y_base - std::abs(y_amplitude) > 0.0)) {
        throw InvalidInput("ellipsoids: diameters must stay positive");
    }
    if (cloud_points < 1 || mesh_subdivisions < 0) {
        throw InvalidInput("ellipsoids: invalid resolution");
    }
}

TriangleMesh unit_icosphere(int subdivisions)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) {
        p.normalize();
    }
    std::vector<std::array<int, 3>> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> midpoint;
        const auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoint.find(key);
            if (it != midpoint.end()) {
                return it->second;
            }
            v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int ab = mid(f[0], f[1]);
            const int bc = mid(f[1], f[2]);
            const int ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    TriangleMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) {
        mesh.vertices.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    }
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) {
        mesh.faces.row(static_cast<Eigen::Index>(i)) << faces[i][0], faces[i][1], faces[i][2];
    }
    return mesh;
}

CorrespondenceSet ellipsoid_correspondences(const PointCloud& unit_directions, double x_diameter, double y_diameter,
                                            double z_diameter)
{
    const Eigen::RowVector3d semi(0.5 * x_diameter, 0.5 * y_diameter, 0.5 * z_diameter);
    return unit_directions.array().rowwise() * semi.array();
}

std::vector<EllipsoidSubject> generate_4d_ellipsoids(int n_subjects, const EllipsoidParams& p, std::uint64_t seed)
{
    if (n_subjects < 2) {
        throw InvalidInput("generate_4d_ellipsoids: need at least 2 subjects");
    }
    p.validate();
    const TriangleMesh sphere = unit_icosphere(p.mesh_subdivisions);
    std::vector<EllipsoidSubject> out(static_cast<std::size_t>(n_subjects));
    for (int s = 0; s < n_subjects; ++s) {
        EllipsoidSubject& subj = out[static_cast<std::size_t>(s)];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
        do {
            subj.x_diameter = normal(rng, p.x_mean, p.x_std);
        } while (!(subj.x_diameter > 0.0));
        subj.unit_sample.resize(p.cloud_points, 3);
        for (int i = 0; i < p.cloud_points; ++i) {
            Vec3 d;
            do {
                d = Vec3(normal(rng), normal(rng), normal(rng));
            } while (d.norm() < 1e-12);
            subj.unit_sample.row(i) = d.normalized().transpose();
        }
        for (int t = 0; t < p.time_points; ++t) {
            const double yd = p.y_diameter(t);
            subj.frames.push_back(ellipsoid_correspondences(subj.unit_sample, subj.x_diameter, yd, p.z_diameter));
            TriangleMesh m;
            m.vertices = ellipsoid_correspondences(sphere.vertices, subj.x_diameter, yd, p.z_diameter);
            m.faces = sphere.faces;
            subj.meshes.push_back(std::move(m));
        }
    }
    return out;
}

// ---- manifests ------------------------------------------------------------

std::string to_string(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "";
    }
    return "";
}

Split parse_split(const std::string& s)
{
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s.empty()) return Split::none;
    throw ParseError("unknown split '" + s + "'");
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split s) const
{
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
        if (e.split == s) {
            out.push_back(&e);
        }
    }
    return out;
}

namespace {

constexpr const char* kManifestHeader = "id,cloud_path,mesh_path,label,split,subject,t";

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

int parse_optional_int(const std::string& s, const std::string& what)
{
    if (s.empty()) {
        return -1;
    }
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size() || v < 0) {
            throw ParseError(what + ": bad integer '" + s + "'");
        }
        return v;
    } catch (const std::logic_error&) {
        throw ParseError(what + ": bad integer '" + s + "'");
    }
}

void check_field(const std::string& s)
{
    if (s.find_first_of(",\n\r") != std::string::npos) {
        throw InvalidInput("manifest field contains a separator: '" + s + "'");
    }
}

std::string rel_string(const fs::path& p, const fs::path& base)
{
    if (p.empty()) {
        return "";
    }
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path rel = abs.lexically_relative(fs::absolute(base).lexically_normal());
    return (rel.empty() ? abs : rel).generic_string();
}

} // namespace

DatasetManifest read_manifest(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read manifest " + path.string());
    }
    DatasetManifest m;
    m.root = path.parent_path();
    std::string line;
    if (!std::getline(is, line) || split_csv(line) != split_csv(kManifestHeader)) {
        throw ParseError(path.string() + ": expected header '" + kManifestHeader + "'");
    }
    std::set<std::string> ids;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto f = split_csv(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 7) {
            throw ParseError(where + ": expected 7 fields");
        }
        ManifestEntry e;
        e.id = f[0];
        e.cloud_path = f[1];
        e.mesh_path = f[2];
        e.label = f[3];
        e.split = parse_split(f[4]);
        e.subject = parse_optional_int(f[5], where);
        e.t = parse_optional_int(f[6], where);
        if (e.id.empty() || e.cloud_path.empty()) {
            throw ParseError(where + ": id and cloud_path are required");
        }
        if (!ids.insert(e.id).second) {
            throw ParseError(where + ": duplicate id " + e.id);
        }
        if (!fs::exists(m.resolve(e.cloud_path))) {
            throw InvalidInput(where + ": missing cloud file " + m.resolve(e.cloud_path).string());
        }
        if (!e.mesh_path.empty() && !fs::exists(m.resolve(e.mesh_path))) {
            throw InvalidInput(where + ": missing mesh file " + m.resolve(e.mesh_path).string());
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m)
{
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    fs::create_directories(dir);
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write manifest " + path.string());
    }
    os << kManifestHeader << '\n';
    for (const auto& e : m.entries) {
        const std::string cloud = rel_string(m.resolve(e.cloud_path), dir);
        const std::string mesh = e.mesh_path.empty() ? "" : rel_string(m.resolve(e.mesh_path), dir);
        for (const auto* s : {&e.id, &cloud, &mesh, &e.label}) {
            check_field(*s);
        }
        os << e.id << ',' << cloud << ',' << mesh << ',' << e.label << ',' << to_string(e.split) << ','
           << (e.subject >= 0 ? std::to_string(e.subject) : "") << ',' << (e.t >= 0 ? std::to_string(e.t) : "")
           << '\n';
    }
}

DatasetManifest write_half_torus_dataset(const fs::path& dir, std::span<const HalfTorusShape> shapes,
                                         const std::string& label)
{
    fs::create_directories(dir);
    DatasetManifest m;
    m.root = dir;
    std::ofstream params(dir / "params.csv");
    params << "id,u\n";
    const int width = shapes.size() >= 1000 ? 4 : 3;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        std::string num = std::to_string(i);
        num.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0');
        ManifestEntry e;
        e.id = "htb_" + num;
        e.cloud_path = e.id + ".pts";
        e.mesh_path = e.id + ".ply";
        e.label = label;
        io::write_points(dir / e.cloud_path, shapes[i].cloud);
        io::write_ply(dir / e.mesh_path, shapes[i].mesh);
        params << e.id << ',' << io::format_exact(shapes[i].u) << '\n';
        m.entries.push_back(std::move(e));
    }
    write_manifest(dir / "manifest.csv", m);
    return m;
}

DatasetManifest write_ellipsoid_dataset(const fs::path& dir, std::span<const EllipsoidSubject> subjects,
                                        const EllipsoidParams& p)
{
    fs::create_directories(dir);
    DatasetManifest m;
    m.root = dir;
    std::ofstream params(dir / "params.csv");
    params << "subject,x_diameter,z_diameter,time_points\n";
    char buf[32];
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        params << s << ',' << io::format_exact(subjects[s].x_diameter) << ',' << io::format_exact(p.z_diameter) << ','
               << p.time_points << '\n';
        io::write_points(dir / ("s" + std::to_string(s) + "_unit.pts"), subjects[s].unit_sample);
        for (std::size_t t = 0; t < subjects[s].frames.size(); ++t) {
            std::snprintf(buf, sizeof buf, "ell_s%03zu_t%02zu", s, t);
            ManifestEntry e;
            e.id = buf;
            e.cloud_path = e.id + ".pts";
            e.mesh_path = e.id + ".ply";
            e.label = "ellipsoid";
            e.subject = static_cast<int>(s);
            e.t = static_cast<int>(t);
            io::write_points(dir / e.cloud_path, subjects[s].frames[t]);
            io::write_ply(dir / e.mesh_path, subjects[s].meshes[t]);
            m.entries.push_back(std::move(e));
        }
    }
    write_manifest(dir / "manifest.csv", m);
    return m;
}

std::pair<TriangleMesh, PointCloud> ingest_mesh(const fs::path& path)
{
    TriangleMesh mesh = clean_mesh(io::read_mesh(path));
    PointCloud cloud = mesh.vertices;
    return {std::move(mesh), std::move(cloud)};
}

DatasetManifest split(DatasetManifest manifest, const std::array<double, 3>& ratios, std::uint64_t seed)
{
    for (double r : ratios) {
        if (!(r >= 0.0)) {
            throw std::invalid_argument("split: ratios must be nonnegative");
        }
    }
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("split: ratios must sum to 1");
    }
    // Units are subjects when present, otherwise single entries.
    std::vector<std::vector<std::size_t>> units;
    std::map<int, std::size_t> subject_unit;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const int subj = manifest.entries[i].subject;
        if (subj < 0) {
            units.push_back({i});
            continue;
        }
        const auto [it, inserted] = subject_unit.emplace(subj, units.size());
        if (inserted) {
            units.emplace_back();
        }
        units[it->second].push_back(i);
    }
    Rng rng(seed);
    for (std::size_t i = units.size(); i > 1; --i) {
        std::swap(units[i - 1], units[uniform_index(rng, i)]);
    }
    const auto n = static_cast<double>(units.size());
    const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios[2] * n + 1e-9));
    for (std::size_t u = 0; u < units.size(); ++u) {
        const Split s = u < n_val ? Split::val : (u < n_val + n_test ? Split::test : Split::train);
        for (std::size_t i : units[u]) {
            manifest.entries[i].split = s;
        }
    }
    return manifest;
}

DatasetManifest compose_multi_anatomy(std::span<const DatasetManifest> manifests, std::span<const std::string> labels)
{
    if (manifests.empty() || manifests.size() != labels.size()) {
        throw std::invalid_argument("compose_multi_anatomy: need one label per manifest");
    }
    DatasetManifest out;
    out.root = manifests.front().root;
    std::set<std::string> ids;
    for (std::size_t k = 0; k < manifests.size(); ++k) {
        for (const auto& e : manifests[k].entries) {
            ManifestEntry c = e;
            c.id = labels[k] + "_" + e.id;
            c.label = labels[k];
            c.cloud_path = fs::absolute(manifests[k].resolve(e.cloud_path)).lexically_normal();
            if (!e.mesh_path.empty()) {
                c.mesh_path = fs::absolute(manifests[k].resolve(e.mesh_path)).lexically_normal();
            }
            if (!ids.insert(c.id).second) {
                throw InvalidInput("compose_multi_anatomy: duplicate id " + c.id);
            }
            out.entries.push_back(std::move(c));
        }
    }
    return out;
}

Alignment parse_alignment(const std::string& s)
{
    if (s == "prealigned") return Alignment::prealigned;
    if (s == "original") return Alignment::original;
    if (s == "misaligned") return Alignment::misaligned;
    throw std::invalid_argument("unknown alignment mode '" + s + "' (prealigned, original, misaligned)");
}

std::vector<std::pair<std::string, RigidPerturbation>> read_transforms(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::string line;
    std::getline(is, line);
    std::vector<std::pair<std::string, RigidPerturbation>> out;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 7) {
            throw ParseError(path.string() + ": expected id,rx,ry,rz,tx,ty,tz");
        }
        RigidPerturbation p;
        Vec3 euler;
        try {
            for (int a = 0; a < 3; ++a) {
                euler[a] = std::stod(f[static_cast<std::size_t>(1 + a)]);
                p.translation[a] = std::stod(f[static_cast<std::size_t>(4 + a)]);
            }
        } catch (const std::logic_error&) {
            throw ParseError(path.string() + ": bad number in '" + line + "'");
        }
        p.rotation = rotation_from_euler(euler);
        out.emplace_back(f[0], p);
    }
    return out;
}

DatasetManifest make_misaligned_variant(const DatasetManifest& manifest, Alignment mode, double max_deg,
                                        double max_trans, std::uint64_t seed, const fs::path& dir)
{
    fs::create_directories(dir);
    std::map<std::string, RigidPerturbation> stored;
    if (mode == Alignment::prealigned && fs::exists(manifest.root / "transforms.csv")) {
        for (auto& [id, p] : read_transforms(manifest.root / "transforms.csv")) {
            stored.emplace(id, p);
        }
    }
    DatasetManifest out;
    out.root = dir;
    std::ofstream tf;
    if (mode == Alignment::misaligned) {
        tf.open(dir / "transforms.csv");
        tf << "id,rx,ry,rz,tx,ty,tz\n";
    }
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const ManifestEntry& e = manifest.entries[i];
        PointCloud cloud = io::read_cloud(manifest.resolve(e.cloud_path));
        std::optional<TriangleMesh> mesh;
        if (!e.mesh_path.empty()) {
            mesh = io::read_mesh(manifest.resolve(e.mesh_path));
        }
        if (mode == Alignment::misaligned) {
            auto [moved, p] = perturb_rigid(cloud, max_deg, max_trans, derive_seed(seed, i));
            cloud = std::move(moved);
            if (mesh) {
                mesh->vertices = p.apply(mesh->vertices);
            }
            tf << e.id;
            for (int a = 0; a < 3; ++a) {
                tf << ',' << io::format_exact(p.rotation.euler_xyz_deg[a]);
            }
            for (int a = 0; a < 3; ++a) {
                tf << ',' << io::format_exact(p.translation[a]);
            }
            tf << '\n';
        } else if (mode == Alignment::prealigned) {
            const auto it = stored.find(e.id);
            if (it != stored.end()) {
                cloud = it->second.apply_inverse(cloud);
                if (mesh) {
                    mesh->vertices = it->second.apply_inverse(mesh->vertices);
                }
            }
        }
        ManifestEntry c = e;
        c.cloud_path = e.id + ".pts";
        io::write_points(dir / c.cloud_path, cloud);
        if (mesh) {
            c.mesh_path = e.id + ".ply";
            io::write_ply(dir / c.mesh_path, *mesh);
        }
        out.entries.push_back(std::move(c));
    }
    write_manifest(dir / "manifest.csv", out);
    return out;
}

} // namespace p2ssm
