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
#include "p2ssm/mesh.hpp"
#include "p2ssm/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

namespace p2ssm {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        return a;
    }
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        return b;
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        return a + (d1 / (d1 - d3)) * ab;
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        return c;
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        return a + (d2 / (d2 - d6)) * ac;
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh)
{
    if (mesh.faces.rows() == 0) {
        throw InvalidInput("point_mesh_distance: mesh has no faces");
    }
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        // Cheap reject on the bounding sphere of the face.
        const Vec3 centre = (a + b + c) / 3.0;
        const double radius = std::sqrt(std::max({(a - centre).squaredNorm(), (b - centre).squaredNorm(),
                                                  (c - centre).squaredNorm()}));
        const double lower = (p - centre).norm() - radius;
        if (lower > 0.0 && lower * lower >= best) {
            continue;
        }
        best = std::min(best, (p - closest_point_on_triangle(p, a, b, c)).squaredNorm());
    }
    return std::sqrt(best);
}

double mean_vertex_to_surface(const TriangleMesh& from, const TriangleMesh& to)
{
    if (from.vertices.rows() == 0) {
        throw InvalidInput("mean_vertex_to_surface: no vertices");
    }
    double sum = 0.0;
    for (Eigen::Index v = 0; v < from.vertices.rows(); ++v) {
        sum += point_mesh_distance(from.vertices.row(v).transpose(), to);
    }
    return sum / static_cast<double>(from.vertices.rows());
}

TriangleMesh clean_mesh(TriangleMesh mesh)
{
    const auto nv = static_cast<int>(mesh.vertices.rows());
    std::vector<Eigen::Index> keep;
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) {
            if (mesh.faces(f, k) < 0 || mesh.faces(f, k) >= nv) {
                throw InvalidInput("mesh face index out of range");
            }
        }
        const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        if ((b - a).cross(c - a).norm() > 0.0) {
            keep.push_back(f);
        }
    }
    if (keep.empty()) {
        throw InvalidInput("mesh has no non-degenerate faces");
    }
    FaceMatrix faces(static_cast<Eigen::Index>(keep.size()), 3);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        faces.row(static_cast<Eigen::Index>(i)) = mesh.faces.row(keep[i]);
    }
    mesh.faces = std::move(faces);
    return mesh;
}

namespace {

double face_area(const TriangleMesh& mesh, Eigen::Index f)
{
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
    return 0.5 * (b - a).cross(c - a).norm();
}

} // namespace

double surface_area(const TriangleMesh& mesh)
{
    double total = 0.0;
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        total += face_area(mesh, f);
    }
    return total;
}

PointCloud sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed)
{
    if (n < 1 || mesh.faces.rows() == 0) {
        throw std::invalid_argument("sample_surface: need n >= 1 and a non-empty mesh");
    }
    std::vector<double> cdf(static_cast<std::size_t>(mesh.faces.rows()));
    double acc = 0.0;
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        acc += face_area(mesh, f);
        cdf[static_cast<std::size_t>(f)] = acc;
    }
    Rng rng(seed);
    PointCloud out(n, 3);
    for (int i = 0; i < n; ++i) {
        const double u = uniform(rng, 0.0, acc);
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto f = std::min<Eigen::Index>(it - cdf.begin(), mesh.faces.rows() - 1);
        double r1 = uniform(rng, 0.0, 1.0);
        double r2 = uniform(rng, 0.0, 1.0);
        if (r1 + r2 > 1.0) {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        out.row(i) = (a + r1 * (b - a) + r2 * (c - a)).transpose();
    }
    return out;
}

EdgeIncidence edge_incidence(const TriangleMesh& mesh)
{
    std::map<std::pair<int, int>, int> count;
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int a = mesh.faces(f, k);
            const int b = mesh.faces(f, (k + 1) % 3);
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    }
    EdgeIncidence e;
    for (const auto& [edge, c] : count) {
        if (c == 1) {
            ++e.boundary;
        } else if (c > 2) {
            ++e.non_manifold;
        }
    }
    return e;
}

Points3<double> vertex_normals(const TriangleMesh& mesh)
{
    Points3<double> normals = Points3<double>::Zero(mesh.vertices.rows(), 3);
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        const Eigen::RowVector3d n = (b - a).cross(c - a).transpose();
        for (int k = 0; k < 3; ++k) {
            normals.row(mesh.faces(f, k)) += n;
        }
    }
    for (Eigen::Index v = 0; v < normals.rows(); ++v) {
        const double len = normals.row(v).norm();
        if (len > 0.0) {
            normals.row(v) /= len;
        }
    }
    return normals;
}

} // namespace p2ssm
