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
#pragma once

#include "p2ssm/types.hpp"

#include <cstdint>

namespace p2ssm {

using FaceMatrix = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct TriangleMesh
{
    Points3<double> vertices;
    FaceMatrix faces;
};

/// Closest point to p on triangle (a, b, c), handling every Voronoi region.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Unsigned distance from p to the mesh surface (minimum over faces).
double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh);

/// Mean over vertices of `from` of the distance to the surface of `to`.
double mean_vertex_to_surface(const TriangleMesh& from, const TriangleMesh& to);

/// Checks index range and drops zero-area faces. Throws InvalidInput if no
/// face survives or an index is out of range.
TriangleMesh clean_mesh(TriangleMesh mesh);

double surface_area(const TriangleMesh& mesh);

/// Area-weighted uniform surface sample with n points.
PointCloud sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed);

/// Counts of undirected edges used by exactly one face and by more than two.
struct EdgeIncidence
{
    int boundary = 0;
    int non_manifold = 0;
};

EdgeIncidence edge_incidence(const TriangleMesh& mesh);

/// Per-vertex unit normals (area-weighted face normals).
Points3<double> vertex_normals(const TriangleMesh& mesh);

} // namespace p2ssm
