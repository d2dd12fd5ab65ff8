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
#include "oracles.hpp"
#include "support.hpp"

#include "p2ssm/datasets.hpp"
#include "p2ssm/io.hpp"
#include "p2ssm/metrics.hpp"

#include <doctest.h>

#include <fstream>

using namespace p2ssm;

TEST_CASE("point-to-surface distance agrees with the projection oracle")
{
    Rng rng(31);
    for (int trial = 0; trial < 60; ++trial) {
        const int faces = 1 + static_cast<int>(uniform_index(rng, 100));
        const TriangleMesh mesh = testing::random_mesh(faces, rng);
        const PointCloud y = testing::random_cloud(1 + static_cast<int>(uniform_index(rng, 30)), rng, 1.5);
        CHECK(std::abs(p2s(y, mesh) - oracle::p2s(y, mesh)) < 1e-9);
    }
}

TEST_CASE("closest point covers vertex, edge and face regions")
{
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    CHECK((closest_point_on_triangle(Vec3(0.2, 0.2, 3), a, b, c) - Vec3(0.2, 0.2, 0)).norm() < 1e-15);
    CHECK((closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c) - a).norm() < 1e-15);
    CHECK((closest_point_on_triangle(Vec3(0.5, -2, 1), a, b, c) - Vec3(0.5, 0, 0)).norm() < 1e-15);
    CHECK((closest_point_on_triangle(Vec3(1, 1, 0), a, b, c) - Vec3(0.5, 0.5, 0)).norm() < 1e-15);
}

TEST_CASE("mesh utilities on a closed icosphere")
{
    const TriangleMesh s = unit_icosphere(3);
    const EdgeIncidence e = edge_incidence(s);
    CHECK(e.boundary == 0);
    CHECK(e.non_manifold == 0);
    CHECK(surface_area(s) == doctest::Approx(4 * 3.141592653589793).epsilon(0.01));

    const PointCloud p = sample_surface(s, 500, 4);
    CHECK(p.rows() == 500);
    CHECK((p - sample_surface(s, 500, 4)).norm() == 0.0);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        CHECK(point_mesh_distance(p.row(i).transpose(), s) < 1e-12);
    }
    const auto n = vertex_normals(s);
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
        CHECK(n.row(i).dot(s.vertices.row(i)) > 0.99);
    }
}

TEST_CASE("clean_mesh drops degenerate faces and rejects bad indices")
{
    TriangleMesh m;
    m.vertices.resize(4, 3);
    m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 2, 0, 0;
    m.faces.resize(2, 3);
    m.faces << 0, 1, 2, 0, 1, 3;
    CHECK(clean_mesh(m).faces.rows() == 1);
    m.faces(0, 2) = 9;
    CHECK_THROWS_AS(clean_mesh(m), InvalidInput);
}

TEST_CASE("point and mesh files round-trip")
{
    const auto dir = testing::scratch_dir("io");
    Rng rng(32);
    const PointCloud p = testing::random_cloud(17, rng, 100.0);
    io::write_points(dir / "a.pts", p);
    CHECK((io::read_points(dir / "a.pts") - p).cwiseAbs().maxCoeff() < 1e-7);

    const TriangleMesh s = unit_icosphere(1);
    for (auto fmt : {io::PlyFormat::ascii, io::PlyFormat::binary_little_endian}) {
        io::write_ply(dir / "s.ply", s, fmt);
        const TriangleMesh r = io::read_ply(dir / "s.ply");
        CHECK(r.faces == s.faces);
        CHECK((r.vertices - s.vertices).cwiseAbs().maxCoeff() < 1e-7);
    }
    io::write_obj(dir / "s.obj", s);
    CHECK(io::read_mesh(dir / "s.obj").faces == s.faces);
    CHECK(io::read_cloud(dir / "s.ply").rows() == s.vertices.rows());

    std::ofstream(dir / "bad.pts") << "1 2\n";
    CHECK_THROWS(io::read_points(dir / "bad.pts"));
    std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nelement vertex 3\nend_header\n0 0 0\n";
    CHECK_THROWS(io::read_ply(dir / "bad.ply"));
    CHECK_THROWS(io::read_points(dir / "missing.pts"));
}

TEST_CASE("text formatting is stable")
{
    CHECK(io::format_exact(0.1) == "0.10000000000000001");
    CHECK(std::stod(io::format_exact(1.0 / 3.0)) == 1.0 / 3.0);
}
