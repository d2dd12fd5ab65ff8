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

#include "p2ssm/mesh.hpp"
#include "p2ssm/types.hpp"

#include <filesystem>
#include <string>

namespace p2ssm::io {

/// Plain text, one "x y z" triple per line. Blank lines and '#' comments are
/// skipped. This is also the ".particles" layout: line m of every
/// correspondence file refers to the same correspondence.
PointCloud read_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path, const PointCloud& points);

enum class PlyFormat { ascii, binary_little_endian };

/// PLY vertices and (optional) faces. Polygons are fan-triangulated.
TriangleMesh read_ply(const std::filesystem::path& path);
void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh,
               PlyFormat format = PlyFormat::binary_little_endian);

TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Dispatches on extension (.ply, .obj).
TriangleMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);

/// .ply reads vertex positions; anything else is read as plain text.
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

/// Formats a double so that text outputs are byte-stable.
std::string format_double(double v);

/// Round-trip exact decimal form (17 significant digits).
std::string format_exact(double v);

} // namespace p2ssm::io
