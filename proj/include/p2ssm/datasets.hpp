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

#include "p2ssm/geometry.hpp"
#include "p2ssm/mesh.hpp"
#include "p2ssm/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace p2ssm {

// ---- synthetic generators -------------------------------------------------

struct HalfTorusParams
{
    double major_radius = 10.0;  // mm
    double minor_radius = 3.0;   // mm
    double bump_amplitude = 2.0; // mm, radial displacement at the bump centre
    double bump_sigma = 0.15;    // rad
    double u_min = 0.15;         // bump position range, as a fraction of the arc
    double u_max = 0.85;
    int cloud_points = 5000;
    int mesh_segments = 96; // along the arc
    int mesh_rings = 32;    // around the tube

    void validate() const;
};

struct HalfTorusShape
{
    double u = 0.0; ///< bump position; the arc angle is pi * u
    TriangleMesh mesh;
    PointCloud cloud;
};

/// Half torus over arc angle [0, pi] in the xy plane with a Gaussian bump on
/// the outer equator. The surface sample depends only on (seed, u), so two
/// shapes with equal bump positions are identical.
HalfTorusShape make_half_torus(double u, const HalfTorusParams& params, std::uint64_t seed);

/// Surface point of the half torus at arc angle phi and tube angle theta.
Vec3 half_torus_point(double phi, double theta, double u, const HalfTorusParams& params);

/// Apex of the bump (the surface point at arc angle pi * u on the outer equator).
Vec3 half_torus_apex(double u, const HalfTorusParams& params);

/// Arc position in [0, 1] of a point: atan2(y, x) / pi, clamped.
double half_torus_arc_position(const Vec3& p);

/// n shapes with bump positions drawn uniformly from [u_min, u_max].
std::vector<HalfTorusShape> generate_half_torus_bump(int n, const HalfTorusParams& params, std::uint64_t seed);

struct EllipsoidParams
{
    double x_mean = 20.0;  // mm, diameter
    double x_std = 2.0;
    double y_base = 14.0;  // y(t) = y_base + y_amplitude * sin(2 pi t / T)
    double y_amplitude = 4.0;
    double z_diameter = 16.0;
    int time_points = 16;
    int cloud_points = 5000;
    int mesh_subdivisions = 3;

    double y_diameter(int t) const;
    void validate() const;
};

struct EllipsoidSubject
{
    double x_diameter = 0.0;
    PointCloud unit_sample; ///< unit-sphere sample shared by every frame of the subject
    std::vector<PointCloud> frames;
    std::vector<TriangleMesh> meshes;
};

/// Icosphere with the given subdivision level (radius 1).
TriangleMesh unit_icosphere(int subdivisions);

/// Per subject: x diameter ~ N(x_mean, x_std) (redrawn while nonpositive);
/// frame t is the subject's unit-sphere sample scaled by the semi-axes.
std::vector<EllipsoidSubject> generate_4d_ellipsoids(int n_subjects, const EllipsoidParams& params,
                                                     std::uint64_t seed);

/// Analytic correspondences: fixed unit directions scaled by the frame's
/// semi-axes. Row m refers to the same direction in every frame.
CorrespondenceSet ellipsoid_correspondences(const PointCloud& unit_directions, double x_diameter, double y_diameter,
                                            double z_diameter);

// ---- manifests ------------------------------------------------------------

enum class Split { train, val, test, none };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry
{
    std::string id;
    std::filesystem::path cloud_path; ///< relative to the manifest directory
    std::filesystem::path mesh_path;  ///< empty when absent
    std::string label;
    Split split = Split::none;
    int subject = -1;
    int t = -1;
};

struct DatasetManifest
{
    std::filesystem::path root; ///< directory the relative paths resolve against
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : root / p; }
    std::vector<const ManifestEntry*> select(Split s) const;
};

/// CSV with header id,cloud_path,mesh_path,label,split,subject,t. Missing
/// referenced files are reported at load.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Writes shapes as <id>.pts / <id>.ply under `dir` plus manifest.csv, and
/// the bump positions in params.csv. Returns the manifest.
DatasetManifest write_half_torus_dataset(const std::filesystem::path& dir, std::span<const HalfTorusShape> shapes,
                                         const std::string& label = "half_torus");
DatasetManifest write_ellipsoid_dataset(const std::filesystem::path& dir, std::span<const EllipsoidSubject> subjects,
                                        const EllipsoidParams& params);

/// Mesh plus its vertices as the full cloud, vertex order preserved.
std::pair<TriangleMesh, PointCloud> ingest_mesh(const std::filesystem::path& path);

/// Assigns train/val/test. val and test receive floor(ratio * count) items
/// and train takes the rest; entries that share a subject stay together.
DatasetManifest split(DatasetManifest manifest, const std::array<double, 3>& ratios, std::uint64_t seed);

/// Union of manifests, entries relabelled with labels[i] and ids prefixed
/// with the label. Paths are rewritten relative to the first root.
DatasetManifest compose_multi_anatomy(std::span<const DatasetManifest> manifests,
                                      std::span<const std::string> labels);

enum class Alignment { prealigned, original, misaligned };
Alignment parse_alignment(const std::string& s);

/// Writes a variant of `manifest` into `dir`. misaligned applies an
/// independent perturb_rigid per sample (to clouds and meshes) and records
/// the transforms in transforms.csv; prealigned undoes transforms recorded
/// next to the source manifest, if any; original copies samples unchanged.
DatasetManifest make_misaligned_variant(const DatasetManifest& manifest, Alignment mode, double max_deg,
                                        double max_trans, std::uint64_t seed, const std::filesystem::path& dir);

/// Rigid transforms recorded by make_misaligned_variant, keyed by sample id.
std::vector<std::pair<std::string, RigidPerturbation>> read_transforms(const std::filesystem::path& path);

} // namespace p2ssm
