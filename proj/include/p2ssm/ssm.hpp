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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace p2ssm {

/// Point distribution model over Procrustes-aligned, flattened
/// correspondence sets (x0 y0 z0 x1 ...).
struct ShapeModel
{
    int n_points = 0;
    bool with_scale = false;
    Eigen::VectorXd mean;        ///< 3M
    Eigen::MatrixXd modes;       ///< 3M x rank, orthonormal columns
    Eigen::VectorXd eigenvalues; ///< min(cohort - 1, 3M) values, descending, clamped at zero
    std::vector<Similarity> transforms; ///< training shape i was aligned by transforms[i]

    int rank() const { return static_cast<int>(modes.cols()); }
    bool fitted() const { return n_points > 0; }
    CorrespondenceSet mean_shape() const { return unflatten(mean); }
};

/// Aligns the cohort with generalized Procrustes (scale removed only when
/// with_scale is set) and runs PCA with the (n - 1) divisor. Uses the
/// cohort Gram matrix when the cohort is smaller than the coordinate count.
ShapeModel fit_shape_model(std::span<const CorrespondenceSet> sets, bool with_scale = false);

/// Ordinary Procrustes of `y` onto the model mean, using the model's scale setting.
CorrespondenceSet align_to_model(const ShapeModel& model, const CorrespondenceSet& y);

/// First k mode scores of an already aligned shape.
Eigen::VectorXd project(const ShapeModel& model, const CorrespondenceSet& y, int k);

/// mean + sum_i scores(i) * mode_i over the leading scores.size() modes.
CorrespondenceSet reconstruct(const ShapeModel& model, const Eigen::VectorXd& scores);

CorrespondenceSet mode_shape(const ShapeModel& model, int mode, double sd_multiple = 1.5);

/// n shapes with scores drawn from N(0, diag(eigenvalues[0..k))).
std::vector<CorrespondenceSet> sample_shapes(const ShapeModel& model, int k, int n, std::uint64_t seed);

/// Cumulative explained-variance ratio per mode; empty for a zero-variance cohort.
std::vector<double> cumulative_variance(const ShapeModel& model);

/// Warps a reference mesh from its own correspondences to `target`.
TriangleMesh warp_mean_mesh(const TriangleMesh& reference_mesh, const CorrespondenceSet& reference_y,
                            const CorrespondenceSet& target);

struct GroupDifferenceMap
{
    CorrespondenceSet mean_a;
    CorrespondenceSet mean_b;
    Eigen::VectorXd distance; ///< |mean_b(m) - mean_a(m)|
    Eigen::VectorXd signed_distance; ///< projection on the outward normal of mean_a; empty unless requested
};

/// Joint Procrustes over both groups, then per-correspondence distance
/// between the group means. With `signed_normals`, distances are also
/// projected onto outward normals estimated from mean_a's local neighbourhoods.
GroupDifferenceMap group_difference(std::span<const CorrespondenceSet> group_a,
                                    std::span<const CorrespondenceSet> group_b, bool with_scale = false,
                                    bool signed_normals = false);

/// Outward unit normals for an ordered point set from PCA of each point's
/// k nearest neighbours, flipped to point away from the centroid.
Points3<double> estimate_normals(const CorrespondenceSet& y, int k = 10);

void save_shape_model(const std::filesystem::path& path, const ShapeModel& model);
ShapeModel load_shape_model(const std::filesystem::path& path);

} // namespace p2ssm
