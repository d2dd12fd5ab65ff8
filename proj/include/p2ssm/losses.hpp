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

#include <span>
#include <vector>

namespace p2ssm {

struct LossConfig
{
    double alpha = 0.1;          ///< weight of the mapping-error regulariser
    double consist_weight = 1.0; ///< weight of the two-branch consistency term
    int me_neighbors = 10;       ///< neighbourhood size used inside mapping_error
    int batch_size = 4;
};

/// Nearest neighbour of every row of `query` among rows of `ref`; ties go to
/// the lower index. Returns indices and squared distances.
struct NearestNeighbors
{
    std::vector<int> index;
    Eigen::VectorXd squared_distance;
};

NearestNeighbors nearest_neighbors(const PointCloud& query, const PointCloud& ref);

/// Symmetric chamfer distance in squared units: mean squared nearest-neighbour
/// distance a->b plus b->a. Optional outputs receive dCD/da and dCD/db.
double chamfer(const PointCloud& a, const PointCloud& b, PointCloud* grad_a = nullptr,
               PointCloud* grad_b = nullptr);

/// Neighbourhood consistency of y2 measured on the R-neighbourhoods of y1,
/// weighted by exp(-|y1_m - y1_r|^2). Not symmetric in its arguments.
double mapping_error(const CorrespondenceSet& y1, const CorrespondenceSet& y2, int R,
                     CorrespondenceSet* grad_y1 = nullptr, CorrespondenceSet* grad_y2 = nullptr);

/// Mean over points of the squared distance between matched rows.
double consistency_mse(const CorrespondenceSet& a, const CorrespondenceSet& b,
                       CorrespondenceSet* grad_a = nullptr, CorrespondenceSet* grad_b = nullptr);

struct LossTerms
{
    double total = 0.0;
    double cd = 0.0;      ///< mean chamfer of the first (unrotated) branch
    double me = 0.0;      ///< pairwise mapping-error term of the first branch, unweighted
    double consist = 0.0; ///< mean consistency MSE (zero for single-branch losses)
};

/// Batch mean chamfer against the full clouds plus alpha times the pairwise
/// mapping-error term. Each unordered pair contributes ME(i,j) + ME(j,i),
/// normalised by (B-1)^2. For B = 1 the pairwise term is zero.
LossTerms point2ssm_loss(std::span<const PointCloud> full_clouds, std::span<const CorrespondenceSet> predictions,
                         const LossConfig& cfg, std::vector<CorrespondenceSet>* grads = nullptr);

/// Two-branch loss: point2ssm_loss on both branches plus consist_weight times
/// the batch mean consistency MSE. `rotated_branch` must already be mapped
/// back by the inverse augmentation rotation.
LossTerms point2ssm_pp_loss(std::span<const PointCloud> full_clouds, std::span<const CorrespondenceSet> predictions,
                            std::span<const CorrespondenceSet> rotated_branch, const LossConfig& cfg,
                            std::vector<CorrespondenceSet>* grads = nullptr,
                            std::vector<CorrespondenceSet>* rotated_grads = nullptr);

/// Chamfer against a farthest-point downsample of `full` with as many points
/// as `y`.
double fps_chamfer(const PointCloud& full, const CorrespondenceSet& y, CorrespondenceSet* grad_y = nullptr);

/// -log p(label).
double nll_class_loss(const Eigen::VectorXd& log_probs, int label);

} // namespace p2ssm
