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

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace p2ssm {

/// Centroid and isotropic scale removed by normalize().
struct NormTransform
{
    Vec3 centroid = Vec3::Zero();
    double scale = 1.0;
};

/// Centres the cloud at its centroid and scales it so the farthest point has
/// unit norm. A cloud whose points all coincide keeps scale 1.
std::pair<PointCloud, NormTransform> normalize(const PointCloud& cloud);

/// Inverse of normalize(): p * scale + centroid.
PointCloud denormalize(const PointCloud& points, const NormTransform& t);

/// Indices of n distinct points drawn uniformly without replacement.
std::vector<int> subsample_indices(Eigen::Index count, int n, std::uint64_t seed);

PointCloud subsample(const PointCloud& cloud, int n, std::uint64_t seed);

/// Greedy max-min selection seeded at index `start`. Ties pick the lower index.
std::vector<int> farthest_point_indices(const PointCloud& cloud, int n, int start = 0);

PointCloud farthest_point_sample(const PointCloud& cloud, int n, int start = 0);

/// Seed for farthest point sampling that does not depend on point order: the
/// point farthest from the centroid, ties going to the lexicographically
/// smallest coordinates.
int order_free_start(const PointCloud& cloud);

/// Gathers rows of `points` in the order given by `indices`.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>
gather_rows(const Eigen::MatrixBase<Derived>& points, std::span<const int> indices)
{
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> out(
        static_cast<Eigen::Index>(indices.size()), points.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = points.row(indices[i]);
    }
    return out;
}

struct Rotation
{
    Mat3 matrix = Mat3::Identity();
    Vec3 euler_xyz_deg = Vec3::Zero(); ///< Applied about x first, then y, then z.
};

/// R = Rz * Ry * Rx for the given angles in degrees.
Rotation rotation_from_euler(const Vec3& euler_xyz_deg);

/// Each Euler angle uniform in [-max_deg, max_deg].
Rotation random_rotation(double max_deg, std::uint64_t seed);

/// Applies p -> R p to every row.
template <typename Derived>
Points3<typename Derived::Scalar> rotate(const Eigen::MatrixBase<Derived>& points,
                                         const Eigen::Matrix<typename Derived::Scalar, 3, 3>& R)
{
    return points * R.transpose();
}

/// Row i holds the k nearest other rows of `points` by Euclidean distance,
/// nearest first. Ties go to the lower index. Works for any row dimension;
/// three-column inputs use exact coordinate differences.
template <typename Derived>
IndexMatrix knn_indices(const Eigen::MatrixBase<Derived>& points, int k)
{
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = points.rows();
    if (k < 1 || k >= n) {
        throw std::invalid_argument("knn_indices: need 1 <= k < point count");
    }
    // Row-major so each query's distances are contiguous.
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> d2(n, n);
    if (points.cols() <= 3) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                d2(i, j) = (points.row(i) - points.row(j)).squaredNorm();
            }
        }
    } else {
        const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p = points;
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sq = p.rowwise().squaredNorm();
        d2.noalias() = Scalar(-2) * p * p.transpose();
        d2.colwise() += sq;
        d2.rowwise() += sq.transpose();
    }

    // Bounded insertion keeps the k best sorted by (distance, index).
    IndexMatrix out(n, k);
    std::vector<Scalar> best_d(static_cast<std::size_t>(k));
    std::vector<int> best_i(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar* row = d2.row(i).data();
        int filled = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            const Scalar d = row[j];
            // Candidates arrive in increasing index, so ties never displace.
            if (filled == k && !(d < best_d[static_cast<std::size_t>(k - 1)])) {
                continue;
            }
            int pos = filled < k ? filled++ : k - 1;
            while (pos > 0 && d < best_d[static_cast<std::size_t>(pos - 1)]) {
                best_d[static_cast<std::size_t>(pos)] = best_d[static_cast<std::size_t>(pos - 1)];
                best_i[static_cast<std::size_t>(pos)] = best_i[static_cast<std::size_t>(pos - 1)];
                --pos;
            }
            best_d[static_cast<std::size_t>(pos)] = d;
            best_i[static_cast<std::size_t>(pos)] = static_cast<int>(j);
        }
        for (int r = 0; r < k; ++r) {
            out(i, r) = best_i[static_cast<std::size_t>(r)];
        }
    }
    return out;
}

/// p -> scale * R p + translation.
struct Similarity
{
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    PointCloud apply(const PointCloud& points) const;
    PointCloud apply_inverse(const PointCloud& points) const;
    /// (*this) after `first`.
    Similarity compose(const Similarity& first) const;
};

/// Least-squares similarity (or rigid, when with_scale is false) taking
/// `source` onto `target` with matched rows. Reflections are excluded.
Similarity procrustes(const PointCloud& source, const PointCloud& target, bool with_scale);

struct GpaResult
{
    std::vector<CorrespondenceSet> aligned;
    std::vector<Similarity> transforms; ///< aligned[i] == transforms[i].apply(input[i])
    CorrespondenceSet mean;
    int iterations = 0;
};

/// Iterative alignment of every set to the evolving mean. Translation and
/// rotation are always removed; scale only when with_scale is set, in which
/// case the mean is held at unit centroid size.
GpaResult generalized_procrustes(std::span<const CorrespondenceSet> sets, bool with_scale,
                                 double tolerance = 1e-7, int max_iterations = 100);

struct RigidPerturbation
{
    Rotation rotation;
    Vec3 translation = Vec3::Zero();

    /// p -> R p + t
    PointCloud apply(const PointCloud& points) const;
    PointCloud apply_inverse(const PointCloud& points) const;
};

/// Random rotation (|angle| <= max_deg per axis) about the origin followed by
/// a translation with each component uniform in [-max_trans, max_trans].
std::pair<PointCloud, RigidPerturbation> perturb_rigid(const PointCloud& cloud, double max_deg,
                                                       double max_trans, std::uint64_t seed);

/// Root mean squared point distance between matched rows.
double rmse(const PointCloud& a, const PointCloud& b);

} // namespace p2ssm
