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
#include "p2ssm/geometry.hpp"
#include "p2ssm/random.hpp"

#include <Eigen/SVD>

#include <array>

#include <cmath>
#include <limits>

namespace p2ssm {

std::pair<PointCloud, NormTransform> normalize(const PointCloud& cloud)
{
    if (cloud.rows() < 1) {
        throw InvalidInput("normalize: empty cloud");
    }
    require_finite(cloud, "normalize");
    NormTransform t;
    t.centroid = cloud.colwise().mean().transpose();
    PointCloud centred = cloud.rowwise() - t.centroid.transpose();
    const double r = std::sqrt(centred.rowwise().squaredNorm().maxCoeff());
    t.scale = r > 0.0 ? r : 1.0;
    centred /= t.scale;
    return {std::move(centred), t};
}

PointCloud denormalize(const PointCloud& points, const NormTransform& t)
{
    if (!(t.scale > 0.0)) {
        throw InvalidInput("denormalize: scale must be positive");
    }
    PointCloud out = points * t.scale;
    out.rowwise() += t.centroid.transpose();
    return out;
}

std::vector<int> subsample_indices(Eigen::Index count, int n, std::uint64_t seed)
{
    if (n < 1 || n > count) {
        throw std::invalid_argument("subsample: need 1 <= n <= point count");
    }
    std::vector<int> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    // Partial Fisher-Yates: the first n slots end up a uniform n-subset.
    for (int i = 0; i < n; ++i) {
        const auto j = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(count - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(n));
    return idx;
}

PointCloud subsample(const PointCloud& cloud, int n, std::uint64_t seed)
{
    const auto idx = subsample_indices(cloud.rows(), n, seed);
    return gather_rows(cloud, idx);
}

std::vector<int> farthest_point_indices(const PointCloud& cloud, int n, int start)
{
    const Eigen::Index count = cloud.rows();
    if (n < 1 || n > count) {
        throw std::invalid_argument("farthest_point_sample: need 1 <= n <= point count");
    }
    if (start < 0 || start >= count) {
        throw std::invalid_argument("farthest_point_sample: start index out of range");
    }
    std::vector<int> picked;
    picked.reserve(static_cast<std::size_t>(n));
    Eigen::VectorXd min_d2 = Eigen::VectorXd::Constant(count, std::numeric_limits<double>::infinity());
    int current = start;
    for (int s = 0; s < n; ++s) {
        picked.push_back(current);
        const Eigen::RowVector3d p = cloud.row(current);
        int best = 0;
        double best_d = -1.0;
        for (Eigen::Index i = 0; i < count; ++i) {
            const double d = (cloud.row(i) - p).squaredNorm();
            if (d < min_d2[i]) {
                min_d2[i] = d;
            }
            if (min_d2[i] > best_d) {
                best_d = min_d2[i];
                best = static_cast<int>(i);
            }
        }
        current = best;
    }
    return picked;
}

PointCloud farthest_point_sample(const PointCloud& cloud, int n, int start)
{
    const auto idx = farthest_point_indices(cloud, n, start);
    return gather_rows(cloud, idx);
}

int order_free_start(const PointCloud& cloud)
{
    if (cloud.rows() == 0) {
        throw InvalidInput("order_free_start: empty cloud");
    }
    const Eigen::RowVector3d c = cloud.colwise().mean();
    const auto key = [&](Eigen::Index k) { return std::array{cloud(k, 0), cloud(k, 1), cloud(k, 2)}; };
    int best = 0;
    double best_d = -1.0;
    for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
        const double d = (cloud.row(i) - c).squaredNorm();
        if (d > best_d || (d == best_d && key(i) < key(best))) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

Rotation rotation_from_euler(const Vec3& euler_xyz_deg)
{
    constexpr double deg = 3.14159265358979323846 / 180.0;
    const Mat3 rx = Eigen::AngleAxisd(euler_xyz_deg.x() * deg, Vec3::UnitX()).toRotationMatrix();
    const Mat3 ry = Eigen::AngleAxisd(euler_xyz_deg.y() * deg, Vec3::UnitY()).toRotationMatrix();
    const Mat3 rz = Eigen::AngleAxisd(euler_xyz_deg.z() * deg, Vec3::UnitZ()).toRotationMatrix();
    return {rz * ry * rx, euler_xyz_deg};
}

Rotation random_rotation(double max_deg, std::uint64_t seed)
{
    if (!(max_deg >= 0.0)) {
        throw std::invalid_argument("random_rotation: max_deg must be >= 0");
    }
    Rng rng(seed);
    Vec3 angles;
    for (int a = 0; a < 3; ++a) {
        angles[a] = uniform(rng, -max_deg, max_deg);
    }
    return rotation_from_euler(angles);
}

PointCloud Similarity::apply(const PointCloud& points) const
{
    PointCloud out = scale * (points * rotation.transpose());
    out.rowwise() += translation.transpose();
    return out;
}

PointCloud Similarity::apply_inverse(const PointCloud& points) const
{
    PointCloud out = points.rowwise() - translation.transpose();
    return (out * rotation) / scale;
}

Similarity Similarity::compose(const Similarity& first) const
{
    Similarity c;
    c.scale = scale * first.scale;
    c.rotation = rotation * first.rotation;
    c.translation = scale * (rotation * first.translation) + translation;
    return c;
}

Similarity procrustes(const PointCloud& source, const PointCloud& target, bool with_scale)
{
    if (source.rows() != target.rows() || source.rows() < 1) {
        throw std::invalid_argument("procrustes: point counts differ or are zero");
    }
    const Vec3 cs = source.colwise().mean().transpose();
    const Vec3 ct = target.colwise().mean().transpose();
    const PointCloud a = source.rowwise() - cs.transpose();
    const PointCloud b = target.rowwise() - ct.transpose();

    const Mat3 h = a.transpose() * b;
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
        d(2, 2) = -1.0;
    }
    Similarity s;
    s.rotation = svd.matrixV() * d * svd.matrixU().transpose();
    if (with_scale) {
        const double var = a.squaredNorm();
        s.scale = var > 0.0 ? (svd.singularValues().asDiagonal() * d).trace() / var : 1.0;
    }
    s.translation = ct - s.scale * (s.rotation * cs);
    return s;
}

namespace {

double centroid_size(const PointCloud& centred)
{
    return std::sqrt(centred.squaredNorm());
}

} // namespace

GpaResult generalized_procrustes(std::span<const CorrespondenceSet> sets, bool with_scale,
                                 double tolerance, int max_iterations)
{
    if (sets.size() < 2) {
        throw std::invalid_argument("generalized_procrustes: need at least two sets");
    }
    const Eigen::Index m = sets[0].rows();
    for (const auto& s : sets) {
        if (s.rows() != m) {
            throw std::invalid_argument("generalized_procrustes: sets differ in point count");
        }
        require_finite(s, "generalized_procrustes");
    }

    GpaResult r;
    r.aligned.reserve(sets.size());
    r.transforms.reserve(sets.size());
    for (const auto& s : sets) {
        Similarity t;
        t.translation = -s.colwise().mean().transpose();
        if (with_scale) {
            const double size = centroid_size(s.rowwise() + t.translation.transpose());
            if (size > 0.0) {
                t.scale = 1.0 / size;
                t.translation *= t.scale;
            }
        }
        r.aligned.push_back(t.apply(s));
        r.transforms.push_back(t);
    }

    r.mean = r.aligned[0];
    for (int it = 0; it < max_iterations; ++it) {
        for (std::size_t i = 0; i < r.aligned.size(); ++i) {
            const Similarity step = procrustes(r.aligned[i], r.mean, with_scale);
            r.aligned[i] = step.apply(r.aligned[i]);
            r.transforms[i] = step.compose(r.transforms[i]);
        }
        CorrespondenceSet next = CorrespondenceSet::Zero(m, 3);
        for (const auto& a : r.aligned) {
            next += a;
        }
        next /= static_cast<double>(r.aligned.size());
        next.rowwise() -= next.colwise().mean();
        if (with_scale) {
            const double size = centroid_size(next);
            if (size > 0.0) {
                next /= size;
            }
        }
        const double displacement = rmse(next, r.mean);
        r.mean = std::move(next);
        r.iterations = it + 1;
        if (displacement < tolerance) {
            break;
        }
    }
    return r;
}

PointCloud RigidPerturbation::apply(const PointCloud& points) const
{
    PointCloud out = points * rotation.matrix.transpose();
    out.rowwise() += translation.transpose();
    return out;
}

PointCloud RigidPerturbation::apply_inverse(const PointCloud& points) const
{
    const PointCloud shifted = points.rowwise() - translation.transpose();
    return shifted * rotation.matrix;
}

std::pair<PointCloud, RigidPerturbation> perturb_rigid(const PointCloud& cloud, double max_deg,
                                                       double max_trans, std::uint64_t seed)
{
    if (!(max_deg >= 0.0) || !(max_trans >= 0.0)) {
        throw std::invalid_argument("perturb_rigid: bounds must be >= 0");
    }
    RigidPerturbation p;
    p.rotation = random_rotation(max_deg, derive_seed(seed, 0));
    Rng rng(derive_seed(seed, 1));
    for (int a = 0; a < 3; ++a) {
        p.translation[a] = uniform(rng, -max_trans, max_trans);
    }
    return {p.apply(cloud), p};
}

double rmse(const PointCloud& a, const PointCloud& b)
{
    if (a.rows() != b.rows() || a.rows() == 0) {
        throw std::invalid_argument("rmse: point counts differ or are zero");
    }
    return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

} // namespace p2ssm
