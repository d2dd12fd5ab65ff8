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
#include "p2ssm/tps.hpp"

#include <Eigen/Dense>

#include <limits>

namespace p2ssm {

namespace {

double mean_nearest_spacing_sq(const PointCloud& c)
{
    const Eigen::Index n = c.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) {
                best = std::min(best, (c.row(i) - c.row(j)).squaredNorm());
            }
        }
        if (best == 0.0) {
            throw DegenerateControls("thin-plate spline: coincident control points");
        }
        total += std::sqrt(best);
    }
    const double mean = total / static_cast<double>(n);
    return mean * mean;
}

} // namespace

ThinPlateSpline::ThinPlateSpline(const PointCloud& controls, const PointCloud& targets) : controls_(controls)
{
    if (controls.rows() != targets.rows()) {
        throw ShapeError("thin-plate spline: control and target counts differ");
    }
    require_finite(controls, "thin-plate spline");
    require_finite(targets, "thin-plate spline");
    const Eigen::Index n = controls.rows();
    if (n < 4) {
        throw DegenerateControls("thin-plate spline: need at least 4 control points");
    }
    lambda_ = 1e-8 * mean_nearest_spacing_sq(controls);

    // Coplanar (or collinear) controls leave the affine block rank deficient.
    const Eigen::RowVector3d centroid = controls.colwise().mean();
    const Eigen::MatrixXd centred = controls.rowwise() - centroid;
    const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::MatrixXd>(centred).singularValues();
    if (!(sv(2) > 1e-9 * sv(0))) {
        throw DegenerateControls("thin-plate spline: control points are coplanar");
    }

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 4, n + 4);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            A(i, j) = (controls.row(i) - controls.row(j)).norm();
        }
        A(j, j) = lambda_;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, n) = A(n, i) = 1.0;
        for (int d = 0; d < 3; ++d) {
            A(i, n + 1 + d) = A(n + 1 + d, i) = controls(i, d);
        }
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 4, 3);
    rhs.topRows(n) = targets;

    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const Eigen::MatrixXd sol = lu.solve(rhs);
    if (!sol.allFinite()) {
        throw DegenerateControls("thin-plate spline: singular system");
    }
    weights_ = sol.topRows(n);
    affine_ = sol.bottomRows(4);
}

Vec3 ThinPlateSpline::operator()(const Vec3& p) const
{
    Eigen::RowVector3d out = affine_.row(0) + p.transpose() * affine_.bottomRows(3);
    for (Eigen::Index i = 0; i < controls_.rows(); ++i) {
        out += (controls_.row(i) - p.transpose()).norm() * weights_.row(i);
    }
    return out.transpose();
}

PointCloud ThinPlateSpline::apply(const PointCloud& points) const
{
    PointCloud out(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        out.row(i) = (*this)(points.row(i).transpose()).transpose();
    }
    return out;
}

TriangleMesh warp_mesh(const TriangleMesh& mesh, const PointCloud& source, const PointCloud& target)
{
    const ThinPlateSpline tps(source, target);
    TriangleMesh out;
    out.vertices = tps.apply(mesh.vertices);
    out.faces = mesh.faces;
    return out;
}

} // namespace p2ssm
