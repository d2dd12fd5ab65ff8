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

namespace p2ssm {

/// Three-dimensional thin-plate spline with kernel U(r) = r and an affine
/// part. Maps `controls` onto `targets`; a small ridge term proportional to
/// the squared mean nearest-control spacing keeps the solve well posed.
///
/// Throws DegenerateControls when controls coincide, when fewer than four
/// are given, or when they are coplanar (the affine part is then undefined).
class ThinPlateSpline
{
public:
    ThinPlateSpline(const PointCloud& controls, const PointCloud& targets);

    Vec3 operator()(const Vec3& p) const;
    PointCloud apply(const PointCloud& points) const;

    double regularization() const { return lambda_; }
    const PointCloud& controls() const { return controls_; }

private:
    PointCloud controls_;
    Eigen::MatrixXd weights_; // n x 3 kernel weights
    Eigen::Matrix<double, 4, 3> affine_;
    double lambda_ = 0.0;
};

/// Moves every vertex of `mesh` through the spline taking `source` to
/// `target`. Faces are copied unchanged.
TriangleMesh warp_mesh(const TriangleMesh& mesh, const PointCloud& source, const PointCloud& target);

} // namespace p2ssm
