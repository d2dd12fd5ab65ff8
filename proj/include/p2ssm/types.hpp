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

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2ssm {

/// N x 3 block of points, one point per row.
template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

/// Unordered point set in millimetres. Row order carries no meaning.
using PointCloud = Points3<double>;

/// Ordered set of M correspondence points. Row m is semantically
/// consistent across shapes produced by the same model.
using CorrespondenceSet = Points3<double>;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Error kinds. All derive from standard exceptions so callers can catch broadly.

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedOperation : std::logic_error {
    using std::logic_error::logic_error;
};

struct DegenerateControls : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Throws InvalidInput if any coordinate is NaN or infinite.
template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what)
{
    if (!m.allFinite()) {
        throw InvalidInput(std::string(what) + ": non-finite coordinate");
    }
}

/// Flattens M x 3 points into a 3M vector laid out as x0 y0 z0 x1 y1 z1 ...
inline Eigen::VectorXd flatten(const Points3<double>& y)
{
    Eigen::VectorXd v(y.rows() * 3);
    for (Eigen::Index m = 0; m < y.rows(); ++m) {
        v.segment<3>(3 * m) = y.row(m).transpose();
    }
    return v;
}

inline Points3<double> unflatten(const Eigen::VectorXd& v)
{
    if (v.size() % 3 != 0) {
        throw ShapeError("unflatten: length is not a multiple of 3");
    }
    Points3<double> y(v.size() / 3, 3);
    for (Eigen::Index m = 0; m < y.rows(); ++m) {
        y.row(m) = v.segment<3>(3 * m).transpose();
    }
    return y;
}

} // namespace p2ssm
