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
#include "p2ssm/random.hpp"
#include "p2ssm/types.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace testing {

inline p2ssm::PointCloud random_cloud(int n, p2ssm::Rng& rng, double spread = 1.0)
{
    p2ssm::PointCloud p(n, 3);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            p(i, c) = p2ssm::uniform(rng, -spread, spread);
        }
    }
    return p;
}

/// Triangle soup: `faces` triangles over random vertices.
inline p2ssm::TriangleMesh random_mesh(int faces, p2ssm::Rng& rng)
{
    p2ssm::TriangleMesh m;
    m.vertices = random_cloud(faces * 3, rng);
    m.faces.resize(faces, 3);
    for (int f = 0; f < faces; ++f) {
        m.faces.row(f) << 3 * f, 3 * f + 1, 3 * f + 2;
    }
    return m;
}

/// Central differences of a scalar function of a dense matrix.
template <typename M>
M numeric_gradient(const std::function<double(const M&)>& f, const M& x, double h = 1e-5)
{
    M g(x.rows(), x.cols());
    M y = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        y.data()[i] = x.data()[i] + h;
        const double fp = f(y);
        y.data()[i] = x.data()[i] - h;
        const double fm = f(y);
        y.data()[i] = x.data()[i];
        g.data()[i] = (fp - fm) / (2 * h);
    }
    return g;
}

inline p2ssm::PointCloud numeric_gradient(const std::function<double(const p2ssm::PointCloud&)>& f,
                                          const p2ssm::PointCloud& x, double h = 1e-5)
{
    return numeric_gradient<p2ssm::PointCloud>(f, x, h);
}

inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double h = 1e-5)
{
    return numeric_gradient<Eigen::MatrixXd>(f, x, h);
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("p2ssm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testing
