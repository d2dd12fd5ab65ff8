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
#include "oracles.hpp"
#include "support.hpp"

#include "p2ssm/geometry.hpp"

#include <doctest.h>

#include <set>

using namespace p2ssm;

TEST_CASE("knn_indices matches a full sort in three and higher dimensions")
{
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 2 + static_cast<int>(uniform_index(rng, 29));
        const int dim = trial % 2 == 0 ? 3 : 5 + trial % 7;
        Eigen::MatrixXd p(n, dim);
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < dim; ++c) {
                p(i, c) = uniform(rng, -2, 2);
            }
        }
        const int k = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n - 1)));
        const IndexMatrix got = knn_indices(p, k);
        const auto want = oracle::knn(p, k);
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < k; ++r) {
                CHECK(got(i, r) == want[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)]);
            }
        }
    }
}

TEST_CASE("knn_indices breaks distance ties by lower index")
{
    PointCloud p(5, 3);
    p << 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0;
    const IndexMatrix got = knn_indices(p, 4);
    CHECK(got(0, 0) == 1);
    CHECK(got(0, 1) == 2);
    CHECK(got(0, 2) == 3);
    CHECK(got(0, 3) == 4);
    CHECK_THROWS_AS(knn_indices(p, 5), std::invalid_argument);
    CHECK_THROWS_AS(knn_indices(p, 0), std::invalid_argument);
}

TEST_CASE("farthest point sampling matches the quadratic reference")
{
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(uniform_index(rng, 30));
        const PointCloud p = testing::random_cloud(n, rng);
        const int m = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        const int start = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        CHECK(farthest_point_indices(p, m, start) == oracle::fps(p, m, start));
    }
}

TEST_CASE("order_free_start ignores point order")
{
    Rng rng(8);
    const PointCloud p = testing::random_cloud(40, rng);
    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    const PointCloud q = gather_rows(p, perm);
    CHECK(p.row(order_free_start(p)) == q.row(order_free_start(q)));
}

TEST_CASE("normalize puts the farthest point on the unit sphere and inverts exactly")
{
    Rng rng(2);
    const PointCloud p = testing::random_cloud(50, rng, 7.0).rowwise() + Eigen::RowVector3d(3, -4, 9);
    const auto [n, t] = normalize(p);
    CHECK(n.colwise().mean().norm() < 1e-12);
    CHECK(n.rowwise().norm().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((denormalize(n, t) - p).cwiseAbs().maxCoeff() < 1e-12);

    const PointCloud same = PointCloud::Constant(4, 3, 2.5);
    CHECK(normalize(same).second.scale == 1.0);
}

TEST_CASE("subsample draws distinct indices reproducibly")
{
    const auto a = subsample_indices(100, 40, 9);
    const auto b = subsample_indices(100, 40, 9);
    CHECK(a == b);
    CHECK(std::set<int>(a.begin(), a.end()).size() == 40);
    CHECK(subsample_indices(100, 40, 10) != a);
    CHECK_THROWS(subsample_indices(10, 11, 0));
}

TEST_CASE("rotations are proper orthonormal matrices")
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Rotation r = random_rotation(180.0, s);
        CHECK((r.matrix * r.matrix.transpose() - Mat3::Identity()).norm() < 1e-12);
        CHECK(r.matrix.determinant() == doctest::Approx(1.0));
        CHECK((rotation_from_euler(r.euler_xyz_deg).matrix - r.matrix).norm() < 1e-15);
        CHECK(r.euler_xyz_deg.cwiseAbs().maxCoeff() <= 180.0);
    }
}

TEST_CASE("procrustes recovers a known similarity and never reflects")
{
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const PointCloud src = testing::random_cloud(25, rng);
        Similarity truth;
        truth.rotation = random_rotation(180.0, static_cast<std::uint64_t>(trial)).matrix;
        truth.scale = uniform(rng, 0.5, 2.0);
        truth.translation = Vec3(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
        const PointCloud dst = truth.apply(src);

        const Similarity est = procrustes(src, dst, true);
        CHECK((est.apply(src) - dst).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(est.scale == doctest::Approx(truth.scale).epsilon(1e-9));
        CHECK((est.apply_inverse(dst) - src).cwiseAbs().maxCoeff() < 1e-9);

        const Similarity rigid = procrustes(src, dst, false);
        CHECK(rigid.scale == 1.0);
        CHECK(rigid.rotation.determinant() == doctest::Approx(1.0));
    }
    // A mirrored target still gets a proper rotation.
    const PointCloud src = testing::random_cloud(10, rng);
    PointCloud mirrored = src;
    mirrored.col(0) *= -1.0;
    CHECK(procrustes(src, mirrored, false).rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("generalized procrustes reports transforms consistent with its output")
{
    Rng rng(4);
    const PointCloud base = testing::random_cloud(30, rng);
    std::vector<CorrespondenceSet> sets;
    for (int i = 0; i < 6; ++i) {
        Similarity s;
        s.rotation = random_rotation(90.0, static_cast<std::uint64_t>(100 + i)).matrix;
        s.scale = 1.0 + 0.1 * i;
        s.translation = Vec3::Constant(i);
        sets.push_back(s.apply(base + 0.01 * testing::random_cloud(30, rng)));
    }
    for (bool with_scale : {false, true}) {
        const GpaResult g = generalized_procrustes(sets, with_scale);
        REQUIRE(g.aligned.size() == sets.size());
        for (std::size_t i = 0; i < sets.size(); ++i) {
            CHECK((g.transforms[i].apply(sets[i]) - g.aligned[i]).cwiseAbs().maxCoeff() < 1e-9);
            CHECK(g.aligned[i].colwise().mean().norm() < 1e-9);
            if (!with_scale) {
                CHECK(g.transforms[i].scale == 1.0);
            }
        }
    }
}

TEST_CASE("rigid perturbation round-trips")
{
    Rng rng(6);
    const PointCloud p = testing::random_cloud(20, rng);
    const auto [moved, t] = perturb_rigid(p, 45.0, 3.0, 17);
    CHECK((t.apply_inverse(moved) - p).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.translation.cwiseAbs().maxCoeff() <= 3.0);
    CHECK(rmse(p, p) == 0.0);
}
