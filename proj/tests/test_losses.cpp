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
#include "p2ssm/losses.hpp"

#include <doctest.h>

using namespace p2ssm;

TEST_CASE("chamfer and mapping_error agree with brute force")
{
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const int na = 1 + static_cast<int>(uniform_index(rng, 30));
        const int nb = 1 + static_cast<int>(uniform_index(rng, 30));
        const PointCloud a = testing::random_cloud(na, rng);
        const PointCloud b = testing::random_cloud(nb, rng);
        CHECK(std::abs(chamfer(a, b) - oracle::chamfer(a, b)) < 1e-9);
        CHECK(chamfer(a, b) == doctest::Approx(chamfer(b, a)).epsilon(1e-12));

        if (na >= 2) {
            const PointCloud y2 = testing::random_cloud(na, rng);
            const int r = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(na - 1)));
            CHECK(std::abs(mapping_error(a, y2, r) - oracle::mapping_error(a, y2, r)) < 1e-9);
        }
    }
}

TEST_CASE("loss invariants")
{
    Rng rng(22);
    const PointCloud a = testing::random_cloud(15, rng);
    CHECK(chamfer(a, a) == 0.0);
    const PointCloud b0 = testing::random_cloud(15, rng);
    CHECK(mapping_error(a, b0.rowwise() + Eigen::RowVector3d(4, -2, 1), 3) ==
          doctest::Approx(mapping_error(a, b0, 3)).epsilon(1e-12));
    CHECK(mapping_error(a, PointCloud::Constant(15, 3, 4.0), 3) == 0.0);
    CHECK(consistency_mse(a, a) == 0.0);
    CHECK_THROWS_AS(chamfer(a, PointCloud(0, 3)), InvalidInput);
    CHECK_THROWS_AS(mapping_error(a, a, 15), std::invalid_argument);
    CHECK_THROWS_AS(nll_class_loss(Eigen::VectorXd::Zero(2), 2), std::out_of_range);

    // Chamfer gradient is blind to which points the other side is matched to.
    const PointCloud b = testing::random_cloud(12, rng);
    PointCloud ga;
    chamfer(a, b, &ga);
    CHECK(ga.allFinite());
}

namespace {

// Each point nudged to avoid nearest-neighbour ties under the h perturbation.
bool has_near_ties(const PointCloud& a, const PointCloud& b)
{
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        std::vector<double> d;
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            d.push_back((a.row(i) - b.row(j)).norm());
        }
        std::sort(d.begin(), d.end());
        if (d.size() > 1 && d[1] - d[0] < 1e-3) {
            return true;
        }
    }
    return false;
}

} // namespace

TEST_CASE("analytic loss gradients match central differences")
{
    Rng rng(23);
    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 20; ++trial) {
        const PointCloud y = testing::random_cloud(10, rng);
        const PointCloud y2 = testing::random_cloud(10, rng);
        const PointCloud full = testing::random_cloud(25, rng);
        if (has_near_ties(y, full) || has_near_ties(full, y) || has_near_ties(y, y) || has_near_ties(y2, y2)) {
            continue;
        }
        ++checked;

        PointCloud g;
        chamfer(y, full, &g);
        CHECK(testing::relative_error(g, testing::numeric_gradient([&](const PointCloud& x) { return chamfer(x, full); }, y)) <
              1e-4);

        CorrespondenceSet g1, g2;
        mapping_error(y, y2, 4, &g1, &g2);
        CHECK(testing::relative_error(
                  g1, testing::numeric_gradient([&](const PointCloud& x) { return mapping_error(x, y2, 4); }, y)) < 1e-4);
        CHECK(testing::relative_error(
                  g2, testing::numeric_gradient([&](const PointCloud& x) { return mapping_error(y, x, 4); }, y2)) < 1e-4);
    }
    CHECK(checked >= 10);
}

TEST_CASE("combined losses have correct gradients for every batch member")
{
    Rng rng(24);
    LossConfig cfg;
    cfg.alpha = 0.3;
    cfg.me_neighbors = 3;
    cfg.consist_weight = 0.7;
    const std::vector<PointCloud> full{testing::random_cloud(20, rng), testing::random_cloud(20, rng),
                                       testing::random_cloud(20, rng)};
    std::vector<CorrespondenceSet> pred{testing::random_cloud(10, rng), testing::random_cloud(10, rng),
                                       testing::random_cloud(10, rng)};
    std::vector<CorrespondenceSet> rot;
    for (const auto& p : pred) {
        rot.push_back(p + 0.05 * testing::random_cloud(10, rng));
    }

    std::vector<CorrespondenceSet> g;
    const LossTerms t = point2ssm_loss(full, pred, cfg, &g);
    CHECK(t.total == doctest::Approx(t.cd + cfg.alpha * t.me));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto f = [&](const PointCloud& x) {
            auto p = pred;
            p[i] = x;
            return point2ssm_loss(full, p, cfg).total;
        };
        CHECK(testing::relative_error(g[i], testing::numeric_gradient(f, pred[i])) < 1e-4);
    }

    std::vector<CorrespondenceSet> ga, gb;
    const LossTerms pp = point2ssm_pp_loss(full, pred, rot, cfg, &ga, &gb);
    CHECK(pp.consist > 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto fa = [&](const PointCloud& x) {
            auto p = pred;
            p[i] = x;
            return point2ssm_pp_loss(full, p, rot, cfg).total;
        };
        const auto fb = [&](const PointCloud& x) {
            auto r = rot;
            r[i] = x;
            return point2ssm_pp_loss(full, pred, r, cfg).total;
        };
        CHECK(testing::relative_error(ga[i], testing::numeric_gradient(fa, pred[i])) < 1e-4);
        CHECK(testing::relative_error(gb[i], testing::numeric_gradient(fb, rot[i])) < 1e-4);
    }

    // With zero consistency weight the two-branch loss is the sum of two single-branch losses.
    cfg.consist_weight = 0.0;
    CHECK(point2ssm_pp_loss(full, pred, rot, cfg).total ==
          doctest::Approx(point2ssm_loss(full, pred, cfg).total + point2ssm_loss(full, rot, cfg).total));
}

TEST_CASE("fps_chamfer measures against the farthest point subsample")
{
    Rng rng(25);
    const PointCloud full = testing::random_cloud(60, rng);
    const PointCloud down = farthest_point_sample(full, 12);
    CHECK(fps_chamfer(full, down) == 0.0);
    CHECK_THROWS(fps_chamfer(down, full));
}
