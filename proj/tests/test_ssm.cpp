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
#include "support.hpp"

#include "p2ssm/losses.hpp"
#include "p2ssm/metrics.hpp"
#include "p2ssm/ssm.hpp"
#include "p2ssm/tps.hpp"

#include <doctest.h>

using namespace p2ssm;

namespace {

// Cohort spanned by a few fixed deformation fields plus small noise, each
// shape placed at a random pose.
std::vector<CorrespondenceSet> cohort(int n, int m, Rng& rng, double noise = 0.0)
{
    const PointCloud base = testing::random_cloud(m, rng);
    const PointCloud d1 = testing::random_cloud(m, rng, 0.3);
    const PointCloud d2 = testing::random_cloud(m, rng, 0.1);
    std::vector<CorrespondenceSet> out;
    for (int i = 0; i < n; ++i) {
        PointCloud y = base + normal(rng) * d1 + normal(rng) * d2;
        if (noise > 0) {
            y += testing::random_cloud(m, rng, noise);
        }
        Similarity s;
        s.rotation = random_rotation(40.0, static_cast<std::uint64_t>(i)).matrix;
        s.translation = Vec3(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
        out.push_back(s.apply(y));
    }
    return out;
}

} // namespace

TEST_CASE("thin-plate spline interpolates its controls and reproduces affine maps")
{
    Rng rng(51);
    const PointCloud c = testing::random_cloud(30, rng);
    const PointCloud t = c + testing::random_cloud(30, rng, 0.1);
    const ThinPlateSpline tps(c, t);
    // The ridge term trades exact interpolation for stability; it is small.
    CHECK((tps.apply(c) - t).cwiseAbs().maxCoeff() < 5e-2);

    Mat3 a;
    a << 1.1, 0.2, 0.0, -0.1, 0.9, 0.3, 0.0, 0.1, 1.2;
    const Vec3 b(0.5, -1.0, 2.0);
    const PointCloud affine = (c * a.transpose()).rowwise() + b.transpose();
    const ThinPlateSpline lin(c, affine);
    const PointCloud q = testing::random_cloud(20, rng);
    const PointCloud want = (q * a.transpose()).rowwise() + b.transpose();
    CHECK((lin.apply(q) - want).cwiseAbs().maxCoeff() < 1e-6);

    PointCloud flat = c;
    flat.col(2).setZero();
    CHECK_THROWS_AS(ThinPlateSpline(flat, t), DegenerateControls);
    CHECK_THROWS_AS(ThinPlateSpline(c.topRows(3), t.topRows(3)), DegenerateControls);
    PointCloud dup = c;
    dup.row(1) = dup.row(0);
    CHECK_THROWS_AS(ThinPlateSpline(dup, t), DegenerateControls);
}

TEST_CASE("shape model metrics are mutually coherent")
{
    Rng rng(52);
    const auto sets = cohort(12, 40, rng, 0.01);
    const ShapeModel model = fit_shape_model(sets);
    CHECK(model.rank() == 11);
    CHECK((model.modes.transpose() * model.modes - Eigen::MatrixXd::Identity(11, 11)).norm() < 1e-9);
    for (Eigen::Index i = 1; i < model.eigenvalues.size(); ++i) {
        CHECK(model.eigenvalues[i] <= model.eigenvalues[i - 1]);
    }

    const Compactness comp = compactness(model);
    CHECK(comp.curve.back() == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 1; i < comp.curve.size(); ++i) {
        CHECK(comp.curve[i] >= comp.curve[i - 1]);
    }
    CHECK(comp.modes_for_95 >= 1);
    CHECK(comp.modes_for_95 <= 3);

    std::vector<CorrespondenceSet> aligned;
    for (const auto& s : sets) {
        aligned.push_back(align_to_model(model, s));
    }
    double prev = 1e300;
    for (int k = 0; k <= model.rank(); ++k) {
        const double g = generalization(model, aligned, k);
        CHECK(g <= prev + 1e-12);
        prev = g;
    }
    // Training shapes are reconstructed exactly at full rank.
    for (const auto& a : aligned) {
        CHECK(correspondence_mse(reconstruct(model, project(model, a, model.rank())), a) < 1e-6);
    }

    // With zero modes every draw is the mean.
    double best = 1e300;
    for (const auto& a : aligned) {
        best = std::min(best, chamfer(model.mean_shape(), a));
    }
    CHECK(specificity(model, aligned, 0, 5, 1) == doctest::Approx(best).epsilon(1e-9));
    CHECK(specificity(model, aligned, 2, 50, 3) == specificity(model, aligned, 2, 50, 3));

    const auto cum = cumulative_variance(model);
    CHECK(cum == comp.curve);

    const CorrespondenceSet plus = mode_shape(model, 0, 2.0);
    const Eigen::VectorXd s = project(model, plus, 1);
    CHECK(s[0] == doctest::Approx(2.0 * std::sqrt(model.eigenvalues[0])).epsilon(1e-9));
}

TEST_CASE("a cohort of identical shapes yields a zero-variance model")
{
    Rng rng(53);
    const PointCloud base = testing::random_cloud(20, rng);
    const std::vector<CorrespondenceSet> same(5, base);
    const ShapeModel model = fit_shape_model(same);
    CHECK(model.eigenvalues.cwiseAbs().maxCoeff() < 1e-20);
    CHECK(compactness(model).modes_for_95 == 0);
}

TEST_CASE("shape models and group differences")
{
    Rng rng(54);
    const auto a = cohort(8, 30, rng);
    const ShapeModel model = fit_shape_model(a, true);
    const auto dir = testing::scratch_dir("ssm");
    save_shape_model(dir / "m.txt", model);
    const ShapeModel back = load_shape_model(dir / "m.txt");
    CHECK(back.with_scale);
    CHECK(back.n_points == 30);
    CHECK((back.mean - model.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back.modes - model.modes).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back.eigenvalues - model.eigenvalues).cwiseAbs().maxCoeff() < 1e-12);

    std::vector<CorrespondenceSet> b;
    for (const auto& y : a) {
        b.push_back(y * 1.0);
    }
    const GroupDifferenceMap same = group_difference(a, b);
    CHECK(same.distance.maxCoeff() < 1e-9);
    CHECK_THROWS(fit_shape_model(std::span<const CorrespondenceSet>(a.data(), 1)));
}
