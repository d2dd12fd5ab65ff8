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

#include "p2ssm/datasets.hpp"
#include "p2ssm/metrics.hpp"

#include <doctest.h>

using namespace p2ssm;

namespace {

// A predictor that commutes with rigid motions and ignores point order:
// farthest point sampling from an order-free seed.
CorrespondenceSet fps_predict(const PointCloud& cloud, int m)
{
    return farthest_point_sample(cloud, m, order_free_start(cloud));
}

} // namespace

TEST_CASE("summaries use interpolated quartiles and sample deviation")
{
    const Summary s = summarize({4.0, 1.0, 3.0, 2.0});
    CHECK(s.count == 4);
    CHECK(s.mean == 2.5);
    CHECK(s.min == 1.0);
    CHECK(s.max == 4.0);
    CHECK(s.q1 == doctest::Approx(1.75));
    CHECK(s.median == doctest::Approx(2.5));
    CHECK(s.q3 == doctest::Approx(3.25));
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(summarize({7.0}).std == 0.0);
    CHECK(summarize({}).count == 0);
}

TEST_CASE("correspondence mse against a direct sum")
{
    Rng rng(61);
    const PointCloud a = testing::random_cloud(9, rng);
    const PointCloud b = testing::random_cloud(9, rng);
    double want = 0.0;
    for (int i = 0; i < 9; ++i) {
        want += (a.row(i) - b.row(i)).squaredNorm();
    }
    CHECK(correspondence_mse(a, b) == doctest::Approx(want / 9).epsilon(1e-14));
    CHECK_THROWS(correspondence_mse(a, b.topRows(8)));
}

TEST_CASE("an equivariant predictor has zero rotation error")
{
    Rng rng(62);
    const PointCloud cloud = testing::random_cloud(200, rng);
    const Predictor p = [](const PointCloud& c) { return fps_predict(c, 16); };
    for (std::uint64_t s = 0; s < 5; ++s) {
        CHECK(rotation_equivariance_mse(p, cloud, s) < 1e-20);
    }
    CHECK(sampling_invariance_mse(p, cloud, 50, 1, 1) == 0.0);
    CHECK(sampling_invariance_mse(p, cloud, 50, 1, 2) > 0.0);
    CHECK_THROWS(sampling_invariance_mse(p, cloud, 101, 1, 2));
}

TEST_CASE("warp surface distance vanishes for identical shapes")
{
    const TriangleMesh mesh = unit_icosphere(2);
    const PointCloud y = farthest_point_sample(mesh.vertices, 40);
    CHECK(warp_s2s(y, y, mesh, mesh) < 1e-3);
    TriangleMesh bigger = mesh;
    bigger.vertices *= 1.5;
    CHECK(warp_s2s(y, 1.5 * y, mesh, bigger) < 1e-2);
    CHECK(warp_s2s(y, y, mesh, bigger) > 0.3);
}

TEST_CASE("evaluate_all reports every metric and round-trips through disk")
{
    HalfTorusParams hp;
    hp.cloud_points = 400;
    hp.mesh_segments = 24;
    hp.mesh_rings = 8;
    const auto shapes = generate_half_torus_bump(8, hp, 3);
    std::vector<EvalSample> train, test;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        EvalSample s{"s" + std::to_string(i), shapes[i].cloud, shapes[i].mesh};
        (i < 5 ? train : test).push_back(std::move(s));
    }
    EvalOptions opt;
    opt.n_input = 128;
    opt.me_neighbors = 4;
    opt.specificity_samples = 20;
    opt.curve_samples = 5;
    opt.model_id = "fps";
    opt.dataset_id = "torus";
    const Predictor p = [](const PointCloud& c) { return fps_predict(c, 32); };
    const MetricReport r = evaluate_all(p, train, test, opt);

    for (const char* m : {"cd", "sampling_mse", "rotation_mse", "me", "generalization", "p2s", "warp_s2s"}) {
        INFO(m);
        const auto v = r.values(m);
        CHECK(v.size() == test.size());
        for (double x : v) {
            CHECK(std::isfinite(x));
        }
    }
    CHECK(r.values("rotation_mse")[0] < 1e-20);
    std::vector<std::string> names;
    for (const auto& c : r.curves) {
        names.push_back(c.name);
    }
    CHECK(std::find(names.begin(), names.end(), "compactness") != names.end());
    CHECK(std::find(names.begin(), names.end(), "specificity") != names.end());

    const auto dir = testing::scratch_dir("report");
    write_report(dir, r);
    const MetricReport back = read_report(dir);
    CHECK(back.model_id == "fps");
    CHECK(back.dataset_id == "torus");
    CHECK(back.metrics() == r.metrics());
    for (const auto& m : r.metrics()) {
        CHECK(back.values(m) == r.values(m));
    }
    REQUIRE(back.curves.size() == r.curves.size());
    for (std::size_t i = 0; i < r.curves.size(); ++i) {
        CHECK(back.curves[i].values == r.curves[i].values);
    }

    CHECK_THROWS(evaluate_all(p, train, {}, opt));
}
