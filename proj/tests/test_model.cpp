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

#include "p2ssm/autodiff.hpp"
#include "p2ssm/geometry.hpp"
#include "p2ssm/model.hpp"
#include "p2ssm/training.hpp"

#include <doctest.h>

#include <fstream>
#include <functional>

using namespace p2ssm;

namespace {

ModelConfig small_config()
{
    ModelConfig c;
    c.n_input = 32;
    c.n_output = 16;
    c.k_neighbors = 5;
    c.feat_dim = 16;
    c.encoder_widths = {8, 8};
    c.attn_blocks = 2;
    c.attn_heads = 2;
    return c;
}

} // namespace

TEST_CASE("configuration validation")
{
    ModelConfig c = small_config();
    CHECK_NOTHROW(c.validate());
    c.k_neighbors = c.n_input;
    CHECK_THROWS(c.validate());
    c = small_config();
    c.attn_heads = 3;
    CHECK_THROWS(c.validate());
    c = small_config();
    c.n_classes = 1;
    CHECK_THROWS(c.validate());
    CHECK(small_config().hidden_width() == 32);
}

TEST_CASE("untrained network: simplex attention and convex outputs")
{
    const Model net(small_config(), 1);
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const Points3<float> x = testing::random_cloud(32, rng, 3.0).cast<float>();
        const Eigen::MatrixXf w = net.attention(net.encode(x));
        REQUIRE(w.rows() == 16);
        REQUIRE(w.cols() == 32);
        CHECK(w.minCoeff() >= 0.0f);
        CHECK((w.rowwise().sum().array() - 1.0f).abs().maxCoeff() < 1e-6f);
        const Points3<float> y = net.predict(x);
        CHECK((y - w * x).cwiseAbs().maxCoeff() < 1e-5f);
    }
    CHECK_THROWS_AS(net.encode(Points3<float>::Zero(31, 3)), ShapeError);
    CHECK_THROWS_AS(net.classify(CorrespondenceSet::Zero(16, 3)), UnsupportedOperation);
}

TEST_CASE("parameters are seeded deterministically")
{
    const Model a(small_config(), 5), b(small_config(), 5), c(small_config(), 6);
    REQUIRE(a.parameters().size() == b.parameters().size());
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(a.parameters().values[i] == b.parameters().values[i]);
        differs = differs || a.parameters().values[i] != c.parameters().values[i];
    }
    CHECK(differs);
}

TEST_CASE("every tape op has a correct backward pass")
{
    using Tape = ad::Tape<double>;
    using Mat = Tape::Matrix;
    using Build = std::function<ad::Var(Tape&, const std::vector<ad::Var>&)>;
    Rng rng(40);
    const auto rnd = [&](Eigen::Index r, Eigen::Index c) {
        Mat m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = uniform(rng, -1, 1);
        }
        return m;
    };
    IndexMatrix nbr(5, 2);
    nbr << 1, 2, 0, 3, 4, 1, 2, 0, 3, 1;

    const auto check_op = [&](const char* name, std::vector<Mat> in, const Build& f) {
        Tape t;
        std::vector<ad::Var> v;
        for (const auto& m : in) {
            v.push_back(t.leaf(m));
        }
        const ad::Var out = f(t, v);
        const Mat g = rnd(t.value(out).rows(), t.value(out).cols());
        t.backward(out, g);
        for (std::size_t k = 0; k < in.size(); ++k) {
            const Mat analytic = t.grad(v[k]);
            const auto loss = [&](const Mat& x) {
                auto args = in;
                args[k] = x;
                Tape u;
                std::vector<ad::Var> w;
                for (const auto& m : args) {
                    w.push_back(u.leaf(m, false));
                }
                return (u.value(f(u, w)).array() * g.array()).sum();
            };
            INFO(name << " input " << k);
            CHECK(testing::relative_error(analytic, testing::numeric_gradient(loss, in[k])) < 1e-6);
        }
    };

    const Mat a = rnd(5, 4);
    check_op("matmul", {a, rnd(4, 3)}, [](Tape& t, const auto& v) { return t.matmul(v[0], v[1]); });
    check_op("matmul_nt", {a, rnd(6, 4)}, [](Tape& t, const auto& v) { return t.matmul_nt(v[0], v[1]); });
    check_op("add", {a, rnd(5, 4)}, [](Tape& t, const auto& v) { return t.add(v[0], v[1]); });
    check_op("add_row", {a, rnd(1, 4)}, [](Tape& t, const auto& v) { return t.add_row(v[0], v[1]); });
    check_op("scale", {a}, [](Tape& t, const auto& v) { return t.scale(v[0], -1.7); });
    check_op("leaky_relu", {a}, [](Tape& t, const auto& v) { return t.leaky_relu(v[0], 0.2); });
    check_op("gelu", {a}, [](Tape& t, const auto& v) { return t.gelu(v[0]); });
    check_op("softmax_rows", {a}, [](Tape& t, const auto& v) { return t.softmax_rows(v[0]); });
    check_op("log_softmax_rows", {a}, [](Tape& t, const auto& v) { return t.log_softmax_rows(v[0]); });
    check_op("layer_norm", {a, rnd(1, 4), rnd(1, 4)},
             [](Tape& t, const auto& v) { return t.layer_norm(v[0], v[1], v[2]); });
    check_op("transpose", {a}, [](Tape& t, const auto& v) { return t.transpose(v[0]); });
    check_op("concat_cols", {a, rnd(5, 2)}, [](Tape& t, const auto& v) {
        const std::vector<ad::Var> parts{t.cols(v[0], 1, 2), v[1]};
        return t.concat_cols(parts);
    });
    check_op("neighbor_max", {a, rnd(5, 4)}, [&](Tape& t, const auto& v) { return t.neighbor_max(v[0], v[1], nbr); });
    check_op("center_rows", {a}, [](Tape& t, const auto& v) { return t.center_rows(v[0]); });
    check_op("rms_normalize", {a}, [](Tape& t, const auto& v) { return t.rms_normalize(v[0]); });
    check_op("flatten_rows", {a}, [](Tape& t, const auto& v) { return t.flatten_rows(v[0]); });
}

TEST_CASE("network gradients match central differences in double precision")
{
    ModelConfig cfg = small_config();
    cfg.n_input = 12;
    cfg.n_output = 6;
    cfg.k_neighbors = 4;
    cfg.feat_dim = 6;
    cfg.encoder_widths = {5};
    cfg.attn_blocks = 1;
    cfg.n_classes = 3;
    Network<double> net(cfg, 7);
    Rng rng(42);
    const Points3<double> x = testing::random_cloud(12, rng);
    const Eigen::MatrixXd gy = testing::random_cloud(6, rng);
    const Eigen::VectorXd glp = Eigen::VectorXd::Random(3);

    auto pass = net.forward(x, true, true);
    const Eigen::MatrixXd g_lp_row = glp.transpose();
    const auto grads = net.backward(pass, gy, &g_lp_row);

    const auto loss = [&](const Network<double>& n) {
        auto p = n.forward(x, false, true);
        const Eigen::MatrixXd y = p.tape->value(p.output);
        const Eigen::MatrixXd lp = p.tape->value(p.log_probs);
        return (y.array() * gy.array()).sum() + (lp.transpose().array() * glp.array()).sum();
    };

    const double h = 1e-5;
    std::vector<double> analytic, numeric;
    auto& params = net.parameters();
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& v = params.values[t];
        for (int s = 0; s < std::min<Eigen::Index>(6, v.size()); ++s) {
            const Eigen::Index idx = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(v.size())));
            const double orig = v.data()[idx];
            v.data()[idx] = orig + h;
            const double fp = loss(net);
            v.data()[idx] = orig - h;
            const double fm = loss(net);
            v.data()[idx] = orig;
            numeric.push_back((fp - fm) / (2 * h));
            analytic.push_back(grads[t].data()[idx]);
        }
    }
    const Eigen::Map<Eigen::VectorXd> a(analytic.data(), static_cast<Eigen::Index>(analytic.size()));
    const Eigen::Map<Eigen::VectorXd> n(numeric.data(), static_cast<Eigen::Index>(numeric.size()));
    CHECK(testing::relative_error(a, n) < 1e-4);
}

TEST_CASE("inference is order-free and follows translation and scale")
{
    const Model net(small_config(), 3);
    Rng rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        const PointCloud x = testing::random_cloud(80, rng, 5.0);
        const CorrespondenceSet y = infer(x, net);

        std::vector<int> perm(80);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
        }
        CHECK((infer(gather_rows(x, perm), net) - y).cwiseAbs().maxCoeff() < 1e-5);

        const double s = 2.5;
        const Eigen::RowVector3d t(10, -3, 4);
        const CorrespondenceSet moved = infer((s * x).rowwise() + t, net);
        CHECK(((moved.rowwise() - t) / s - y).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("checkpoints restore inference bit for bit")
{
    ModelConfig cfg = small_config();
    cfg.n_classes = 2;
    const Model net(cfg, 9);
    const auto dir = testing::scratch_dir("ckpt");
    CheckpointMeta meta{12, 0.5, 77, "point2ssm_pp", {"a", "b"}};
    save_checkpoint(dir / "m.ckpt", net, meta);
    const auto [loaded, m] = load_checkpoint(dir / "m.ckpt");
    CHECK(loaded.config() == cfg);
    CHECK(m.epoch == 12);
    CHECK(m.seed == 77);
    CHECK(m.class_names == std::vector<std::string>{"a", "b"});
    Rng rng(44);
    const PointCloud x = testing::random_cloud(50, rng);
    CHECK(infer(x, loaded) == infer(x, net));
    const auto y = infer(x, net);
    CHECK(classify(y, loaded) == classify(y, net));

    // Truncation and trailing garbage are both rejected.
    {
        std::ofstream os(dir / "m.ckpt", std::ios::app | std::ios::binary);
        os << 'x';
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), ParseError);
    std::filesystem::resize_file(dir / "m.ckpt", std::filesystem::file_size(dir / "m.ckpt") - 9);
    CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), ParseError);
}

TEST_CASE("sequence inference is frame-wise")
{
    const Model net(small_config(), 4);
    Rng rng(45);
    const std::vector<PointCloud> seq{testing::random_cloud(40, rng), testing::random_cloud(40, rng)};
    const auto ys = infer_sequence(seq, net);
    REQUIRE(ys.size() == 2);
    CHECK(ys[1] == infer(seq[1], net));
}
