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

#include "p2ssm/training.hpp"

#include <doctest.h>

#include <set>

using namespace p2ssm;

namespace {

TrainConfig tiny_config(Variant v)
{
    TrainConfig c;
    c.variant = v;
    c.model.n_input = 32;
    c.model.n_output = 16;
    c.model.k_neighbors = 4;
    c.model.feat_dim = 8;
    c.model.encoder_widths = {8};
    c.model.attn_blocks = 1;
    c.model.attn_heads = 2;
    c.loss.me_neighbors = 3;
    c.loss.batch_size = 3;
    c.lr = 1e-3;
    c.max_epochs = 3;
    c.patience = 10;
    c.seed = 11;
    return c;
}

std::vector<TrainSample> samples(int n, Rng& rng)
{
    std::vector<TrainSample> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({testing::random_cloud(80, rng), -1, -1});
    }
    return out;
}

} // namespace

TEST_CASE("configuration text round-trips through the canonical form")
{
    TrainConfig c = tiny_config(Variant::point2ssm);
    c.loss.alpha = 0.25;
    const std::string text = format_train_config(c);
    const TrainConfig back = parse_train_config(text);
    CHECK(format_train_config(back) == text);
    CHECK(back.variant == Variant::point2ssm);
    CHECK(back.loss.alpha == 0.25);

    const auto& keys = train_config_keys();
    CHECK(keys.size() == 16);
    CHECK(std::set<std::string>(keys.begin(), keys.end()).size() == keys.size());
    for (const auto& k : keys) {
        CHECK(text.find(k + " = ") != std::string::npos);
    }

    CHECK(parse_train_config("# only a comment\n\nlr = 0.01\n").lr == 0.01);
    CHECK_THROWS(parse_train_config("bogus = 1\n"));
    CHECK_THROWS(parse_train_config("lr = 1\nlr = 2\n"));
    CHECK_THROWS(parse_train_config("lr = fast\n"));
    CHECK_THROWS(parse_train_config("lr = -1\n"));
    TrainConfig s;
    set_config_value(s, "variant", "point2ssm");
    CHECK(s.variant == Variant::point2ssm);
    CHECK_FALSE(s.effective_model().normalize_input);
    set_config_value(s, "variant", "point2ssm_pp");
    CHECK(s.effective_model().normalize_input);
}

TEST_CASE("Adam minimises a quadratic")
{
    ParameterSet<float> p;
    p.names = {"w"};
    p.values = {Eigen::MatrixXf::Constant(2, 2, 3.0f)};
    Adam opt(p, 0.05);
    for (int i = 0; i < 600; ++i) {
        opt.step(p, {2.0f * p.values[0]});
    }
    CHECK(p.values[0].cwiseAbs().maxCoeff() < 1e-2f);
}

TEST_CASE("training is deterministic and keeps the best epoch")
{
    Rng rng(71);
    const auto tr = samples(6, rng);
    const auto va = samples(2, rng);
    for (Variant v : {Variant::point2ssm, Variant::point2ssm_pp}) {
        const TrainConfig c = tiny_config(v);
        int calls = 0;
        const TrainResult a = train(c, tr, va, [&](const EpochLog&) { ++calls; });
        const TrainResult b = train(c, tr, va);
        CHECK(calls == a.epochs_run);
        CHECK(a.epochs_run == 3);
        REQUIRE(a.log.size() == b.log.size());
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            CHECK(a.log[i].train_cd == b.log[i].train_cd);
            CHECK(a.log[i].val_cd == b.log[i].val_cd);
        }
        double best = 1e300;
        for (const auto& e : a.log) {
            best = std::min(best, e.val_cd);
        }
        CHECK(a.best_val_cd == best);
        std::vector<PointCloud> vc;
        for (const auto& s : va) {
            vc.push_back(s.cloud);
        }
        CHECK(validate(a.model, vc) == doctest::Approx(a.best_val_cd).epsilon(1e-9));
        if (v == Variant::point2ssm) {
            for (const auto& e : a.log) {
                CHECK(e.train_consist == 0.0);
            }
        }
    }
}

TEST_CASE("early stopping respects patience")
{
    Rng rng(72);
    const auto tr = samples(3, rng);
    const auto va = samples(1, rng);
    TrainConfig c = tiny_config(Variant::point2ssm);
    c.lr = 1e-12;
    c.patience = 2;
    c.max_epochs = 50;
    const TrainResult r = train(c, tr, va);
    // Steps below float resolution leave the model frozen, so it never improves.
    CHECK(r.best_epoch == 1);
    CHECK(r.epochs_run == 3);
}

TEST_CASE("epoch logs round-trip")
{
    const std::vector<EpochLog> log{{1, 0.5, 0.25, 0.125, 0.75}, {2, 0.1, 0.2, 0.3, 0.4}};
    const auto dir = testing::scratch_dir("epochs");
    write_epoch_log(dir / "epochs.csv", log);
    const auto back = read_epoch_log(dir / "epochs.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[1].epoch == 2);
    CHECK(back[1].val_cd == 0.4);
    CHECK(back[0].train_consist == 0.125);
}

TEST_CASE("a sweep trains once per value")
{
    Rng rng(73);
    const auto tr = samples(3, rng);
    const auto va = samples(1, rng);
    const std::vector<PointCloud> te{testing::random_cloud(80, rng)};
    TrainConfig c = tiny_config(Variant::point2ssm_pp);
    c.max_epochs = 1;
    const std::vector<std::string> values{"0.5", "2"};
    const auto rows = sweep(c, "consist_weight", values, tr, va, te);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == "0.5");
    CHECK(rows[1].epochs_run == 1);
    CHECK(std::isfinite(rows[1].test_cd));
    CHECK_THROWS(sweep(c, "no_such_key", values, tr, va, te));
}
