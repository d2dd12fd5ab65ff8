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

#include "../tools/cli.hpp"

#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

using namespace p2ssm;

namespace {

struct Outcome
{
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const std::filesystem::path& p)
{
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST_CASE("usage errors and runtime errors have distinct exit codes")
{
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"generate", "--kind", "half-torus"}).code == 2); // --out missing
    CHECK(run({"generate", "--kind", "cube", "--out", "x"}).code == 2);
    const auto dir = testing::scratch_dir("cli_err");
    const Outcome missing = run({"infer", "--data", (dir / "nope").string(), "--model", "m.ckpt", "--out",
                                 (dir / "o").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error") != std::string::npos);
    CHECK(run({"--version"}).code == 0);
}

TEST_CASE("the pipeline runs end to end and replays byte for byte")
{
    const auto root = testing::scratch_dir("cli_pipeline");
    const auto p = [&](const char* name) { return (root / name).string(); };

    REQUIRE(run({"generate", "--kind", "half-torus", "--n", "10", "--points", "300", "--seed", "3", "--out",
                 p("gen")})
                .code == 0);
    // A non-empty output directory needs --force.
    CHECK(run({"generate", "--kind", "half-torus", "--n", "10", "--out", p("gen")}).code == 1);
    REQUIRE(run({"split", "--data", p("gen"), "--ratios", "0.6,0.2,0.2", "--seed", "1", "--out", p("split")}).code ==
            0);

    const std::vector<std::string> train_args{
        "train",  "--data", p("split"), "--set",     "n_input=64", "--set", "n_output=32",      "--set",
        "k_neighbors=6", "--set", "feat_dim=16",   "--set",     "max_epochs=2", "--set", "me_neighbors=4", "--set",
        "batch_size=3",  "--set", "seed=5",        "--quiet",   "--out",     p("train")};
    const Outcome t = run(train_args);
    REQUIRE_MESSAGE(t.code == 0, t.err);
    CHECK(std::filesystem::exists(root / "train" / "best.ckpt"));
    CHECK(std::filesystem::exists(root / "train" / "run.json"));
    CHECK(line_count(root / "train" / "epochs.csv") == 3);

    const std::string ckpt = p("train/best.ckpt");
    REQUIRE(run({"infer", "--data", p("split"), "--model", ckpt, "--split", "test", "--out", p("infer")}).code == 0);
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(root / "infer")) {
        if (e.path().extension() == ".particles") {
            ++files;
            CHECK(line_count(e.path()) == 32);
        }
    }
    CHECK(files == 2);

    const Outcome ev = run({"evaluate", "--data", p("split"), "--model", ckpt, "--specificity-samples", "20",
                            "--me-neighbors", "4", "--model-id", "tiny", "--out", p("eval")});
    REQUIRE_MESSAGE(ev.code == 0, ev.err);
    REQUIRE(run({"analyze", "--data", p("split"), "--model", ckpt, "--modes", "2", "--out", p("analyze")}).code ==
            0);
    CHECK(std::filesystem::exists(root / "analyze" / "mode1_plus.particles"));
    CHECK(std::filesystem::exists(root / "analyze" / "mean_mesh.ply"));

    REQUIRE(run({"plot", "--report", p("eval"), "--out", p("plot")}).code == 0);
    REQUIRE(run({"plot", "--report", p("eval"), "--out", p("plot2")}).code == 0);
    CHECK(slurp(root / "plot" / "box_cd.svg") == slurp(root / "plot2" / "box_cd.svg"));
    CHECK(slurp(root / "plot" / "curve_compactness.svg") == slurp(root / "plot2" / "curve_compactness.svg"));

    // An empty report directory is an error and produces no figure.
    std::filesystem::create_directories(root / "empty");
    CHECK(run({"plot", "--report", p("empty"), "--out", p("plot3")}).code == 1);
    CHECK_FALSE(std::filesystem::exists(root / "plot3" / "box_cd.svg"));

    // Replaying the training run reproduces its outputs exactly.
    REQUIRE(run({"--replay", p("train/run.json"), "--out", p("replay")}).code == 0);
    CHECK(slurp(root / "replay" / "epochs.csv") == slurp(root / "train" / "epochs.csv"));
    CHECK(slurp(root / "replay" / "best.ckpt") == slurp(root / "train" / "best.ckpt"));
    REQUIRE(run({"--replay", p("eval/run.json"), "--out", p("replay_eval")}).code == 0);
    CHECK(slurp(root / "replay_eval" / "metrics.csv") == slurp(root / "eval" / "metrics.csv"));
    CHECK(slurp(root / "replay_eval" / "curves.csv") == slurp(root / "eval" / "curves.csv"));

    // Changing an input invalidates the replay.
    {
        std::ofstream os(root / "split" / "manifest.csv", std::ios::app);
        os << "\n";
    }
    CHECK(run({"--replay", p("train/run.json"), "--out", p("replay_bad")}).code == 1);
}
