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

#include "p2ssm/downstream.hpp"
#include "p2ssm/geometry.hpp"

#include <doctest.h>

#include <fstream>
#include <map>

using namespace p2ssm;

namespace {

CorrespondenceSet at(double x)
{
    CorrespondenceSet y = CorrespondenceSet::Zero(2, 3);
    y(0, 0) = x;
    return y;
}

// Two well separated blobs of shapes around distinct templates.
void two_blobs(int per_class, Rng& rng, std::vector<CorrespondenceSet>& y, std::vector<int>& labels)
{
    const PointCloud a = testing::random_cloud(10, rng);
    const PointCloud b = a + testing::random_cloud(10, rng, 0.5);
    for (int i = 0; i < per_class; ++i) {
        y.push_back(a + testing::random_cloud(10, rng, 0.02));
        labels.push_back(0);
        y.push_back(b + testing::random_cloud(10, rng, 0.02));
        labels.push_back(1);
    }
}

} // namespace

TEST_CASE("knn votes by majority and breaks ties by mean distance, then class")
{
    const std::vector<CorrespondenceSet> train{at(0), at(1), at(10), at(11), at(12)};
    const std::vector<int> labels{0, 0, 1, 1, 1};
    const std::vector<CorrespondenceSet> test{at(0.2), at(11.5)};
    CHECK(knn_predict(train, labels, test, 1) == std::vector<int>{0, 1});
    // k = 5: class 1 has three votes wherever the query is.
    CHECK(knn_predict(train, labels, test, 5) == std::vector<int>{1, 1});

    // Two votes each; class 1 is closer on average.
    const std::vector<CorrespondenceSet> t4{at(0), at(4), at(5), at(6)};
    const std::vector<int> l4{0, 0, 1, 1};
    CHECK(knn_predict(t4, l4, std::vector<CorrespondenceSet>{at(4.5)}, 4)[0] == 1);
    // Exactly symmetric tie goes to the lower class.
    const std::vector<CorrespondenceSet> sym{at(-1), at(1)};
    const std::vector<int> lsym{1, 0};
    CHECK(knn_predict(sym, lsym, std::vector<CorrespondenceSet>{at(0)}, 2)[0] == 0);

    const ClassifierReport r = knn_classify(train, labels, test, std::vector<int>{0, 0}, 1);
    CHECK(r.mean_accuracy == 0.5);
    CHECK(r.confusion(0, 0) == 1);
    CHECK(r.confusion(0, 1) == 1);
}

TEST_CASE("one training class makes a degenerate report")
{
    const std::vector<CorrespondenceSet> train{at(0), at(1)};
    const std::vector<int> labels{0, 0};
    const ClassifierReport r = knn_classify(train, labels, train, labels, 1);
    CHECK(r.degenerate);
    CHECK(r.mean_accuracy == 1.0);
}

TEST_CASE("stratified folds are balanced and reproducible")
{
    std::vector<int> labels;
    for (int i = 0; i < 23; ++i) {
        labels.push_back(i % 3 == 0 ? 1 : 0);
    }
    const auto f = stratified_folds(labels, 5, 4);
    CHECK(f == stratified_folds(labels, 5, 4));
    std::map<int, std::map<int, int>> per;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++per[f[i]][labels[i]];
    }
    for (int c : {0, 1}) {
        int lo = 1 << 20, hi = 0;
        for (int k = 0; k < 5; ++k) {
            lo = std::min(lo, per[k][c]);
            hi = std::max(hi, per[k][c]);
        }
        CHECK(hi - lo <= 1);
    }
    CHECK_THROWS(stratified_folds(std::vector<int>{0, 0, 1}, 2, 0));
}

TEST_CASE("rbf svm separates well separated classes")
{
    Rng rng(81);
    std::vector<CorrespondenceSet> y;
    std::vector<int> labels;
    two_blobs(10, rng, y, labels);
    const ClassifierReport r = svm_rbf_cv(y, labels, 5, 1);
    CHECK(r.fold_accuracy.size() == 5);
    CHECK(r.mean_accuracy == 1.0);
    CHECK(r.confusion.sum() == 20);

    // Default gamma follows 1 / (d * variance of all entries).
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 1, 0, 0, 1, 1, 1;
    const std::vector<int> xor_labels{0, 1, 1, 0};
    const RbfSvm svm(x, xor_labels);
    CHECK(svm.gamma() == doctest::Approx(1.0 / (2 * 0.25)));
    // The kernel machine fits xor exactly at the training points.
    for (int i = 0; i < 4; ++i) {
        CHECK(svm.predict(x.row(i).transpose()) == xor_labels[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("joint alignment removes pose before classification")
{
    Rng rng(82);
    std::vector<CorrespondenceSet> y;
    std::vector<int> labels;
    two_blobs(6, rng, y, labels);
    std::vector<CorrespondenceSet> moved;
    for (std::size_t i = 0; i < y.size(); ++i) {
        Similarity s;
        s.rotation = random_rotation(180.0, i).matrix;
        s.translation = Vec3::Constant(static_cast<double>(i));
        moved.push_back(s.apply(y[i]));
    }
    const auto aligned = align_jointly(moved);
    const std::span<const CorrespondenceSet> all(aligned);
    const std::span<const int> lab(labels);
    const auto pred = knn_predict(all.subspan(0, 8), lab.subspan(0, 8), all.subspan(8), 3);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        CHECK(pred[i] == labels[8 + i]);
    }

    ClassifierReport r;
    r.fold_accuracy = {1.0, 0.5};
    r.mean_accuracy = 0.75;
    r.confusion = Eigen::MatrixXi::Identity(2, 2);
    const auto dir = testing::scratch_dir("classify");
    const std::vector<std::string> names{"a", "b"};
    write_classifier_report(dir, r, names);
    std::ifstream is(dir / "confusion.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header.find(",a,b") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "folds.csv"));
    CHECK(std::filesystem::exists(dir / "summary.json"));
}
