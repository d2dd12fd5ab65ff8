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

#include "p2ssm/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace p2ssm {

struct ClassifierReport
{
    std::vector<double> fold_accuracy;
    double mean_accuracy = 0.0;
    /// confusion(true, predicted) over the class indices 0..C-1.
    Eigen::MatrixXi confusion;
    bool degenerate = false; ///< set when only one class is present
};

/// Majority vote among the k nearest training shapes by Euclidean distance
/// between flattened correspondences. Vote ties go to the tied class with the
/// smallest mean distance, then to the lower class index.
ClassifierReport knn_classify(std::span<const CorrespondenceSet> train_y, std::span<const int> train_labels,
                              std::span<const CorrespondenceSet> test_y, std::span<const int> test_labels, int k = 10);

/// Predicted labels only.
std::vector<int> knn_predict(std::span<const CorrespondenceSet> train_y, std::span<const int> train_labels,
                             std::span<const CorrespondenceSet> test_y, int k = 10);

struct SvmOptions
{
    double c = 1.0;
    double gamma = 0.0; ///< 0 selects 1 / (feature dimension * feature variance)
    double tolerance = 1e-3;
    int max_passes = 10000;
};

/// Binary soft-margin SVM with an RBF kernel, trained by sequential minimal
/// optimisation. Multi-class problems use one-vs-one voting.
class RbfSvm
{
public:
    RbfSvm(const Eigen::MatrixXd& features, std::span<const int> labels, const SvmOptions& options = {});
    int predict(const Eigen::VectorXd& x) const;
    double gamma() const { return gamma_; }

private:
    struct Binary
    {
        int pos = 0, neg = 0;
        std::vector<Eigen::Index> support;
        std::vector<double> coef; // alpha_i * y_i
        double bias = 0.0;
    };
    double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
    Eigen::MatrixXd x_;
    double gamma_ = 1.0;
    std::vector<int> classes_;
    std::vector<Binary> machines_;
};

/// Stratified k-fold cross-validation of the RBF SVM on flattened
/// correspondences. Throws if a class has fewer members than folds.
ClassifierReport svm_rbf_cv(std::span<const CorrespondenceSet> y, std::span<const int> labels, int folds = 5,
                            std::uint64_t seed = 0, const SvmOptions& options = {});

/// Stratified fold assignment: fold index per sample.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

/// Joint generalized Procrustes alignment of train and test shapes (rigid,
/// or similarity with `with_scale`), returned in input order.
std::vector<CorrespondenceSet> align_jointly(std::span<const CorrespondenceSet> shapes, bool with_scale = false);

void write_classifier_report(const std::filesystem::path& dir, const ClassifierReport& report,
                             std::span<const std::string> class_names);

} // namespace p2ssm
