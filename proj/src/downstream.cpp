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
#include "p2ssm/downstream.hpp"

#include "p2ssm/geometry.hpp"
#include "p2ssm/io.hpp"
#include "p2ssm/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace p2ssm {

namespace {

Eigen::MatrixXd feature_matrix(std::span<const CorrespondenceSet> y)
{
    if (y.empty()) {
        throw InvalidInput("classifier: no shapes");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(y.size()), 3 * y.front().rows());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i].rows() != y.front().rows()) {
            throw InvalidInput("classifier: correspondence counts differ");
        }
        x.row(static_cast<Eigen::Index>(i)) = flatten(y[i]).transpose();
    }
    return x;
}

int class_count(std::span<const int> labels)
{
    int c = 0;
    for (int l : labels) {
        if (l < 0) {
            throw InvalidInput("classifier: labels must be >= 0");
        }
        c = std::max(c, l + 1);
    }
    return c;
}

} // namespace

std::vector<int> knn_predict(std::span<const CorrespondenceSet> train_y, std::span<const int> train_labels,
                             std::span<const CorrespondenceSet> test_y, int k)
{
    if (train_y.size() != train_labels.size()) {
        throw InvalidInput("knn_classify: label count does not match the training shapes");
    }
    if (k < 1 || static_cast<std::size_t>(k) > train_y.size()) {
        throw std::invalid_argument("knn_classify: need 1 <= k <= training size");
    }
    const Eigen::MatrixXd tr = feature_matrix(train_y);
    const Eigen::MatrixXd te = feature_matrix(test_y);
    if (tr.cols() != te.cols()) {
        throw InvalidInput("knn_classify: train and test correspondence counts differ");
    }
    const int n_classes = class_count(train_labels);
    std::vector<int> out;
    for (Eigen::Index q = 0; q < te.rows(); ++q) {
        std::vector<std::pair<double, int>> d;
        for (Eigen::Index i = 0; i < tr.rows(); ++i) {
            d.emplace_back((tr.row(i) - te.row(q)).norm(), static_cast<int>(i));
        }
        std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
        std::vector<double> dist(static_cast<std::size_t>(n_classes), 0.0);
        for (int r = 0; r < k; ++r) {
            const int lab = train_labels[static_cast<std::size_t>(d[static_cast<std::size_t>(r)].second)];
            ++votes[static_cast<std::size_t>(lab)];
            dist[static_cast<std::size_t>(lab)] += d[static_cast<std::size_t>(r)].first;
        }
        int best = -1;
        for (int c = 0; c < n_classes; ++c) {
            const auto cc = static_cast<std::size_t>(c);
            if (votes[cc] == 0) {
                continue;
            }
            if (best < 0) {
                best = c;
                continue;
            }
            const auto bb = static_cast<std::size_t>(best);
            const double mean_c = dist[cc] / votes[cc];
            const double mean_b = dist[bb] / votes[bb];
            if (votes[cc] > votes[bb] || (votes[cc] == votes[bb] && mean_c < mean_b)) {
                best = c;
            }
        }
        out.push_back(best);
    }
    return out;
}

ClassifierReport knn_classify(std::span<const CorrespondenceSet> train_y, std::span<const int> train_labels,
                              std::span<const CorrespondenceSet> test_y, std::span<const int> test_labels, int k)
{
    if (test_y.size() != test_labels.size()) {
        throw InvalidInput("knn_classify: label count does not match the test shapes");
    }
    const auto pred = knn_predict(train_y, train_labels, test_y, k);
    const int c = std::max(class_count(train_labels), class_count(test_labels));
    ClassifierReport r;
    r.confusion = Eigen::MatrixXi::Zero(c, c);
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        ++r.confusion(test_labels[i], pred[i]);
        correct += pred[i] == test_labels[i];
    }
    r.mean_accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    r.fold_accuracy = {r.mean_accuracy};
    std::vector<int> present(train_labels.begin(), train_labels.end());
    std::sort(present.begin(), present.end());
    r.degenerate = present.front() == present.back();
    return r;
}

// ---- RBF SVM ---------------------------------------------------------------

double RbfSvm::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const
{
    return std::exp(-gamma_ * (a - b).squaredNorm());
}

RbfSvm::RbfSvm(const Eigen::MatrixXd& features, std::span<const int> labels, const SvmOptions& opt) : x_(features)
{
    if (features.rows() != static_cast<Eigen::Index>(labels.size()) || features.rows() == 0) {
        throw InvalidInput("RbfSvm: feature and label counts differ");
    }
    if (opt.gamma > 0.0) {
        gamma_ = opt.gamma;
    } else {
        const double mean = features.mean();
        const double var = (features.array() - mean).square().mean();
        gamma_ = var > 0.0 ? 1.0 / (static_cast<double>(features.cols()) * var) : 1.0;
    }
    classes_.assign(labels.begin(), labels.end());
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());

    const Eigen::Index n = features.rows();
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            K(i, j) = K(j, i) = kernel(features.row(i).transpose(), features.row(j).transpose());
        }
    }

    for (std::size_t a = 0; a < classes_.size(); ++a) {
        for (std::size_t b = a + 1; b < classes_.size(); ++b) {
            std::vector<Eigen::Index> idx;
            std::vector<double> y;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int l = labels[static_cast<std::size_t>(i)];
                if (l == classes_[a] || l == classes_[b]) {
                    idx.push_back(i);
                    y.push_back(l == classes_[a] ? 1.0 : -1.0);
                }
            }
            const std::size_t m = idx.size();
            const double C = opt.c;
            std::vector<double> alpha(m, 0.0), G(m, -1.0);
            const auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K(idx[i], idx[j]); };
            // First-order working-set selection on the dual.
            for (int it = 0; it < opt.max_passes; ++it) {
                double gmax = -std::numeric_limits<double>::infinity();
                double gmin = std::numeric_limits<double>::infinity();
                std::size_t i = m, j = m;
                for (std::size_t t = 0; t < m; ++t) {
                    const double v = -y[t] * G[t];
                    const bool up = (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0);
                    const bool low = (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C);
                    if (up && v > gmax) {
                        gmax = v;
                        i = t;
                    }
                    if (low && v < gmin) {
                        gmin = v;
                        j = t;
                    }
                }
                if (i == m || j == m || gmax - gmin < opt.tolerance) {
                    break;
                }
                const double ai = alpha[i], aj = alpha[j];
                const double qij = Q(i, j);
                if (y[i] != y[j]) {
                    double quad = Q(i, i) + Q(j, j) + 2.0 * qij;
                    quad = quad > 0.0 ? quad : 1e-12;
                    const double delta = (-G[i] - G[j]) / quad;
                    const double diff = alpha[i] - alpha[j];
                    alpha[i] += delta;
                    alpha[j] += delta;
                    if (diff > 0.0) {
                        if (alpha[j] < 0.0) {
                            alpha[j] = 0.0;
                            alpha[i] = diff;
                        }
                    } else if (alpha[i] < 0.0) {
                        alpha[i] = 0.0;
                        alpha[j] = -diff;
                    }
                    if (diff > 0.0) {
                        if (alpha[i] > C) {
                            alpha[i] = C;
                            alpha[j] = C - diff;
                        }
                    } else if (alpha[j] > C) {
                        alpha[j] = C;
                        alpha[i] = C + diff;
                    }
                } else {
                    double quad = Q(i, i) + Q(j, j) - 2.0 * qij;
                    quad = quad > 0.0 ? quad : 1e-12;
                    const double delta = (G[i] - G[j]) / quad;
                    const double sum = alpha[i] + alpha[j];
                    alpha[i] -= delta;
                    alpha[j] += delta;
                    if (sum > C) {
                        if (alpha[i] > C) {
                            alpha[i] = C;
                            alpha[j] = sum - C;
                        }
                        if (alpha[j] > C) {
                            alpha[j] = C;
                            alpha[i] = sum - C;
                        }
                    } else {
                        if (alpha[j] < 0.0) {
                            alpha[j] = 0.0;
                            alpha[i] = sum;
                        }
                        if (alpha[i] < 0.0) {
                            alpha[i] = 0.0;
                            alpha[j] = sum;
                        }
                    }
                }
                const double di = alpha[i] - ai, dj = alpha[j] - aj;
                for (std::size_t t = 0; t < m; ++t) {
                    G[t] += Q(t, i) * di + Q(t, j) * dj;
                }
            }
            double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0.0;
            int nfree = 0;
            for (std::size_t t = 0; t < m; ++t) {
                const double yg = y[t] * G[t];
                if (alpha[t] >= C) {
                    if (y[t] < 0) ub = std::min(ub, yg);
                    else lb = std::max(lb, yg);
                } else if (alpha[t] <= 0.0) {
                    if (y[t] > 0) ub = std::min(ub, yg);
                    else lb = std::max(lb, yg);
                } else {
                    ++nfree;
                    sum += yg;
                }
            }
            const double rho = nfree > 0 ? sum / nfree : 0.5 * (ub + lb);
            Binary mach;
            mach.pos = classes_[a];
            mach.neg = classes_[b];
            mach.bias = -rho;
            for (std::size_t t = 0; t < m; ++t) {
                if (alpha[t] > 0.0) {
                    mach.support.push_back(idx[t]);
                    mach.coef.push_back(alpha[t] * y[t]);
                }
            }
            machines_.push_back(std::move(mach));
        }
    }
}

int RbfSvm::predict(const Eigen::VectorXd& x) const
{
    if (classes_.size() == 1) {
        return classes_.front();
    }
    std::map<int, int> votes;
    for (const auto& m : machines_) {
        double f = m.bias;
        for (std::size_t s = 0; s < m.support.size(); ++s) {
            f += m.coef[s] * kernel(x_.row(m.support[s]).transpose(), x);
        }
        ++votes[f > 0.0 ? m.pos : m.neg];
    }
    int best = classes_.front();
    int best_votes = -1;
    for (int c : classes_) {
        if (votes[c] > best_votes) {
            best = c;
            best_votes = votes[c];
        }
    }
    return best;
}

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed)
{
    if (folds < 2) {
        throw std::invalid_argument("stratified_folds: need at least 2 folds");
    }
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        members[labels[i]].push_back(i);
    }
    for (const auto& [label, idx] : members) {
        if (static_cast<int>(idx.size()) < folds) {
            throw InvalidInput("stratified_folds: class " + std::to_string(label) + " has fewer than " +
                               std::to_string(folds) + " members");
        }
    }
    Rng rng(seed);
    std::vector<int> fold(labels.size(), 0);
    int next = 0;
    for (auto& [label, idx] : members) {
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
        }
        for (std::size_t r = 0; r < idx.size(); ++r) {
            fold[idx[r]] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

ClassifierReport svm_rbf_cv(std::span<const CorrespondenceSet> y, std::span<const int> labels, int folds,
                            std::uint64_t seed, const SvmOptions& options)
{
    if (y.size() != labels.size()) {
        throw InvalidInput("svm_rbf_cv: label count does not match the shapes");
    }
    const Eigen::MatrixXd x = feature_matrix(y);
    const int c = class_count(labels);
    const auto fold = stratified_folds(labels, folds, seed);
    ClassifierReport r;
    r.confusion = Eigen::MatrixXi::Zero(c, c);
    std::vector<int> present(labels.begin(), labels.end());
    std::sort(present.begin(), present.end());
    r.degenerate = present.front() == present.back();
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> tr, te;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            (fold[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
        }
        Eigen::MatrixXd xtr(static_cast<Eigen::Index>(tr.size()), x.cols());
        std::vector<int> ltr;
        for (std::size_t i = 0; i < tr.size(); ++i) {
            xtr.row(static_cast<Eigen::Index>(i)) = x.row(tr[i]);
            ltr.push_back(labels[static_cast<std::size_t>(tr[i])]);
        }
        const RbfSvm svm(xtr, ltr, options);
        int correct = 0;
        for (Eigen::Index i : te) {
            const int truth = labels[static_cast<std::size_t>(i)];
            const int pred = svm.predict(x.row(i).transpose());
            ++r.confusion(truth, pred);
            correct += pred == truth;
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(te.size());
        r.fold_accuracy.push_back(acc);
        total += acc;
    }
    r.mean_accuracy = total / folds;
    return r;
}

std::vector<CorrespondenceSet> align_jointly(std::span<const CorrespondenceSet> shapes, bool with_scale)
{
    if (shapes.size() < 2) {
        return {shapes.begin(), shapes.end()};
    }
    return generalized_procrustes(shapes, with_scale).aligned;
}

void write_classifier_report(const std::filesystem::path& dir, const ClassifierReport& r,
                             std::span<const std::string> class_names)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "folds.csv");
        os << "fold,accuracy\n";
        for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f) {
            os << f << ',' << io::format_exact(r.fold_accuracy[f]) << '\n';
        }
    }
    const auto name = [&](Eigen::Index i) {
        return static_cast<std::size_t>(i) < class_names.size() ? class_names[static_cast<std::size_t>(i)]
                                                                 : std::to_string(i);
    };
    {
        std::ofstream os(dir / "confusion.csv");
        os << "true\\predicted";
        for (Eigen::Index c = 0; c < r.confusion.cols(); ++c) {
            os << ',' << name(c);
        }
        os << '\n';
        for (Eigen::Index t = 0; t < r.confusion.rows(); ++t) {
            os << name(t);
            for (Eigen::Index c = 0; c < r.confusion.cols(); ++c) {
                os << ',' << r.confusion(t, c);
            }
            os << '\n';
        }
    }
    nlohmann::ordered_json j;
    j["mean_accuracy"] = r.mean_accuracy;
    j["fold_accuracy"] = r.fold_accuracy;
    j["degenerate"] = r.degenerate;
    std::ofstream os(dir / "summary.json");
    os << j.dump(2) << '\n';
}

} // namespace p2ssm
