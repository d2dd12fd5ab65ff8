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
#include "p2ssm/losses.hpp"
#include "p2ssm/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace p2ssm {

NearestNeighbors nearest_neighbors(const PointCloud& query, const PointCloud& ref)
{
    if (query.rows() == 0 || ref.rows() == 0) {
        throw InvalidInput("nearest_neighbors: empty point set");
    }
    NearestNeighbors nn;
    nn.index.resize(static_cast<std::size_t>(query.rows()));
    nn.squared_distance.resize(query.rows());

    // Candidate search through the Gram expansion, processed in row blocks to
    // bound memory; the reported distance is recomputed from coordinates.
    const Eigen::VectorXd ref_sq = ref.rowwise().squaredNorm();
    const Eigen::Index block = 512;
    Eigen::MatrixXd d;
    for (Eigen::Index start = 0; start < query.rows(); start += block) {
        const Eigen::Index len = std::min(block, query.rows() - start);
        d.noalias() = -2.0 * query.middleRows(start, len) * ref.transpose();
        d.rowwise() += ref_sq.transpose();
        for (Eigen::Index i = 0; i < len; ++i) {
            Eigen::Index j;
            d.row(i).minCoeff(&j);
            nn.index[static_cast<std::size_t>(start + i)] = static_cast<int>(j);
            nn.squared_distance[start + i] = (query.row(start + i) - ref.row(j)).squaredNorm();
        }
    }
    return nn;
}

double chamfer(const PointCloud& a, const PointCloud& b, PointCloud* grad_a, PointCloud* grad_b)
{
    if (a.rows() == 0 || b.rows() == 0) {
        throw InvalidInput("chamfer: empty point set");
    }
    const auto ab = nearest_neighbors(a, b);
    const auto ba = nearest_neighbors(b, a);
    const double na = static_cast<double>(a.rows());
    const double nb = static_cast<double>(b.rows());
    const double value = ab.squared_distance.mean() + ba.squared_distance.mean();

    if (grad_a || grad_b) {
        PointCloud ga = PointCloud::Zero(a.rows(), 3);
        PointCloud gb = PointCloud::Zero(b.rows(), 3);
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const int j = ab.index[static_cast<std::size_t>(i)];
            const Eigen::RowVector3d g = (2.0 / na) * (a.row(i) - b.row(j));
            ga.row(i) += g;
            gb.row(j) -= g;
        }
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            const int i = ba.index[static_cast<std::size_t>(j)];
            const Eigen::RowVector3d g = (2.0 / nb) * (b.row(j) - a.row(i));
            gb.row(j) += g;
            ga.row(i) -= g;
        }
        if (grad_a) {
            *grad_a = std::move(ga);
        }
        if (grad_b) {
            *grad_b = std::move(gb);
        }
    }
    return value;
}

double mapping_error(const CorrespondenceSet& y1, const CorrespondenceSet& y2, int R, CorrespondenceSet* grad_y1,
                     CorrespondenceSet* grad_y2)
{
    const Eigen::Index m = y1.rows();
    if (y2.rows() != m) {
        throw std::invalid_argument("mapping_error: correspondence counts differ");
    }
    if (R < 1 || R >= m) {
        throw std::invalid_argument("mapping_error: need 1 <= R < M");
    }
    const IndexMatrix nbr = knn_indices(y1, R);
    const double norm = 1.0 / (static_cast<double>(m) * R);

    const bool want_grad = grad_y1 || grad_y2;
    CorrespondenceSet g1, g2;
    if (want_grad) {
        g1 = CorrespondenceSet::Zero(m, 3);
        g2 = CorrespondenceSet::Zero(m, 3);
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (int k = 0; k < R; ++k) {
            const int r = nbr(i, k);
            const Eigen::RowVector3d d1 = y1.row(i) - y1.row(r);
            const Eigen::RowVector3d d2 = y2.row(i) - y2.row(r);
            const double v = std::exp(-d1.squaredNorm());
            const double e = d2.squaredNorm();
            sum += v * e;
            if (want_grad) {
                const Eigen::RowVector3d gd2 = (2.0 * norm * v) * d2;
                g2.row(i) += gd2;
                g2.row(r) -= gd2;
                const Eigen::RowVector3d gd1 = (-2.0 * norm * v * e) * d1;
                g1.row(i) += gd1;
                g1.row(r) -= gd1;
            }
        }
    }
    if (grad_y1) {
        *grad_y1 = std::move(g1);
    }
    if (grad_y2) {
        *grad_y2 = std::move(g2);
    }
    return sum * norm;
}

double consistency_mse(const CorrespondenceSet& a, const CorrespondenceSet& b, CorrespondenceSet* grad_a,
                       CorrespondenceSet* grad_b)
{
    if (a.rows() != b.rows() || a.rows() == 0) {
        throw ShapeError("consistency_mse: correspondence counts differ or are zero");
    }
    const double inv = 1.0 / static_cast<double>(a.rows());
    const CorrespondenceSet diff = a - b;
    if (grad_a) {
        *grad_a = (2.0 * inv) * diff;
    }
    if (grad_b) {
        *grad_b = (-2.0 * inv) * diff;
    }
    return diff.squaredNorm() * inv;
}

LossTerms point2ssm_loss(std::span<const PointCloud> full_clouds, std::span<const CorrespondenceSet> predictions,
                         const LossConfig& cfg, std::vector<CorrespondenceSet>* grads)
{
    const std::size_t b = predictions.size();
    if (b == 0 || full_clouds.size() != b) {
        throw ShapeError("point2ssm_loss: batch sizes differ or are zero");
    }
    const Eigen::Index m = predictions[0].rows();
    for (const auto& y : predictions) {
        if (y.rows() != m) {
            throw ShapeError("point2ssm_loss: predictions differ in point count");
        }
    }
    if (grads) {
        grads->assign(b, CorrespondenceSet::Zero(m, 3));
    }

    LossTerms t;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
        PointCloud g;
        t.cd += inv_b * chamfer(predictions[i], full_clouds[i], grads ? &g : nullptr);
        if (grads) {
            (*grads)[i] += inv_b * g;
        }
    }

    if (b >= 2 && cfg.alpha != 0.0) {
        const double pair_norm = 1.0 / static_cast<double>((b - 1) * (b - 1));
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = i + 1; j < b; ++j) {
                CorrespondenceSet gi, gj;
                t.me += pair_norm * mapping_error(predictions[i], predictions[j], cfg.me_neighbors,
                                                  grads ? &gi : nullptr, grads ? &gj : nullptr);
                if (grads) {
                    (*grads)[i] += cfg.alpha * pair_norm * gi;
                    (*grads)[j] += cfg.alpha * pair_norm * gj;
                }
                t.me += pair_norm * mapping_error(predictions[j], predictions[i], cfg.me_neighbors,
                                                  grads ? &gj : nullptr, grads ? &gi : nullptr);
                if (grads) {
                    (*grads)[i] += cfg.alpha * pair_norm * gi;
                    (*grads)[j] += cfg.alpha * pair_norm * gj;
                }
            }
        }
    }
    t.total = t.cd + cfg.alpha * t.me;
    return t;
}

LossTerms point2ssm_pp_loss(std::span<const PointCloud> full_clouds, std::span<const CorrespondenceSet> predictions,
                            std::span<const CorrespondenceSet> rotated_branch, const LossConfig& cfg,
                            std::vector<CorrespondenceSet>* grads, std::vector<CorrespondenceSet>* rotated_grads)
{
    if (rotated_branch.size() != predictions.size()) {
        throw ShapeError("point2ssm_pp_loss: branch batch sizes differ");
    }
    const LossTerms first = point2ssm_loss(full_clouds, predictions, cfg, grads);
    const LossTerms second = point2ssm_loss(full_clouds, rotated_branch, cfg, rotated_grads);

    LossTerms t = first;
    const double inv_b = 1.0 / static_cast<double>(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        CorrespondenceSet ga, gb;
        const bool g = grads || rotated_grads;
        t.consist += inv_b * consistency_mse(predictions[i], rotated_branch[i], g ? &ga : nullptr, g ? &gb : nullptr);
        if (grads) {
            (*grads)[i] += cfg.consist_weight * inv_b * ga;
        }
        if (rotated_grads) {
            (*rotated_grads)[i] += cfg.consist_weight * inv_b * gb;
        }
    }
    t.total = first.total + second.total + cfg.consist_weight * t.consist;
    return t;
}

double fps_chamfer(const PointCloud& full, const CorrespondenceSet& y, CorrespondenceSet* grad_y)
{
    if (full.rows() < y.rows()) {
        throw std::invalid_argument("fps_chamfer: cloud has fewer points than the prediction");
    }
    const PointCloud down = farthest_point_sample(full, static_cast<int>(y.rows()));
    return chamfer(down, y, nullptr, grad_y);
}

double nll_class_loss(const Eigen::VectorXd& log_probs, int label)
{
    if (label < 0 || label >= log_probs.size()) {
        throw std::out_of_range("nll_class_loss: label " + std::to_string(label) + " out of range");
    }
    if (!log_probs.allFinite() && !std::isfinite(log_probs[label])) {
        throw NumericError("nll_class_loss: non-finite log-probability");
    }
    return -log_probs[label];
}

} // namespace p2ssm
