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
#include "p2ssm/ssm.hpp"

#include "p2ssm/io.hpp"
#include "p2ssm/random.hpp"
#include "p2ssm/tps.hpp"

#include <Eigen/Eigenvalues>

#include <fstream>
#include <sstream>

namespace p2ssm {

namespace {

void check_cohort(std::span<const CorrespondenceSet> sets, std::size_t min_count, const char* what)
{
    if (sets.size() < min_count) {
        throw InvalidInput(std::string(what) + ": need at least " + std::to_string(min_count) + " shapes");
    }
    for (const auto& s : sets) {
        if (s.rows() != sets.front().rows() || s.rows() == 0) {
            throw InvalidInput(std::string(what) + ": correspondence counts differ");
        }
        require_finite(s, what);
    }
}

// Deterministic sign: the largest-magnitude entry of each mode is positive.
void fix_signs(Eigen::MatrixXd& modes)
{
    for (Eigen::Index c = 0; c < modes.cols(); ++c) {
        Eigen::Index arg = 0;
        modes.col(c).cwiseAbs().maxCoeff(&arg);
        if (modes(arg, c) < 0.0) {
            modes.col(c) = -modes.col(c);
        }
    }
}

void check_k(const ShapeModel& model, int k, const char* what)
{
    if (!model.fitted()) {
        throw InvalidInput(std::string(what) + ": model is not fitted");
    }
    if (k < 0 || k > model.rank()) {
        throw std::invalid_argument(std::string(what) + ": k=" + std::to_string(k) + " exceeds the model rank " +
                                    std::to_string(model.rank()));
    }
}

} // namespace

ShapeModel fit_shape_model(std::span<const CorrespondenceSet> sets, bool with_scale)
{
    check_cohort(sets, 2, "fit_shape_model");
    const GpaResult gpa = generalized_procrustes(sets, with_scale);
    const Eigen::Index n = static_cast<Eigen::Index>(sets.size());
    const Eigen::Index d = 3 * sets.front().rows();

    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        X.row(i) = flatten(gpa.aligned[static_cast<std::size_t>(i)]).transpose();
    }
    ShapeModel model;
    model.n_points = static_cast<int>(sets.front().rows());
    model.with_scale = with_scale;
    model.transforms = gpa.transforms;
    model.mean = X.colwise().mean().transpose();
    X.rowwise() -= model.mean.transpose();

    const Eigen::Index keep = std::min(n - 1, d);
    const double denom = static_cast<double>(n - 1);
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    if (n - 1 < d) {
        const Eigen::MatrixXd gram = (X * X.transpose()) / denom;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        values = es.eigenvalues().reverse().head(keep);
        vectors = es.eigenvectors().rowwise().reverse().leftCols(keep);
    } else {
        const Eigen::MatrixXd cov = (X.transpose() * X) / denom;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        values = es.eigenvalues().reverse().head(keep);
        vectors = es.eigenvectors().rowwise().reverse().leftCols(keep);
    }

    // Round-off floor relative to the coordinate magnitude of the mean.
    const double energy = model.mean.squaredNorm() / static_cast<double>(d);
    const double floor = 1e-12 * std::max(energy, values.size() ? values(0) : 0.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) > floor && values(i) > 0.0) {
            ++rank;
        } else {
            values(i) = 0.0;
        }
    }
    model.eigenvalues = values;
    if (n - 1 < d) {
        model.modes.resize(d, rank);
        for (int c = 0; c < rank; ++c) {
            model.modes.col(c) = X.transpose() * vectors.col(c) / std::sqrt(denom * values(c));
        }
        // One Gram-Schmidt sweep removes residual round-off.
        for (int c = 0; c < rank; ++c) {
            for (int p = 0; p < c; ++p) {
                model.modes.col(c) -= model.modes.col(p).dot(model.modes.col(c)) * model.modes.col(p);
            }
            model.modes.col(c).normalize();
        }
    } else {
        model.modes = vectors.leftCols(rank);
    }
    fix_signs(model.modes);
    return model;
}

CorrespondenceSet align_to_model(const ShapeModel& model, const CorrespondenceSet& y)
{
    if (!model.fitted()) {
        throw InvalidInput("align_to_model: model is not fitted");
    }
    if (y.rows() != model.n_points) {
        throw InvalidInput("align_to_model: correspondence count does not match the model");
    }
    return procrustes(y, model.mean_shape(), model.with_scale).apply(y);
}

Eigen::VectorXd project(const ShapeModel& model, const CorrespondenceSet& y, int k)
{
    check_k(model, k, "project");
    if (y.rows() != model.n_points) {
        throw InvalidInput("project: correspondence count does not match the model");
    }
    return model.modes.leftCols(k).transpose() * (flatten(y) - model.mean);
}

CorrespondenceSet reconstruct(const ShapeModel& model, const Eigen::VectorXd& scores)
{
    check_k(model, static_cast<int>(scores.size()), "reconstruct");
    return unflatten(model.mean + model.modes.leftCols(scores.size()) * scores);
}

CorrespondenceSet mode_shape(const ShapeModel& model, int mode, double sd_multiple)
{
    if (mode < 0 || mode >= model.rank()) {
        throw std::invalid_argument("mode_shape: mode index out of range");
    }
    return unflatten(model.mean + sd_multiple * std::sqrt(model.eigenvalues(mode)) * model.modes.col(mode));
}

std::vector<CorrespondenceSet> sample_shapes(const ShapeModel& model, int k, int n, std::uint64_t seed)
{
    check_k(model, k, "sample_shapes");
    if (n < 0) {
        throw std::invalid_argument("sample_shapes: negative sample count");
    }
    Rng rng(seed);
    std::vector<CorrespondenceSet> out;
    out.reserve(static_cast<std::size_t>(n));
    Eigen::VectorXd scores(k);
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < k; ++i) {
            scores(i) = normal(rng, 0.0, std::sqrt(model.eigenvalues(i)));
        }
        out.push_back(reconstruct(model, scores));
    }
    return out;
}

std::vector<double> cumulative_variance(const ShapeModel& model)
{
    if (!model.fitted()) {
        throw InvalidInput("cumulative_variance: model is not fitted");
    }
    const double total = model.eigenvalues.sum();
    std::vector<double> curve;
    if (!(total > 0.0)) {
        return curve;
    }
    double run = 0.0;
    for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
        run += model.eigenvalues(i);
        curve.push_back(run / total);
    }
    curve.back() = 1.0;
    return curve;
}

TriangleMesh warp_mean_mesh(const TriangleMesh& reference_mesh, const CorrespondenceSet& reference_y,
                            const CorrespondenceSet& target)
{
    return warp_mesh(reference_mesh, reference_y, target);
}

Points3<double> estimate_normals(const CorrespondenceSet& y, int k)
{
    k = std::min<int>(k, static_cast<int>(y.rows()) - 1);
    const IndexMatrix nbr = knn_indices(y, k);
    const Eigen::RowVector3d centroid = y.colwise().mean();
    Points3<double> normals(y.rows(), 3);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        Eigen::MatrixXd local(k + 1, 3);
        local.row(0) = y.row(i);
        for (int r = 0; r < k; ++r) {
            local.row(r + 1) = y.row(nbr(i, r));
        }
        const Eigen::RowVector3d c = local.colwise().mean();
        local.rowwise() -= c;
        const Eigen::SelfAdjointEigenSolver<Mat3> es(local.transpose() * local);
        Eigen::RowVector3d nrm = es.eigenvectors().col(0).transpose();
        if (nrm.dot(y.row(i) - centroid) < 0.0) {
            nrm = -nrm;
        }
        normals.row(i) = nrm;
    }
    return normals;
}

GroupDifferenceMap group_difference(std::span<const CorrespondenceSet> group_a,
                                    std::span<const CorrespondenceSet> group_b, bool with_scale,
                                    bool signed_normals)
{
    check_cohort(group_a, 1, "group_difference");
    check_cohort(group_b, 1, "group_difference");
    if (group_a.front().rows() != group_b.front().rows()) {
        throw InvalidInput("group_difference: correspondence counts differ between groups");
    }
    std::vector<CorrespondenceSet> all(group_a.begin(), group_a.end());
    all.insert(all.end(), group_b.begin(), group_b.end());
    const GpaResult gpa = generalized_procrustes(all, with_scale);

    GroupDifferenceMap out;
    const Eigen::Index m = group_a.front().rows();
    out.mean_a = CorrespondenceSet::Zero(m, 3);
    out.mean_b = CorrespondenceSet::Zero(m, 3);
    for (std::size_t i = 0; i < all.size(); ++i) {
        (i < group_a.size() ? out.mean_a : out.mean_b) += gpa.aligned[i];
    }
    out.mean_a /= static_cast<double>(group_a.size());
    out.mean_b /= static_cast<double>(group_b.size());
    const CorrespondenceSet delta = out.mean_b - out.mean_a;
    out.distance = delta.rowwise().norm();
    if (signed_normals) {
        const Points3<double> n = estimate_normals(out.mean_a);
        out.signed_distance = delta.cwiseProduct(n).rowwise().sum();
    }
    return out;
}

void save_shape_model(const std::filesystem::path& path, const ShapeModel& model)
{
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    const auto f = io::format_exact;
    os << "p2ssm-shape-model 1\n";
    os << "points " << model.n_points << "\nrank " << model.rank() << "\nwith_scale " << (model.with_scale ? 1 : 0)
       << "\neigenvalues " << model.eigenvalues.size() << "\ntransforms " << model.transforms.size() << "\n";
    os << "mean\n";
    for (Eigen::Index i = 0; i < model.mean.size(); ++i) {
        os << f(model.mean(i)) << '\n';
    }
    os << "eigenvalues\n";
    for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
        os << f(model.eigenvalues(i)) << '\n';
    }
    os << "modes\n";
    for (Eigen::Index r = 0; r < model.modes.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.modes.cols(); ++c) {
            os << (c ? " " : "") << f(model.modes(r, c));
        }
        os << '\n';
    }
    os << "transforms\n";
    for (const auto& t : model.transforms) {
        os << f(t.scale);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                os << ' ' << f(t.rotation(r, c));
            }
        }
        for (int c = 0; c < 3; ++c) {
            os << ' ' << f(t.translation(c));
        }
        os << '\n';
    }
}

ShapeModel load_shape_model(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "p2ssm-shape-model" || version != 1) {
        throw ParseError(path.string() + ": not a shape model file");
    }
    const auto field = [&](const char* name) {
        std::string key;
        long long v = 0;
        if (!(is >> key >> v) || key != name) {
            throw ParseError(path.string() + ": expected '" + name + "'");
        }
        return v;
    };
    const auto section = [&](const char* name) {
        std::string key;
        if (!(is >> key) || key != name) {
            throw ParseError(path.string() + ": expected section '" + name + "'");
        }
    };
    const auto number = [&]() {
        double v = 0.0;
        if (!(is >> v)) {
            throw ParseError(path.string() + ": truncated numeric block");
        }
        return v;
    };
    ShapeModel m;
    m.n_points = static_cast<int>(field("points"));
    const auto rank = field("rank");
    m.with_scale = field("with_scale") != 0;
    const auto n_eig = field("eigenvalues");
    const auto n_tf = field("transforms");
    if (m.n_points <= 0 || rank < 0 || n_eig < rank || n_tf < 0) {
        throw ParseError(path.string() + ": inconsistent header");
    }
    const Eigen::Index d = 3 * static_cast<Eigen::Index>(m.n_points);
    section("mean");
    m.mean.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        m.mean(i) = number();
    }
    section("eigenvalues");
    m.eigenvalues.resize(n_eig);
    for (Eigen::Index i = 0; i < n_eig; ++i) {
        m.eigenvalues(i) = number();
    }
    section("modes");
    m.modes.resize(d, rank);
    for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < rank; ++c) {
            m.modes(r, c) = number();
        }
    }
    section("transforms");
    for (long long i = 0; i < n_tf; ++i) {
        Similarity t;
        t.scale = number();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                t.rotation(r, c) = number();
            }
        }
        for (int c = 0; c < 3; ++c) {
            t.translation(c) = number();
        }
        m.transforms.push_back(t);
    }
    return m;
}

} // namespace p2ssm
