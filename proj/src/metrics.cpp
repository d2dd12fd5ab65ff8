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
#include "p2ssm/metrics.hpp"

#include "p2ssm/io.hpp"
#include "p2ssm/losses.hpp"
#include "p2ssm/parallel.hpp"
#include "p2ssm/random.hpp"
#include "p2ssm/tps.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace p2ssm {

double p2s(const CorrespondenceSet& y, const TriangleMesh& mesh)
{
    if (mesh.faces.rows() == 0 || mesh.vertices.rows() == 0) {
        throw InvalidInput("p2s: empty mesh");
    }
    if (y.rows() == 0) {
        throw InvalidInput("p2s: empty correspondence set");
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        total += point_mesh_distance(y.row(i).transpose(), mesh);
    }
    return total / static_cast<double>(y.rows());
}

double correspondence_mse(const CorrespondenceSet& a, const CorrespondenceSet& b)
{
    if (a.rows() != b.rows() || a.rows() == 0) {
        throw ShapeError("correspondence_mse: point counts differ");
    }
    return (a - b).rowwise().squaredNorm().mean();
}

double sampling_invariance_mse(const Predictor& predict, const PointCloud& cloud, int n, std::uint64_t seed_a,
                               std::uint64_t seed_b)
{
    if (n < 1 || cloud.rows() < 2 * static_cast<Eigen::Index>(n)) {
        throw InvalidInput("sampling_invariance_mse: cloud needs at least " + std::to_string(2 * n) + " points");
    }
    const CorrespondenceSet a = predict(subsample(cloud, n, seed_a));
    const CorrespondenceSet b = predict(subsample(cloud, n, seed_b));
    return correspondence_mse(a, b);
}

double rotation_equivariance_mse(const Predictor& predict, const PointCloud& cloud, const Mat3& r1, const Mat3& r2)
{
    require_finite(cloud, "rotation_equivariance_mse");
    // Row convention: rotate(x, R) = x R^T, so R^-1 applied to rows is y R.
    const CorrespondenceSet a = predict(rotate(cloud, r1)) * r1;
    const CorrespondenceSet b = predict(rotate(cloud, r2)) * r2;
    return correspondence_mse(a, b);
}

double rotation_equivariance_mse(const Predictor& predict, const PointCloud& cloud, std::uint64_t seed, double max_deg)
{
    const Rotation r1 = random_rotation(max_deg, derive_seed(seed, 1));
    const Rotation r2 = random_rotation(max_deg, derive_seed(seed, 2));
    return rotation_equivariance_mse(predict, cloud, r1.matrix, r2.matrix);
}

double warp_s2s(const CorrespondenceSet& y_src, const CorrespondenceSet& y_dst, const TriangleMesh& mesh_src,
                const TriangleMesh& mesh_dst_truth)
{
    if (y_src.rows() != y_dst.rows()) {
        throw ShapeError("warp_s2s: correspondence counts differ");
    }
    const TriangleMesh warped = warp_mesh(mesh_src, y_src, y_dst);
    return 0.5 * (mean_vertex_to_surface(warped, mesh_dst_truth) + mean_vertex_to_surface(mesh_dst_truth, warped));
}

Compactness compactness(const ShapeModel& model)
{
    Compactness c;
    c.curve = cumulative_variance(model);
    for (std::size_t i = 0; i < c.curve.size(); ++i) {
        if (c.curve[i] >= 0.95) {
            c.modes_for_95 = static_cast<int>(i) + 1;
            break;
        }
    }
    return c;
}

std::vector<double> generalization_errors(const ShapeModel& model, std::span<const CorrespondenceSet> aligned, int k)
{
    std::vector<double> out;
    out.reserve(aligned.size());
    for (const auto& y : aligned) {
        out.push_back(chamfer(y, reconstruct(model, project(model, y, k))));
    }
    return out;
}

double generalization(const ShapeModel& model, std::span<const CorrespondenceSet> aligned, int k)
{
    if (aligned.empty()) {
        throw InvalidInput("generalization: no shapes");
    }
    const auto e = generalization_errors(model, aligned, k);
    double total = 0.0;
    for (double v : e) {
        total += v;
    }
    return total / static_cast<double>(e.size());
}

std::vector<double> specificity_errors(const ShapeModel& model, std::span<const CorrespondenceSet> train_aligned,
                                       int k, int n_samples, std::uint64_t seed)
{
    if (train_aligned.empty()) {
        throw InvalidInput("specificity: no training shapes");
    }
    if (n_samples < 1) {
        throw std::invalid_argument("specificity: need at least one sample");
    }
    const auto samples = sample_shapes(model, k, n_samples, seed);
    std::vector<double> out(samples.size());
    parallel_for(samples.size(), [&](std::size_t s) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : train_aligned) {
            best = std::min(best, chamfer(samples[s], t));
        }
        out[s] = best;
    });
    return out;
}

double specificity(const ShapeModel& model, std::span<const CorrespondenceSet> train_aligned, int k, int n_samples,
                   std::uint64_t seed)
{
    const auto e = specificity_errors(model, train_aligned, k, n_samples, seed);
    double total = 0.0;
    for (double v : e) {
        total += v;
    }
    return total / static_cast<double>(e.size());
}

std::vector<std::string> MetricReport::metrics() const
{
    std::vector<std::string> names;
    for (const auto& r : rows) {
        if (std::find(names.begin(), names.end(), r.metric) == names.end()) {
            names.push_back(r.metric);
        }
    }
    return names;
}

std::vector<double> MetricReport::values(const std::string& metric) const
{
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.metric == metric) {
            v.push_back(r.value);
        }
    }
    return v;
}

Summary summarize(std::vector<double> values)
{
    Summary s;
    s.count = values.size();
    if (values.empty()) {
        return s;
    }
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (double v : values) {
        total += v;
    }
    s.mean = total / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    const auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    s.min = values.front();
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    s.max = values.back();
    return s;
}

MetricReport evaluate_all(const Predictor& predict, std::span<const EvalSample> train,
                          std::span<const EvalSample> test, const EvalOptions& opt)
{
    if (test.empty()) {
        throw std::invalid_argument("evaluate_all: empty test split");
    }
    const std::size_t nt = test.size();
    std::vector<CorrespondenceSet> test_y(nt);
    std::vector<CorrespondenceSet> train_y(train.size());
    parallel_for(nt + train.size(), [&](std::size_t i) {
        if (i < nt) {
            test_y[i] = predict(test[i].cloud);
        } else {
            train_y[i - nt] = predict(train[i - nt].cloud);
        }
    });

    const bool meshes = !train.empty() && train.front().mesh &&
                        std::all_of(test.begin(), test.end(), [](const EvalSample& s) { return s.mesh.has_value(); });

    std::optional<ShapeModel> model;
    Compactness comp;
    int k_gen = 0;
    std::vector<CorrespondenceSet> train_aligned;
    if (train_y.size() >= 2) {
        model = fit_shape_model(train_y, opt.with_scale);
        comp = compactness(*model);
        k_gen = comp.modes_for_95;
        for (std::size_t i = 0; i < train_y.size(); ++i) {
            train_aligned.push_back(model->transforms[i].apply(train_y[i]));
        }
    }

    // Per-sample metrics, computed independently and collected in fixed order.
    struct PerSample
    {
        double cd = 0, sampling = 0, rotation = 0, me = 0, gen = 0, p2s = 0, warp = 0;
    };
    std::vector<PerSample> ps(nt);
    parallel_for(nt, [&](std::size_t i) {
        const EvalSample& s = test[i];
        PerSample& r = ps[i];
        r.cd = chamfer(test_y[i], s.cloud);
        const std::uint64_t seed = derive_seed(opt.seed, i);
        r.sampling = sampling_invariance_mse(predict, s.cloud, opt.n_input, derive_seed(seed, 1), derive_seed(seed, 2));
        r.rotation = rotation_equivariance_mse(predict, s.cloud, derive_seed(seed, 3), opt.rotation_deg);
        if (nt >= 2) {
            double total = 0.0;
            for (std::size_t j = 0; j < nt; ++j) {
                if (j != i) {
                    total += mapping_error(test_y[i], test_y[j], opt.me_neighbors);
                }
            }
            r.me = total / static_cast<double>(nt - 1);
        }
        if (model) {
            r.gen = chamfer(align_to_model(*model, test_y[i]),
                            reconstruct(*model, project(*model, align_to_model(*model, test_y[i]), k_gen)));
        }
        if (meshes) {
            r.p2s = p2s(test_y[i], *s.mesh);
            r.warp = warp_s2s(train_y.front(), test_y[i], *train.front().mesh, *s.mesh);
        }
    });

    MetricReport report;
    report.model_id = opt.model_id;
    report.dataset_id = opt.dataset_id;
    const auto add = [&](const std::string& metric, const auto& get) {
        for (std::size_t i = 0; i < nt; ++i) {
            report.rows.push_back({test[i].id, metric, get(ps[i])});
        }
    };
    add("cd", [](const PerSample& p) { return p.cd; });
    if (meshes) {
        add("p2s", [](const PerSample& p) { return p.p2s; });
    }
    add("sampling_mse", [](const PerSample& p) { return p.sampling; });
    add("rotation_mse", [](const PerSample& p) { return p.rotation; });
    if (nt >= 2) {
        add("me", [](const PerSample& p) { return p.me; });
    }
    if (meshes) {
        add("warp_s2s", [](const PerSample& p) { return p.warp; });
    }
    if (model) {
        add("generalization", [](const PerSample& p) { return p.gen; });
        const auto spec = specificity_errors(*model, train_aligned, k_gen, opt.specificity_samples,
                                             derive_seed(opt.seed, 0x5bec));
        for (std::size_t s = 0; s < spec.size(); ++s) {
            report.rows.push_back({"draw" + std::to_string(s), "specificity", spec[s]});
        }

        std::vector<CorrespondenceSet> test_aligned;
        for (const auto& y : test_y) {
            test_aligned.push_back(align_to_model(*model, y));
        }
        const int kmax = std::min(model->rank(), opt.curve_modes);
        MetricReport::Curve cc{"compactness", {}};
        MetricReport::Curve gc{"generalization", {}};
        MetricReport::Curve sc{"specificity", {}};
        for (int k = 1; k <= kmax; ++k) {
            cc.values.push_back(comp.curve[static_cast<std::size_t>(k - 1)]);
            gc.values.push_back(generalization(*model, test_aligned, k));
            sc.values.push_back(specificity(*model, train_aligned, k, opt.curve_samples, derive_seed(opt.seed, 0xc0 + k)));
        }
        report.curves = {cc, gc, sc};
    }
    return report;
}

void write_report(const std::filesystem::path& dir, const MetricReport& report)
{
    if (report.rows.empty()) {
        throw InvalidInput("write_report: empty report");
    }
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "metrics.csv");
        os << "sample,metric,value\n";
        for (const auto& r : report.rows) {
            os << r.sample << ',' << r.metric << ',' << io::format_exact(r.value) << '\n';
        }
        if (!os) {
            throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
        }
    }
    {
        std::ofstream os(dir / "curves.csv");
        os << "curve,modes,value\n";
        for (const auto& c : report.curves) {
            for (std::size_t k = 0; k < c.values.size(); ++k) {
                os << c.name << ',' << k + 1 << ',' << io::format_exact(c.values[k]) << '\n';
            }
        }
    }
    nlohmann::ordered_json j;
    j["model"] = report.model_id;
    j["dataset"] = report.dataset_id;
    for (const auto& m : report.metrics()) {
        const Summary s = summarize(report.values(m));
        j["metrics"][m] = {{"count", s.count}, {"mean", s.mean}, {"std", s.std},       {"min", s.min},
                           {"q1", s.q1},       {"median", s.median}, {"q3", s.q3}, {"max", s.max}};
    }
    for (const auto& c : report.curves) {
        j["curves"][c.name] = c.values;
    }
    std::ofstream os(dir / "summary.json");
    os << j.dump(2) << '\n';
}

MetricReport read_report(const std::filesystem::path& dir)
{
    MetricReport report;
    std::ifstream is(dir / "metrics.csv");
    if (!is) {
        throw std::runtime_error("cannot read " + (dir / "metrics.csv").string());
    }
    std::string line;
    if (!std::getline(is, line) || line != "sample,metric,value") {
        throw ParseError((dir / "metrics.csv").string() + ": bad header");
    }
    const auto split3 = [&](const std::string& l, std::string& a, std::string& b, double& v) {
        const auto c1 = l.find(',');
        const auto c2 = l.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw ParseError("report: malformed line '" + l + "'");
        }
        a = l.substr(0, c1);
        b = l.substr(c1 + 1, c2 - c1 - 1);
        try {
            std::size_t used = 0;
            const std::string num = l.substr(c2 + 1);
            v = std::stod(num, &used);
            if (used != num.size()) {
                throw ParseError("report: trailing characters in '" + l + "'");
            }
        } catch (const std::logic_error&) {
            throw ParseError("report: bad number in '" + l + "'");
        }
    };
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        MetricReport::Row r;
        split3(line, r.sample, r.metric, r.value);
        report.rows.push_back(r);
    }
    std::ifstream cs(dir / "curves.csv");
    if (cs && std::getline(cs, line)) {
        while (std::getline(cs, line)) {
            if (line.empty()) {
                continue;
            }
            std::string name, modes;
            double v = 0.0;
            split3(line, name, modes, v);
            if (report.curves.empty() || report.curves.back().name != name) {
                report.curves.push_back({name, {}});
            }
            report.curves.back().values.push_back(v);
        }
    }
    // Identifiers live in the summary; a report without one stays anonymous.
    std::ifstream js(dir / "summary.json");
    if (js) {
        try {
            const auto j = nlohmann::json::parse(js);
            report.model_id = j.value("model", std::string());
            report.dataset_id = j.value("dataset", std::string());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError((dir / "summary.json").string() + ": " + e.what());
        }
    }
    return report;
}

} // namespace p2ssm
