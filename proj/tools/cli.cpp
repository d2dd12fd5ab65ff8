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
#include "cli.hpp"

#include "svg_plot.hpp"

#include "p2ssm/datasets.hpp"
#include "p2ssm/downstream.hpp"
#include "p2ssm/io.hpp"
#include "p2ssm/metrics.hpp"
#include "p2ssm/ssm.hpp"
#include "p2ssm/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#ifndef P2SSM_VERSION
#define P2SSM_VERSION "unknown"
#endif

namespace p2ssm::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// A flag value that parsed but makes no sense; reported like a CLI11 error.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

std::string hex(std::uint64_t h)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_bytes(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot read " + p.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream os(p, std::ios::binary);
    os << text;
    if (!os) {
        throw std::runtime_error("cannot write " + p.string());
    }
}

fs::path manifest_path(const fs::path& data)
{
    return fs::is_directory(data) ? data / "manifest.csv" : data;
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(item);
    }
    return out;
}

void prepare_out(const fs::path& out, bool force)
{
    if (fs::exists(out)) {
        if (!fs::is_directory(out)) {
            throw std::runtime_error(out.string() + " exists and is not a directory");
        }
        if (!force && !fs::is_empty(out)) {
            throw std::runtime_error(out.string() + " is not empty; pass --force to overwrite");
        }
    }
    fs::create_directories(out);
}

// Sorted distinct non-empty labels; a label's class index is its position.
std::vector<std::string> class_names(const DatasetManifest& m)
{
    std::set<std::string> s;
    for (const auto& e : m.entries) {
        if (!e.label.empty()) {
            s.insert(e.label);
        }
    }
    return {s.begin(), s.end()};
}

int label_index(const std::vector<std::string>& names, const std::string& label)
{
    const auto it = std::find(names.begin(), names.end(), label);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::vector<const ManifestEntry*> select_entries(const DatasetManifest& m, const std::string& which)
{
    if (which == "all") {
        std::vector<const ManifestEntry*> out;
        for (const auto& e : m.entries) {
            out.push_back(&e);
        }
        return out;
    }
    return m.select(parse_split(which));
}

std::vector<TrainSample> train_samples(const DatasetManifest& m, Split s, const std::vector<std::string>& names)
{
    std::vector<TrainSample> out;
    for (const auto* e : m.select(s)) {
        out.push_back({io::read_cloud(m.resolve(e->cloud_path)), label_index(names, e->label), e->subject});
    }
    return out;
}

std::vector<EvalSample> eval_samples(const DatasetManifest& m, Split s)
{
    std::vector<EvalSample> out;
    for (const auto* e : m.select(s)) {
        EvalSample x{e->id, io::read_cloud(m.resolve(e->cloud_path)), std::nullopt};
        if (!e->mesh_path.empty()) {
            x.mesh = io::read_mesh(m.resolve(e->mesh_path));
        }
        out.push_back(std::move(x));
    }
    return out;
}

TrainConfig load_config(const std::string& path, const std::vector<std::string>& sets)
{
    TrainConfig cfg = path.empty() ? TrainConfig{} : read_train_config(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--set expects key=value, got '" + kv + "'");
        }
        try {
            set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

// Option values in declaration order, without the output location.
std::string canonical_options(const CLI::App& sub)
{
    std::string s = sub.get_name();
    for (const CLI::Option* o : sub.get_options()) {
        const std::string name = o->get_name();
        if (name == "--help" || name == "--out" || name == "--force" || name == "--quiet") {
            continue;
        }
        s += '\n' + name + '=';
        if (o->count() == 0) {
            s += o->get_default_str();
        } else {
            for (const auto& r : o->results()) {
                s += r + ';';
            }
        }
    }
    return s;
}

void write_run_manifest(const fs::path& out, const std::vector<std::string>& args, std::uint64_t config_hash,
                        std::uint64_t seed, const std::vector<std::string>& inputs)
{
    ordered_json j;
    j["tool"] = "p2ssm";
    j["version"] = P2SSM_VERSION;
    j["verb"] = args.front();
    j["argv"] = args;
    j["config_hash"] = hex(config_hash);
    j["seed"] = seed;
    auto arr = ordered_json::array();
    for (const auto& p : inputs) {
        arr.push_back({{"path", p}, {"hash", hex(input_hash(p))}});
    }
    j["inputs"] = arr;
    write_text(out / "run.json", j.dump(2) + "\n");
}

std::string fmt(double v)
{
    return io::format_exact(v);
}

Predictor predictor(const Model& model)
{
    return [&model](const PointCloud& c) { return infer(c, model); };
}

// ---- plotting ---------------------------------------------------------------

struct LoadedReport
{
    std::string name;
    std::optional<MetricReport> metrics;
    std::vector<double> fold_accuracy;
};

LoadedReport load_report(const fs::path& dir)
{
    LoadedReport r;
    r.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    if (fs::exists(dir / "metrics.csv")) {
        r.metrics = read_report(dir);
        if (r.metrics->rows.empty() && r.metrics->curves.empty()) {
            throw ParseError(dir.string() + ": empty report");
        }
        if (!r.metrics->model_id.empty()) {
            r.name = r.metrics->model_id;
        }
        return r;
    }
    if (fs::exists(dir / "folds.csv")) {
        std::ifstream is(dir / "folds.csv");
        std::string line;
        if (!std::getline(is, line) || line != "fold,accuracy") {
            throw ParseError((dir / "folds.csv").string() + ": bad header");
        }
        while (std::getline(is, line)) {
            const auto comma = line.find(',');
            if (comma == std::string::npos) {
                throw ParseError((dir / "folds.csv").string() + ": malformed line '" + line + "'");
            }
            try {
                std::size_t used = 0;
                const std::string v = line.substr(comma + 1);
                r.fold_accuracy.push_back(std::stod(v, &used));
                if (used != v.size()) {
                    throw std::invalid_argument(v);
                }
            } catch (const std::exception&) {
                throw ParseError((dir / "folds.csv").string() + ": bad number in '" + line + "'");
            }
        }
        if (r.fold_accuracy.empty()) {
            throw ParseError(dir.string() + ": empty report");
        }
        return r;
    }
    throw ParseError(dir.string() + ": no metrics.csv or folds.csv");
}

// ---- verbs ------------------------------------------------------------------

struct Options
{
    bool force = false;
    bool quiet = false;
    std::string out;
    std::uint64_t seed = 0;

    // generate
    std::string kind = "half-torus";
    int n = 50;
    int points = 5000;
    int time_points = 16;
    double u_min = 0.15, u_max = 0.85;
    std::string label;

    // data / models
    std::string data, model, config, split_name = "test";
    std::vector<std::string> data_list, labels;
    std::vector<std::string> sets;

    // split
    std::string ratios = "0.7,0.1,0.2";

    // perturb
    std::string mode = "misaligned";
    double max_deg = 180.0, max_trans = 10.0;

    // evaluate
    int specificity_samples = 1000;
    int me_neighbors = 10;
    std::string model_id;

    // analyze
    bool with_scale = false;
    int modes = 3;
    double sd = 1.5;

    // classify
    std::string method = "knn";
    int k = 10, folds = 5;
    bool no_align = false;
    double svm_c = 1.0, svm_gamma = 0.0;

    // sweep
    std::string axis, values;

    // plot
    std::vector<std::string> reports;
    std::string plot_kind = "all";
};

void do_generate(const Options& o, std::ostream& out)
{
    if (o.kind == "half-torus") {
        HalfTorusParams p;
        p.cloud_points = o.points;
        p.u_min = o.u_min;
        p.u_max = o.u_max;
        p.validate();
        const auto shapes = generate_half_torus_bump(o.n, p, o.seed);
        const auto m = write_half_torus_dataset(o.out, shapes, o.label.empty() ? "half_torus" : o.label);
        out << "wrote " << m.entries.size() << " half-torus shapes to " << o.out << '\n';
    } else {
        EllipsoidParams p;
        p.cloud_points = o.points;
        p.time_points = o.time_points;
        p.validate();
        const auto subjects = generate_4d_ellipsoids(o.n, p, o.seed);
        const auto m = write_ellipsoid_dataset(o.out, subjects, p);
        out << "wrote " << m.entries.size() << " ellipsoid frames to " << o.out << '\n';
    }
}

void do_split(const Options& o, std::ostream& out)
{
    const auto r = split_list(o.ratios);
    if (r.size() != 3) {
        throw UsageError("--ratios expects three comma-separated values");
    }
    std::array<double, 3> ratios{};
    for (std::size_t i = 0; i < 3; ++i) {
        try {
            ratios[i] = std::stod(r[i]);
        } catch (const std::exception&) {
            throw UsageError("--ratios: bad number '" + r[i] + "'");
        }
    }
    DatasetManifest merged;
    if (o.data_list.size() == 1) {
        merged = read_manifest(manifest_path(o.data_list.front()));
    } else {
        if (!o.labels.empty() && o.labels.size() != o.data_list.size()) {
            throw UsageError("--label must be given once per --data or not at all");
        }
        std::vector<DatasetManifest> parts;
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < o.data_list.size(); ++i) {
            parts.push_back(read_manifest(manifest_path(o.data_list[i])));
            if (!o.labels.empty()) {
                labels.push_back(o.labels[i]);
            } else if (!parts.back().entries.empty() && !parts.back().entries.front().label.empty()) {
                labels.push_back(parts.back().entries.front().label);
            } else {
                labels.push_back(fs::absolute(o.data_list[i]).lexically_normal().filename().string());
            }
        }
        merged = compose_multi_anatomy(parts, labels);
    }
    const auto m = split(std::move(merged), ratios, o.seed);
    write_manifest(fs::path(o.out) / "manifest.csv", m);
    out << "train " << m.select(Split::train).size() << ", val " << m.select(Split::val).size() << ", test "
        << m.select(Split::test).size() << '\n';
}

void do_perturb(const Options& o, std::ostream& out)
{
    const auto m = make_misaligned_variant(read_manifest(manifest_path(o.data)), parse_alignment(o.mode), o.max_deg,
                                           o.max_trans, o.seed, o.out);
    out << "wrote " << m.entries.size() << " " << o.mode << " shapes to " << o.out << '\n';
}

void do_train(const Options& o, const TrainConfig& cfg, std::ostream& out, std::ostream& err)
{
    const auto m = read_manifest(manifest_path(o.data));
    const auto names = class_names(m);
    const auto tr = train_samples(m, Split::train, names);
    const auto va = train_samples(m, Split::val, names);
    const fs::path dir(o.out);
    write_text(dir / "config.txt", format_train_config(cfg));
    const auto log_line = [&](const EpochLog& e) {
        if (!o.quiet) {
            err << "epoch " << e.epoch << " train_cd " << e.train_cd << " val_cd " << e.val_cd << '\n';
        }
    };
    const TrainResult r = train(cfg, tr, va, log_line);
    save_checkpoint(dir / "best.ckpt", r.model,
                    {r.best_epoch, r.best_val_cd, cfg.seed, to_string(cfg.variant), names});
    write_epoch_log(dir / "epochs.csv", r.log);
    out << "best epoch " << r.best_epoch << " of " << r.epochs_run << ", val cd " << fmt(r.best_val_cd) << '\n';
}

void do_infer(const Options& o, std::ostream& out)
{
    const auto [model, meta] = load_checkpoint(o.model);
    const auto m = read_manifest(manifest_path(o.data));
    const auto sel = select_entries(m, o.split_name);
    for (const auto* e : sel) {
        const auto y = infer(io::read_cloud(m.resolve(e->cloud_path)), model);
        io::write_points(fs::path(o.out) / (e->id + ".particles"), y);
    }
    out << "wrote " << sel.size() << " particle files to " << o.out << '\n';
}

void do_evaluate(const Options& o, std::ostream& out)
{
    const auto [model, meta] = load_checkpoint(o.model);
    const auto m = read_manifest(manifest_path(o.data));
    const auto train = eval_samples(m, Split::train);
    const auto test = eval_samples(m, parse_split(o.split_name));
    if (test.empty()) {
        throw InvalidInput("evaluate: no samples in split '" + o.split_name + "'");
    }
    EvalOptions eo;
    eo.n_input = model.config().n_input;
    eo.me_neighbors = o.me_neighbors;
    eo.specificity_samples = o.specificity_samples;
    eo.seed = o.seed;
    eo.with_scale = o.with_scale;
    eo.model_id = o.model_id.empty() ? meta.variant : o.model_id;
    const fs::path data(o.data);
    eo.dataset_id = (fs::is_directory(data) ? fs::absolute(data).lexically_normal() : data.parent_path())
                        .filename()
                        .string();
    const MetricReport r = evaluate_all(predictor(model), train, test, eo);
    write_report(o.out, r);
    for (const auto& name : r.metrics()) {
        const Summary s = summarize(r.values(name));
        out << name << " mean " << fmt(s.mean) << " median " << fmt(s.median) << '\n';
    }
}

void do_analyze(const Options& o, std::ostream& out)
{
    const auto [model, meta] = load_checkpoint(o.model);
    const auto m = read_manifest(manifest_path(o.data));
    const auto sel = select_entries(m, o.split_name);
    if (sel.size() < 2) {
        throw InvalidInput("analyze: need at least two shapes");
    }
    std::vector<CorrespondenceSet> y;
    for (const auto* e : sel) {
        y.push_back(infer(io::read_cloud(m.resolve(e->cloud_path)), model));
    }
    const ShapeModel sm = fit_shape_model(y, o.with_scale);
    const fs::path dir(o.out);
    save_shape_model(dir / "shape_model.txt", sm);
    {
        const auto comp = compactness(sm);
        std::ofstream os(dir / "compactness.csv");
        os << "modes,cumulative_variance\n";
        for (std::size_t k = 0; k < comp.curve.size(); ++k) {
            os << k + 1 << ',' << fmt(comp.curve[k]) << '\n';
        }
        out << "modes for 95% variance: " << comp.modes_for_95 << '\n';
    }
    io::write_points(dir / "mean.particles", sm.mean_shape());
    for (int k = 0; k < std::min(o.modes, sm.rank()); ++k) {
        io::write_points(dir / ("mode" + std::to_string(k + 1) + "_minus.particles"), mode_shape(sm, k, -o.sd));
        io::write_points(dir / ("mode" + std::to_string(k + 1) + "_plus.particles"), mode_shape(sm, k, o.sd));
    }
    if (!sel.front()->mesh_path.empty()) {
        TriangleMesh ref = io::read_mesh(m.resolve(sel.front()->mesh_path));
        ref.vertices = sm.transforms.front().apply(ref.vertices);
        const auto warped = warp_mean_mesh(ref, sm.transforms.front().apply(y.front()), sm.mean_shape());
        io::write_ply(dir / "mean_mesh.ply", warped);
    }
    std::vector<std::string> labels;
    for (const auto* e : sel) {
        if (!e->label.empty() && std::find(labels.begin(), labels.end(), e->label) == labels.end()) {
            labels.push_back(e->label);
        }
    }
    std::sort(labels.begin(), labels.end());
    if (labels.size() >= 2) {
        std::vector<CorrespondenceSet> a, b;
        for (std::size_t i = 0; i < sel.size(); ++i) {
            if (sel[i]->label == labels[0]) a.push_back(y[i]);
            if (sel[i]->label == labels[1]) b.push_back(y[i]);
        }
        const auto g = group_difference(a, b, o.with_scale, true);
        std::ofstream os(dir / "group_difference.csv");
        os << "point,distance,signed_distance\n";
        for (Eigen::Index i = 0; i < g.distance.size(); ++i) {
            os << i << ',' << fmt(g.distance(i)) << ',' << fmt(g.signed_distance(i)) << '\n';
        }
        out << "group difference " << labels[0] << " vs " << labels[1] << ": max " << fmt(g.distance.maxCoeff())
            << '\n';
    }
}

void do_classify(const Options& o, std::ostream& out)
{
    const auto [model, meta] = load_checkpoint(o.model);
    const auto m = read_manifest(manifest_path(o.data));
    const auto names = class_names(m);
    if (names.empty()) {
        throw InvalidInput("classify: the dataset has no labels");
    }
    const auto predict_set = [&](const std::vector<const ManifestEntry*>& sel, std::vector<CorrespondenceSet>& y,
                                 std::vector<int>& labels) {
        for (const auto* e : sel) {
            const int l = label_index(names, e->label);
            if (l < 0) {
                throw InvalidInput("classify: sample " + e->id + " has no label");
            }
            y.push_back(infer(io::read_cloud(m.resolve(e->cloud_path)), model));
            labels.push_back(l);
        }
    };
    ClassifierReport r;
    if (o.method == "knn") {
        std::vector<CorrespondenceSet> y;
        std::vector<int> ltr, lte;
        predict_set(m.select(Split::train), y, ltr);
        predict_set(m.select(Split::test), y, lte);
        if (!o.no_align) {
            y = align_jointly(y, o.with_scale);
        }
        const std::span<const CorrespondenceSet> all(y);
        r = knn_classify(all.first(ltr.size()), ltr, all.subspan(ltr.size()), lte, o.k);
    } else {
        std::vector<CorrespondenceSet> y;
        std::vector<int> labels;
        predict_set(select_entries(m, "all"), y, labels);
        if (!o.no_align) {
            y = align_jointly(y, o.with_scale);
        }
        r = svm_rbf_cv(y, labels, o.folds, o.seed, {o.svm_c, o.svm_gamma});
    }
    write_classifier_report(o.out, r, names);
    out << "accuracy " << fmt(r.mean_accuracy) << (r.degenerate ? " (single class)" : "") << '\n';
}

void do_sweep(const Options& o, const TrainConfig& cfg, std::ostream& out)
{
    const auto m = read_manifest(manifest_path(o.data));
    const auto names = class_names(m);
    const auto tr = train_samples(m, Split::train, names);
    const auto va = train_samples(m, Split::val, names);
    std::vector<PointCloud> test;
    for (const auto* e : m.select(Split::test)) {
        test.push_back(io::read_cloud(m.resolve(e->cloud_path)));
    }
    const auto values = split_list(o.values);
    const auto& keys = train_config_keys();
    if (std::find(keys.begin(), keys.end(), o.axis) == keys.end()) {
        throw UsageError("--axis: unknown config key '" + o.axis + "'");
    }
    if (values.empty()) {
        throw UsageError("--values: nothing to sweep");
    }
    for (const auto& v : values) {
        TrainConfig probe = cfg;
        try {
            set_config_value(probe, o.axis, v);
            probe.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    const auto rows = sweep(cfg, o.axis, values, tr, va, test);
    std::ofstream os(fs::path(o.out) / "sweep.csv");
    os << o.axis << ",epochs_run,best_epoch,best_val_cd,test_cd\n";
    for (const auto& r : rows) {
        os << r.value << ',' << r.epochs_run << ',' << r.best_epoch << ',' << fmt(r.best_val_cd) << ','
           << fmt(r.test_cd) << '\n';
        out << o.axis << '=' << r.value << " val cd " << fmt(r.best_val_cd) << " test cd " << fmt(r.test_cd) << '\n';
    }
}

void do_plot(const Options& o, std::ostream& out)
{
    // Load and validate everything before the first file is written.
    std::vector<LoadedReport> reports;
    for (const auto& p : o.reports) {
        reports.push_back(load_report(p));
    }
    std::vector<std::pair<std::string, std::string>> files;
    const bool box = o.plot_kind != "curves";
    const bool curves = o.plot_kind != "box";
    if (box) {
        std::vector<std::string> metrics;
        for (const auto& r : reports) {
            if (r.metrics) {
                for (const auto& name : r.metrics->metrics()) {
                    if (std::find(metrics.begin(), metrics.end(), name) == metrics.end()) {
                        metrics.push_back(name);
                    }
                }
            }
        }
        for (const auto& name : metrics) {
            std::vector<plot::Series> boxes;
            for (const auto& r : reports) {
                if (r.metrics) {
                    auto v = r.metrics->values(name);
                    if (!v.empty()) {
                        boxes.push_back({r.name, std::move(v)});
                    }
                }
            }
            files.emplace_back("box_" + name + ".svg", plot::boxplot_svg(name, name, boxes));
        }
        std::vector<plot::Series> acc;
        for (const auto& r : reports) {
            if (!r.fold_accuracy.empty()) {
                acc.push_back({r.name, r.fold_accuracy});
            }
        }
        if (!acc.empty()) {
            files.emplace_back("box_accuracy.svg", plot::boxplot_svg("classification accuracy", "accuracy", acc));
        }
    }
    if (curves) {
        for (const char* name : {"compactness", "generalization", "specificity"}) {
            std::vector<plot::Series> lines;
            for (const auto& r : reports) {
                if (!r.metrics) continue;
                for (const auto& c : r.metrics->curves) {
                    if (c.name == name && !c.values.empty()) {
                        lines.push_back({r.name, c.values});
                    }
                }
            }
            if (!lines.empty()) {
                const std::string y = std::string(name) == "compactness" ? "cumulative variance" : "error";
                files.emplace_back(std::string("curve_") + name + ".svg", plot::curve_svg(name, y, lines, 30));
            }
        }
    }
    if (files.empty()) {
        throw InvalidInput("plot: nothing to plot for kind '" + o.plot_kind + "'");
    }
    for (const auto& [name, svg] : files) {
        write_text(fs::path(o.out) / name, svg);
    }
    out << "wrote " << files.size() << " plots to " << o.out << '\n';
}

int replay(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Re-run a recorded command from its run manifest", "p2ssm --replay"};
    std::string manifest, new_out;
    bool force = false;
    app.add_option("--replay", manifest, "run.json written by an earlier command")->required();
    app.add_option("--out", new_out, "write to this directory instead of the recorded one");
    app.add_flag("--force", force, "allow overwriting a non-empty output directory");
    std::vector<const char*> argv{"p2ssm"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }
    std::vector<std::string> recorded;
    try {
        const auto j = nlohmann::json::parse(read_bytes(manifest));
        recorded = j.at("argv").get<std::vector<std::string>>();
        for (const auto& in : j.at("inputs")) {
            const auto path = in.at("path").get<std::string>();
            if (hex(input_hash(path)) != in.at("hash").get<std::string>()) {
                throw std::runtime_error("input " + path + " changed since the recorded run");
            }
        }
    } catch (const std::exception& e) {
        err << "p2ssm: error: " << e.what() << '\n';
        return 1;
    }
    if (recorded.empty()) {
        err << "p2ssm: error: " << manifest << " records no command\n";
        return 1;
    }
    if (!new_out.empty()) {
        const auto it = std::find(recorded.begin(), recorded.end(), "--out");
        if (it == recorded.end() || it + 1 == recorded.end()) {
            err << "p2ssm: error: recorded command has no --out\n";
            return 1;
        }
        *(it + 1) = new_out;
    }
    if (force && std::find(recorded.begin(), recorded.end(), "--force") == recorded.end()) {
        recorded.push_back("--force");
    }
    return run(recorded, out, err);
}

} // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h)
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t input_hash(const fs::path& path)
{
    const bool dataset = fs::is_directory(path) || path.filename() == "manifest.csv";
    if (!dataset) {
        return fnv1a(read_bytes(path));
    }
    const fs::path mp = manifest_path(path);
    std::uint64_t h = fnv1a(read_bytes(mp));
    const auto m = read_manifest(mp);
    for (const auto& e : m.entries) {
        h = fnv1a(read_bytes(m.resolve(e.cloud_path)), h);
        if (!e.mesh_path.empty()) {
            h = fnv1a(read_bytes(m.resolve(e.mesh_path)), h);
        }
    }
    return h;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    if (!args.empty() && args.front() == "--replay") {
        return replay(args, out, err);
    }

    CLI::App app{"Correspondence learning and statistical shape modelling on point clouds", "p2ssm"};
    app.require_subcommand(1);
    app.set_version_flag("--version", P2SSM_VERSION);
    Options o;

    const auto add_out = [&](CLI::App* s) {
        s->add_option("--out", o.out, "output directory")->required();
        s->add_flag("--force", o.force, "allow overwriting a non-empty output directory");
    };
    const auto add_data = [&](CLI::App* s) {
        s->add_option("--data", o.data, "dataset directory or manifest.csv")->required();
    };
    const auto add_model = [&](CLI::App* s) {
        s->add_option("--model", o.model, "checkpoint written by train")->required();
    };
    const auto add_seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "random seed")->capture_default_str(); };
    const auto split_check = CLI::IsMember({"train", "val", "test", "all"});

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
    gen->add_option("--kind", o.kind, "half-torus or ellipsoid-4d")
        ->check(CLI::IsMember({"half-torus", "ellipsoid-4d"}))
        ->capture_default_str();
    gen->add_option("--n", o.n, "shapes (half-torus) or subjects (ellipsoid-4d)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--points", o.points, "surface points per cloud")->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--time-points", o.time_points, "frames per subject")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--u-min", o.u_min, "lowest bump position")->capture_default_str();
    gen->add_option("--u-max", o.u_max, "highest bump position")->capture_default_str();
    gen->add_option("--label", o.label, "class label written to the manifest");
    add_seed(gen);
    add_out(gen);

    auto* spl = app.add_subcommand("split", "assign train/val/test splits, merging several datasets if given");
    spl->add_option("--data", o.data_list, "dataset directory or manifest.csv, repeatable")->required();
    spl->add_option("--label", o.labels, "class label per --data when merging");
    spl->add_option("--ratios", o.ratios, "train,val,test fractions")->capture_default_str();
    add_seed(spl);
    add_out(spl);

    auto* per = app.add_subcommand("perturb", "write a pre-aligned, original or misaligned copy of a dataset");
    add_data(per);
    per->add_option("--mode", o.mode, "prealigned, original or misaligned")
        ->check(CLI::IsMember({"prealigned", "original", "misaligned"}))
        ->capture_default_str();
    per->add_option("--max-deg", o.max_deg, "largest rotation per axis, degrees")
        ->check(CLI::Range(0.0, 180.0))
        ->capture_default_str();
    per->add_option("--max-trans", o.max_trans, "largest translation per axis")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    add_seed(per);
    add_out(per);

    auto* trn = app.add_subcommand("train", "train a correspondence model");
    trn->add_option("--config", o.config, "key = value training configuration");
    trn->add_option("--set", o.sets, "override a configuration key (key=value), repeatable");
    add_data(trn);
    trn->add_flag("--quiet", o.quiet, "no per-epoch progress");
    add_out(trn);

    auto* inf = app.add_subcommand("infer", "write predicted correspondences as .particles files");
    add_model(inf);
    add_data(inf);
    inf->add_option("--split", o.split_name, "train, val, test or all")->check(split_check);
    add_out(inf);

    auto* ev = app.add_subcommand("evaluate", "compute the metric report for a split");
    add_model(ev);
    add_data(ev);
    ev->add_option("--split", o.split_name, "evaluated split")->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--specificity-samples", o.specificity_samples, "shapes drawn for specificity")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ev->add_option("--me-neighbors", o.me_neighbors, "neighbourhood size of the mapping error")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    ev->add_option("--model-id", o.model_id, "name recorded in the report");
    ev->add_flag("--with-scale", o.with_scale, "remove scale when aligning shapes");
    add_seed(ev);
    add_out(ev);

    auto* an = app.add_subcommand("analyze", "fit a shape model to predicted correspondences");
    add_model(an);
    add_data(an);
    an->add_option("--split", o.split_name, "train, val, test or all")->check(split_check);
    an->add_option("--modes", o.modes, "modes to export")->check(CLI::NonNegativeNumber)->capture_default_str();
    an->add_option("--sd", o.sd, "standard deviations for mode shapes")->capture_default_str();
    an->add_flag("--with-scale", o.with_scale, "remove scale when aligning shapes");
    add_out(an);

    auto* cls = app.add_subcommand("classify", "classify shapes from their correspondences");
    add_model(cls);
    add_data(cls);
    cls->add_option("--method", o.method, "knn (train vs test split) or svm (cross-validated)")
        ->check(CLI::IsMember({"knn", "svm"}))
        ->capture_default_str();
    cls->add_option("--k", o.k, "neighbours for knn")->check(CLI::PositiveNumber)->capture_default_str();
    cls->add_option("--folds", o.folds, "cross-validation folds for svm")
        ->check(CLI::Range(2, 1000))
        ->capture_default_str();
    cls->add_option("--svm-c", o.svm_c, "SVM regularisation")->check(CLI::PositiveNumber)->capture_default_str();
    cls->add_option("--svm-gamma", o.svm_gamma, "RBF gamma; 0 picks 1/(dim * variance)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    cls->add_flag("--no-align", o.no_align, "skip joint Procrustes alignment");
    cls->add_flag("--with-scale", o.with_scale, "remove scale when aligning");
    add_seed(cls);
    add_out(cls);

    auto* sw = app.add_subcommand("sweep", "train once per value of one configuration key");
    sw->add_option("--config", o.config, "base configuration");
    sw->add_option("--set", o.sets, "override a configuration key (key=value), repeatable");
    add_data(sw);
    sw->add_option("--axis", o.axis, "configuration key to vary")->required();
    sw->add_option("--values", o.values, "comma-separated values")->required();
    add_out(sw);

    auto* pl = app.add_subcommand("plot", "render report directories as SVG figures");
    pl->add_option("--report", o.reports, "report directory, repeatable")->required();
    pl->add_option("--kind", o.plot_kind, "box, curves or all")
        ->check(CLI::IsMember({"box", "curves", "all"}))
        ->capture_default_str();
    add_out(pl);

    std::vector<const char*> argv{"p2ssm"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    CLI::App* sub = app.get_subcommands().front();
    const std::string verb = sub->get_name();
    // The split default depends on the verb.
    if (sub->get_option_no_throw("--split") && sub->count("--split") == 0) {
        o.split_name = verb == "evaluate" ? "test" : verb == "analyze" ? "train" : "all";
    }

    try {
        TrainConfig cfg;
        std::uint64_t config_hash = fnv1a(canonical_options(*sub));
        std::uint64_t seed = o.seed;
        if (verb == "train" || verb == "sweep") {
            cfg = load_config(o.config, o.sets);
            const std::string text = format_train_config(cfg);
            config_hash = fnv1a(verb == "sweep" ? text + o.axis + '=' + o.values : text);
            seed = cfg.seed;
        }
        std::vector<std::string> inputs;
        for (const std::string* p : {&o.data, &o.model, &o.config}) {
            if (!p->empty()) {
                inputs.push_back(*p);
            }
        }
        inputs.insert(inputs.end(), o.data_list.begin(), o.data_list.end());
        for (const auto& r : o.reports) {
            for (const char* f : {"metrics.csv", "curves.csv", "folds.csv"}) {
                if (fs::exists(fs::path(r) / f)) {
                    inputs.push_back((fs::path(r) / f).string());
                }
            }
        }
        if (verb == "plot") {
            // Validate inputs before touching the output directory.
            for (const auto& r : o.reports) {
                (void)load_report(r);
            }
        }
        prepare_out(o.out, o.force);

        if (verb == "generate") do_generate(o, out);
        else if (verb == "split") do_split(o, out);
        else if (verb == "perturb") do_perturb(o, out);
        else if (verb == "train") do_train(o, cfg, out, err);
        else if (verb == "infer") do_infer(o, out);
        else if (verb == "evaluate") do_evaluate(o, out);
        else if (verb == "analyze") do_analyze(o, out);
        else if (verb == "classify") do_classify(o, out);
        else if (verb == "sweep") do_sweep(o, cfg, out);
        else if (verb == "plot") do_plot(o, out);

        write_run_manifest(o.out, args, config_hash, seed, inputs);
        return 0;
    } catch (const UsageError& e) {
        err << "p2ssm " << verb << ": " << e.what() << '\n' << sub->help();
        return 2;
    } catch (const std::exception& e) {
        err << "p2ssm: error: " << e.what() << '\n';
        return 1;
    }
}

int run(const std::vector<std::string>& args)
{
    return run(args, std::cout, std::cerr);
}

} // namespace p2ssm::cli
