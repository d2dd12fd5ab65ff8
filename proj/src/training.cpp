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
#include "p2ssm/training.hpp"

#include "p2ssm/geometry.hpp"
#include "p2ssm/io.hpp"
#include "p2ssm/parallel.hpp"
#include "p2ssm/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace p2ssm {

std::string to_string(Variant v)
{
    return v == Variant::point2ssm ? "point2ssm" : "point2ssm_pp";
}

Variant parse_variant(const std::string& s)
{
    if (s == "point2ssm") return Variant::point2ssm;
    if (s == "point2ssm_pp" || s == "point2ssm++") return Variant::point2ssm_pp;
    throw std::invalid_argument("unknown variant '" + s + "' (point2ssm, point2ssm_pp)");
}

void TrainConfig::validate() const
{
    model.validate();
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw std::invalid_argument("lr must be positive");
    }
    if (patience < 1 || max_epochs < 1) {
        throw std::invalid_argument("patience and max_epochs must be >= 1");
    }
    if (!(loss.alpha >= 0.0) || !(loss.consist_weight >= 0.0) || !std::isfinite(loss.alpha) ||
        !std::isfinite(loss.consist_weight)) {
        throw std::invalid_argument("alpha and consist_weight must be finite and >= 0");
    }
    if (loss.me_neighbors < 1 || loss.me_neighbors >= model.n_output) {
        throw std::invalid_argument("me_neighbors must lie in [1, n_output)");
    }
    if (loss.batch_size < 1) {
        throw std::invalid_argument("batch_size must be >= 1");
    }
    if (!(rotation_deg >= 0.0) || !(class_loss_weight >= 0.0)) {
        throw std::invalid_argument("rotation_deg and class_loss_weight must be >= 0");
    }
}

ModelConfig TrainConfig::effective_model() const
{
    ModelConfig m = model;
    m.normalize_input = variant == Variant::point2ssm_pp;
    return m;
}

// ---- config text -------------------------------------------------------------

const std::vector<std::string>& train_config_keys()
{
    static const std::vector<std::string> keys = {
        "variant", "n_input",    "n_output", "k_neighbors", "feat_dim",   "alpha",   "consist_weight",
        "me_neighbors", "batch_size", "lr", "patience", "max_epochs", "seed", "rotation_deg", "multi_anatomy",
        "class_loss_weight"};
    return keys;
}

namespace {

long long parse_int(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used == v.size()) {
            return x;
        }
    } catch (const std::logic_error&) {
    }
    throw ParseError("config: '" + key + "' expects an integer, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size() && std::isfinite(x)) {
            return x;
        }
    } catch (const std::logic_error&) {
    }
    throw ParseError("config: '" + key + "' expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("config: '" + key + "' expects true or false, got '" + v + "'");
}

int to_int(const std::string& key, long long x)
{
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ParseError("config: '" + key + "' out of range");
    }
    return static_cast<int>(x);
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& v)
{
    if (key == "variant") {
        try {
            c.variant = parse_variant(v);
        } catch (const std::invalid_argument& e) {
            throw ParseError(std::string("config: ") + e.what());
        }
    } else if (key == "n_input") c.model.n_input = to_int(key, parse_int(key, v));
    else if (key == "n_output") c.model.n_output = to_int(key, parse_int(key, v));
    else if (key == "k_neighbors") c.model.k_neighbors = to_int(key, parse_int(key, v));
    else if (key == "feat_dim") c.model.feat_dim = to_int(key, parse_int(key, v));
    else if (key == "alpha") c.loss.alpha = parse_real(key, v);
    else if (key == "consist_weight") c.loss.consist_weight = parse_real(key, v);
    else if (key == "me_neighbors") c.loss.me_neighbors = to_int(key, parse_int(key, v));
    else if (key == "batch_size") c.loss.batch_size = to_int(key, parse_int(key, v));
    else if (key == "lr") c.lr = parse_real(key, v);
    else if (key == "patience") c.patience = to_int(key, parse_int(key, v));
    else if (key == "max_epochs") c.max_epochs = to_int(key, parse_int(key, v));
    else if (key == "seed") {
        const long long s = parse_int(key, v);
        if (s < 0) {
            throw ParseError("config: seed must be >= 0");
        }
        c.seed = static_cast<std::uint64_t>(s);
    } else if (key == "rotation_deg") c.rotation_deg = parse_real(key, v);
    else if (key == "multi_anatomy") c.multi_anatomy = parse_bool(key, v);
    else if (key == "class_loss_weight") c.class_loss_weight = parse_real(key, v);
    else {
        throw ParseError("config: unknown key '" + key + "'");
    }
}

TrainConfig parse_train_config(const std::string& text)
{
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::set<std::string> seen;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) {
            throw ParseError("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
        }
        set_config_value(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

TrainConfig read_train_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read config " + path.string());
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_train_config(ss.str());
}

std::string format_train_config(const TrainConfig& c)
{
    std::ostringstream os;
    const auto f = io::format_exact;
    os << "variant = " << to_string(c.variant) << '\n'
       << "n_input = " << c.model.n_input << '\n'
       << "n_output = " << c.model.n_output << '\n'
       << "k_neighbors = " << c.model.k_neighbors << '\n'
       << "feat_dim = " << c.model.feat_dim << '\n'
       << "alpha = " << f(c.loss.alpha) << '\n'
       << "consist_weight = " << f(c.loss.consist_weight) << '\n'
       << "me_neighbors = " << c.loss.me_neighbors << '\n'
       << "batch_size = " << c.loss.batch_size << '\n'
       << "lr = " << f(c.lr) << '\n'
       << "patience = " << c.patience << '\n'
       << "max_epochs = " << c.max_epochs << '\n'
       << "seed = " << c.seed << '\n'
       << "rotation_deg = " << f(c.rotation_deg) << '\n'
       << "multi_anatomy = " << (c.multi_anatomy ? "true" : "false") << '\n'
       << "class_loss_weight = " << f(c.class_loss_weight) << '\n';
    return os.str();
}

// ---- optimiser ---------------------------------------------------------------

Adam::Adam(const ParameterSet<float>& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
{
    for (const auto& v : params.values) {
        m_.push_back(Eigen::MatrixXf::Zero(v.rows(), v.cols()));
        v_.push_back(Eigen::MatrixXf::Zero(v.rows(), v.cols()));
    }
}

void Adam::step(ParameterSet<float>& params, const std::vector<Eigen::MatrixXf>& grads)
{
    if (grads.size() != params.size() || m_.size() != params.size()) {
        throw ShapeError("Adam: gradient count does not match the parameters");
    }
    ++t_;
    const auto b1 = static_cast<float>(beta1_);
    const auto b2 = static_cast<float>(beta2_);
    const auto step = static_cast<float>(lr_ * std::sqrt(1.0 - std::pow(beta2_, static_cast<double>(t_))) /
                                         (1.0 - std::pow(beta1_, static_cast<double>(t_))));
    const auto eps = static_cast<float>(eps_);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0f - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0f - b2) * grads[i].cwiseAbs2();
        params.values[i].array() -= step * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
}

// ---- training loop -----------------------------------------------------------

namespace {

struct Prepared
{
    PointCloud frame; // network-frame copy of the full cloud
    NormTransform transform;
};

std::vector<std::vector<std::size_t>> make_batches(std::span<const TrainSample> data, int batch_size, Rng& rng)
{
    const bool grouped = std::any_of(data.begin(), data.end(), [](const TrainSample& s) { return s.group >= 0; });
    std::vector<std::vector<std::size_t>> batches;
    if (grouped) {
        std::map<int, std::size_t> slot;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const int g = data[i].group;
            if (g < 0) {
                batches.push_back({i});
                continue;
            }
            const auto [it, inserted] = slot.emplace(g, batches.size());
            if (inserted) {
                batches.emplace_back();
            }
            batches[it->second].push_back(i);
        }
        for (std::size_t i = batches.size(); i > 1; --i) {
            std::swap(batches[i - 1], batches[uniform_index(rng, i)]);
        }
        return batches;
    }
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

} // namespace

double validate(const Model& model, std::span<const PointCloud> clouds)
{
    if (clouds.empty()) {
        throw InvalidInput("validate: empty split");
    }
    std::vector<double> cd(clouds.size());
    parallel_for(clouds.size(), [&](std::size_t i) { cd[i] = chamfer(infer(clouds[i], model), clouds[i]); });
    double total = 0.0;
    for (double v : cd) {
        total += v;
    }
    return total / static_cast<double>(cd.size());
}

TrainResult train(const TrainConfig& config, std::span<const TrainSample> train_set,
                  std::span<const TrainSample> val_set, const EpochCallback& on_epoch)
{
    config.validate();
    if (train_set.empty() || val_set.empty()) {
        throw InvalidInput("train: training and validation splits must be non-empty");
    }
    ModelConfig mc = config.effective_model();
    mc.n_classes = 0;
    if (config.multi_anatomy) {
        int max_label = -1;
        for (const auto& s : train_set) {
            if (s.label < 0) {
                throw InvalidInput("train: multi-anatomy training needs a label for every sample");
            }
            max_label = std::max(max_label, s.label);
        }
        mc.n_classes = max_label + 1;
        if (mc.n_classes < 2) {
            throw InvalidInput("train: multi-anatomy training needs at least two classes");
        }
    }
    const bool two_branch = config.variant == Variant::point2ssm_pp;
    const bool with_head = mc.n_classes > 0 && config.class_loss_weight > 0.0;

    std::vector<Prepared> prep(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        const PointCloud& s = train_set[i].cloud;
        if (s.rows() < mc.n_input) {
            throw InvalidInput("train: sample " + std::to_string(i) + " has fewer than n_input points");
        }
        require_finite(s, "train");
        if (mc.normalize_input) {
            auto [f, t] = normalize(s);
            prep[i] = {std::move(f), t};
        } else {
            prep[i] = {s, NormTransform{}};
        }
    }
    std::vector<PointCloud> val_clouds;
    for (const auto& s : val_set) {
        val_clouds.push_back(s.cloud);
    }

    Model net(mc, derive_seed(config.seed, 0x1a17));
    Adam adam(net.parameters(), config.lr);
    TrainResult result{net, 0, std::numeric_limits<double>::infinity(), 0, {}};
    int since_best = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const std::uint64_t epoch_seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch));
        Rng shuffle(epoch_seed);
        const auto batches = make_batches(train_set, config.loss.batch_size, shuffle);
        double sum_cd = 0.0, sum_me = 0.0, sum_consist = 0.0;

        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& idx = batches[b];
            const std::size_t B = idx.size();
            std::vector<Model::Pass> passes(B), rpasses(two_branch ? B : 0);
            std::vector<Mat3> rots(B, Mat3::Identity());
            std::vector<PointCloud> full(B);
            std::vector<CorrespondenceSet> ys(B), yts(two_branch ? B : 0);
            parallel_for(B, [&](std::size_t j) {
                const std::size_t i = idx[j];
                const std::uint64_t s = derive_seed(epoch_seed, (b << 20) + j + 1);
                full[j] = train_set[i].cloud;
                const Points3<float> x = subsample(prep[i].frame, mc.n_input, derive_seed(s, 1)).cast<float>();
                passes[j] = net.forward(x, true, with_head);
                const PointCloud yn = passes[j].tape->value(passes[j].output).template cast<double>();
                ys[j] = denormalize(yn, prep[i].transform);
                if (two_branch) {
                    rots[j] = random_rotation(config.rotation_deg, derive_seed(s, 3)).matrix;
                    const PointCloud xt = rotate(subsample(prep[i].frame, mc.n_input, derive_seed(s, 2)), rots[j]);
                    rpasses[j] = net.forward(xt.cast<float>(), true, false);
                    const PointCloud ytn =
                        rpasses[j].tape->value(rpasses[j].output).template cast<double>() * rots[j];
                    yts[j] = denormalize(ytn, prep[i].transform);
                }
            });

            std::vector<CorrespondenceSet> g, gt;
            const LossTerms terms = two_branch ? point2ssm_pp_loss(full, ys, yts, config.loss, &g, &gt)
                                               : point2ssm_loss(full, ys, config.loss, &g);
            double class_loss = 0.0;
            std::vector<Eigen::MatrixXf> dlogp(B);
            if (with_head) {
                for (std::size_t j = 0; j < B; ++j) {
                    const auto& lp = passes[j].tape->value(passes[j].log_probs);
                    const int label = train_set[idx[j]].label;
                    class_loss += -static_cast<double>(lp(0, label)) / static_cast<double>(B);
                    dlogp[j] = Eigen::MatrixXf::Zero(1, lp.cols());
                    dlogp[j](0, label) = static_cast<float>(-config.class_loss_weight / static_cast<double>(B));
                }
            }
            const double total = terms.total + config.class_loss_weight * class_loss;
            if (!std::isfinite(total)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            }
            sum_cd += terms.cd;
            sum_me += terms.me;
            sum_consist += terms.consist;

            std::vector<std::vector<Eigen::MatrixXf>> per(B);
            parallel_for(B, [&](std::size_t j) {
                const double sc = prep[idx[j]].transform.scale;
                const Eigen::MatrixXf dy = (sc * g[j]).cast<float>();
                per[j] = net.backward(passes[j], dy, with_head ? &dlogp[j] : nullptr);
                passes[j].tape.reset();
                if (two_branch) {
                    const Eigen::MatrixXf dyt = (sc * gt[j] * rots[j].transpose()).cast<float>();
                    const auto gr = net.backward(rpasses[j], dyt);
                    for (std::size_t p = 0; p < gr.size(); ++p) {
                        per[j][p] += gr[p];
                    }
                    rpasses[j].tape.reset();
                }
            });
            std::vector<Eigen::MatrixXf> grads = std::move(per[0]);
            for (std::size_t j = 1; j < B; ++j) {
                for (std::size_t p = 0; p < grads.size(); ++p) {
                    grads[p] += per[j][p];
                }
            }
            adam.step(net.parameters(), grads);
        }

        EpochLog log;
        log.epoch = epoch;
        const auto nb = static_cast<double>(batches.size());
        log.train_cd = sum_cd / nb;
        log.train_me = sum_me / nb;
        log.train_consist = sum_consist / nb;
        log.val_cd = validate(net, val_clouds);
        result.log.push_back(log);
        result.epochs_run = epoch;
        if (on_epoch) {
            on_epoch(log);
        }
        if (!std::isfinite(log.val_cd)) {
            throw NumericError("train: non-finite validation CD at epoch " + std::to_string(epoch));
        }
        if (log.val_cd < result.best_val_cd) {
            result.best_val_cd = log.val_cd;
            result.best_epoch = epoch;
            result.model.parameters() = net.parameters();
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    return result;
}

void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> log)
{
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    const auto f = io::format_exact;
    os << "epoch,train_cd,train_me,train_consist,val_cd\n";
    for (const auto& e : log) {
        os << e.epoch << ',' << f(e.train_cd) << ',' << f(e.train_me) << ',' << f(e.train_consist) << ','
           << f(e.val_cd) << '\n';
    }
}

std::vector<EpochLog> read_epoch_log(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(is, line) || line != "epoch,train_cd,train_me,train_consist,val_cd") {
        throw ParseError(path.string() + ": unexpected header");
    }
    std::vector<EpochLog> out;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        EpochLog e;
        char c1, c2, c3, c4;
        if (!(ls >> e.epoch >> c1 >> e.train_cd >> c2 >> e.train_me >> c3 >> e.train_consist >> c4 >> e.val_cd)) {
            throw ParseError(path.string() + ": malformed row '" + line + "'");
        }
        out.push_back(e);
    }
    return out;
}

std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& axis, std::span<const std::string> values,
                            std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                            std::span<const PointCloud> test_clouds)
{
    const auto& keys = train_config_keys();
    if (std::find(keys.begin(), keys.end(), axis) == keys.end() || axis == "seed") {
        throw std::invalid_argument("sweep: '" + axis + "' is not a sweepable config key");
    }
    if (values.empty()) {
        throw std::invalid_argument("sweep: no values given");
    }
    std::vector<SweepRow> rows;
    for (const auto& v : values) {
        TrainConfig cfg = base;
        set_config_value(cfg, axis, v);
        cfg.validate();
        const TrainResult r = train(cfg, train_set, val_set);
        SweepRow row;
        row.value = v;
        row.epochs_run = r.epochs_run;
        row.best_epoch = r.best_epoch;
        row.best_val_cd = r.best_val_cd;
        row.test_cd = test_clouds.empty() ? std::numeric_limits<double>::quiet_NaN() : validate(r.model, test_clouds);
        rows.push_back(row);
    }
    return rows;
}

} // namespace p2ssm
