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
#include "p2ssm/model.hpp"
#include "p2ssm/random.hpp"

#include <cmath>
#include <sstream>

namespace p2ssm {

void ModelConfig::validate() const
{
    if (n_input < 2 || n_output < 1 || k_neighbors < 1 || feat_dim < 1) {
        throw std::invalid_argument("ModelConfig: n_input, n_output, k_neighbors and feat_dim must be positive");
    }
    if (k_neighbors >= n_input) {
        throw std::invalid_argument("ModelConfig: k_neighbors must be smaller than n_input");
    }
    for (const int w : encoder_widths) {
        if (w < 1) {
            throw std::invalid_argument("ModelConfig: encoder widths must be positive");
        }
    }
    if (attn_blocks < 1 || attn_heads < 1 || hidden_width() % attn_heads != 0) {
        throw std::invalid_argument("ModelConfig: attention width must be divisible by the head count");
    }
    if (n_classes < 0 || n_classes == 1) {
        throw std::invalid_argument("ModelConfig: n_classes must be 0 or at least 2");
    }
}

bool operator==(const ModelConfig& a, const ModelConfig& b)
{
    return a.n_input == b.n_input && a.n_output == b.n_output && a.k_neighbors == b.k_neighbors &&
           a.feat_dim == b.feat_dim && a.encoder_widths == b.encoder_widths && a.attn_blocks == b.attn_blocks &&
           a.attn_heads == b.attn_heads && a.hidden_width() == b.hidden_width() && a.n_classes == b.n_classes &&
           a.normalize_input == b.normalize_input;
}

template <typename Scalar>
int ParameterSet<Scalar>::find(std::string_view name) const
{
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

template <typename Scalar>
auto ParameterSet<Scalar>::at(std::string_view name) const -> const Matrix&
{
    const int i = find(name);
    if (i < 0) {
        throw std::out_of_range("no parameter named " + std::string(name));
    }
    return values[static_cast<std::size_t>(i)];
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& v : values) {
        n += static_cast<std::size_t>(v.size());
    }
    return n;
}

template struct ParameterSet<float>;
template struct ParameterSet<double>;

namespace {

enum class Init { uniform, zeros, ones };

struct ParamSpec
{
    std::string name;
    Eigen::Index rows;
    Eigen::Index cols;
    Init init;
    Eigen::Index fan_in;
};

std::vector<ParamSpec> layout(const ModelConfig& cfg)
{
    std::vector<ParamSpec> specs;
    const auto linear = [&](const std::string& prefix, Eigen::Index in, Eigen::Index out) {
        specs.push_back({prefix + "_w", in, out, Init::uniform, in});
        specs.push_back({prefix + "_b", 1, out, Init::zeros, in});
    };
    const auto norm = [&](const std::string& prefix, Eigen::Index width) {
        specs.push_back({prefix + "_g", 1, width, Init::ones, width});
        specs.push_back({prefix + "_b", 1, width, Init::zeros, width});
    };

    std::vector<int> widths = cfg.encoder_widths;
    widths.push_back(cfg.feat_dim);
    Eigen::Index in = 3;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const std::string p = "enc" + std::to_string(l);
        // Edge features are [x_i, x_j - x_i]; fan-in counts both halves.
        specs.push_back({p + ".center", in, widths[l], Init::uniform, 2 * in});
        specs.push_back({p + ".neighbor", in, widths[l], Init::uniform, 2 * in});
        specs.push_back({p + ".bias", 1, widths[l], Init::zeros, 2 * in});
        in = widths[l];
    }

    const Eigen::Index h = cfg.hidden_width();
    for (int b = 0; b < cfg.attn_blocks; ++b) {
        const std::string p = "sfa" + std::to_string(b);
        linear(p + ".in", b == 0 ? cfg.feat_dim : h, h);
        norm(p + ".ln1", h);
        linear(p + ".q", h, h);
        linear(p + ".k", h, h);
        linear(p + ".v", h, h);
        linear(p + ".o", h, h);
        norm(p + ".ln2", h);
        linear(p + ".ff1", h, h);
        linear(p + ".ff2", h, h);
    }
    linear("head", h, cfg.n_output);

    if (cfg.n_classes > 0) {
        linear("cls.fc1", 3 * static_cast<Eigen::Index>(cfg.n_output), 128);
        linear("cls.fc2", 128, 64);
        linear("cls.fc3", 64, cfg.n_classes);
    }
    return specs;
}

} // namespace

template <typename Scalar>
Network<Scalar>::Network(ModelConfig config, std::uint64_t seed) : config_(std::move(config))
{
    config_.validate();
    Rng rng(seed);
    for (const auto& s : layout(config_)) {
        Matrix m(s.rows, s.cols);
        switch (s.init) {
        case Init::zeros: m.setZero(); break;
        case Init::ones: m.setOnes(); break;
        case Init::uniform: {
            const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                for (Eigen::Index i = 0; i < m.rows(); ++i) {
                    m(i, j) = static_cast<Scalar>(uniform(rng, -bound, bound));
                }
            }
            break;
        }
        }
        params_.names.push_back(s.name);
        params_.values.push_back(std::move(m));
    }
}

template <typename Scalar>
Network<Scalar>::Network(ModelConfig config, ParameterSet<Scalar> params)
    : config_(std::move(config)), params_(std::move(params))
{
    config_.validate();
    check_parameters();
}

template <typename Scalar>
void Network<Scalar>::check_parameters() const
{
    const auto specs = layout(config_);
    if (specs.size() != params_.size()) {
        throw ShapeError("parameter count does not match the model configuration");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& v = params_.values[i];
        if (params_.names[i] != specs[i].name || v.rows() != specs[i].rows || v.cols() != specs[i].cols) {
            throw ShapeError("parameter " + specs[i].name + " is missing or has the wrong shape");
        }
        if (!v.allFinite()) {
            throw NumericError("parameter " + specs[i].name + " is not finite");
        }
    }
}

template <typename Scalar>
ad::Var Network<Scalar>::param(const std::vector<ad::Var>& p, std::string_view name) const
{
    const int i = params_.find(name);
    if (i < 0) {
        throw std::out_of_range("no parameter named " + std::string(name));
    }
    return p[static_cast<std::size_t>(i)];
}

template <typename Scalar>
ad::Var Network<Scalar>::build_encoder(Tape& t, const std::vector<ad::Var>& p, const Points& x) const
{
    if (x.rows() != config_.n_input) {
        throw ShapeError("encode: expected " + std::to_string(config_.n_input) + " input points, got " +
                         std::to_string(x.rows()));
    }
    require_finite(x, "encode");
    constexpr Scalar slope = Scalar(0.2);
    const std::size_t layers = config_.encoder_widths.size() + 1;
    ad::Var h = t.constant(Matrix(x));
    IndexMatrix nbr = knn_indices(x, config_.k_neighbors);
    for (std::size_t l = 0; l < layers; ++l) {
        if (l > 0) {
            // Dynamic graph: neighbourhoods recomputed in feature space.
            nbr = knn_indices(t.value(h), config_.k_neighbors);
        }
        const std::string pre = "enc" + std::to_string(l);
        const ad::Var centre = t.add_row(t.matmul(h, param(p, pre + ".center")), param(p, pre + ".bias"));
        const ad::Var neigh = t.matmul(h, param(p, pre + ".neighbor"));
        h = t.leaky_relu(t.neighbor_max(centre, neigh, nbr), slope);
    }
    return h;
}

template <typename Scalar>
ad::Var Network<Scalar>::build_attention(Tape& t, const std::vector<ad::Var>& p, ad::Var features) const
{
    if (!t.value(features).allFinite()) {
        throw NumericError("attention: non-finite features");
    }
    const auto lin = [&](ad::Var in, const std::string& name) {
        return t.add_row(t.matmul(in, param(p, name + "_w")), param(p, name + "_b"));
    };
    const int heads = config_.attn_heads;
    const Eigen::Index h = config_.hidden_width();
    const Eigen::Index dh = h / heads;
    const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

    ad::Var s = features;
    for (int b = 0; b < config_.attn_blocks; ++b) {
        const std::string pre = "sfa" + std::to_string(b);
        s = lin(s, pre + ".in");
        s = t.layer_norm(s, param(p, pre + ".ln1_g"), param(p, pre + ".ln1_b"));
        const ad::Var q = lin(s, pre + ".q");
        const ad::Var k = lin(s, pre + ".k");
        const ad::Var v = lin(s, pre + ".v");
        std::vector<ad::Var> outs;
        outs.reserve(static_cast<std::size_t>(heads));
        for (int hd = 0; hd < heads; ++hd) {
            const ad::Var qh = t.cols(q, hd * dh, dh);
            const ad::Var kh = t.cols(k, hd * dh, dh);
            const ad::Var vh = t.cols(v, hd * dh, dh);
            const ad::Var att = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), inv_sqrt));
            outs.push_back(t.matmul(att, vh));
        }
        const ad::Var o = lin(t.concat_cols(outs), pre + ".o");
        s = t.layer_norm(t.add(s, o), param(p, pre + ".ln2_g"), param(p, pre + ".ln2_b"));
        const ad::Var ff = lin(t.gelu(lin(s, pre + ".ff1")), pre + ".ff2");
        s = t.add(s, ff);
    }
    // Logits are N x M; the softmax runs over input points for each output.
    const ad::Var logits = lin(s, "head");
    return t.softmax_rows(t.transpose(logits));
}

template <typename Scalar>
ad::Var Network<Scalar>::build_classifier(Tape& t, const std::vector<ad::Var>& p, ad::Var y) const
{
    // Centring and RMS scaling make the head blind to translation and size.
    const ad::Var z = t.rms_normalize(t.center_rows(y));
    const auto lin = [&](ad::Var in, const std::string& name) {
        return t.add_row(t.matmul(in, param(p, name + "_w")), param(p, name + "_b"));
    };
    ad::Var h = t.flatten_rows(z);
    h = t.relu(lin(h, "cls.fc1"));
    h = t.relu(lin(h, "cls.fc2"));
    return t.log_softmax_rows(lin(h, "cls.fc3"));
}

template <typename Scalar>
auto Network<Scalar>::forward(const Points& x, bool track_grad, bool with_classifier) const -> Pass
{
    if (with_classifier && config_.n_classes == 0) {
        throw UnsupportedOperation("model has no classifier head");
    }
    Pass pass;
    pass.tape = std::make_unique<Tape>();
    Tape& t = *pass.tape;
    pass.params.reserve(params_.size());
    for (const auto& v : params_.values) {
        pass.params.push_back(t.leaf(v, track_grad));
    }
    pass.features = build_encoder(t, pass.params, x);
    pass.weights = build_attention(t, pass.params, pass.features);
    pass.output = t.matmul(pass.weights, t.constant(Matrix(x)));
    if (with_classifier) {
        pass.log_probs = build_classifier(t, pass.params, pass.output);
    }
    return pass;
}

template <typename Scalar>
auto Network<Scalar>::backward(Pass& pass, const Matrix& grad_output, const Matrix* grad_log_probs) const
    -> std::vector<Matrix>
{
    pass.tape->seed(pass.output, grad_output);
    if (grad_log_probs) {
        if (pass.log_probs.id < 0) {
            throw std::logic_error("backward: classifier output was not recorded");
        }
        pass.tape->seed(pass.log_probs, *grad_log_probs);
    }
    pass.tape->propagate();
    std::vector<Matrix> grads;
    grads.reserve(pass.params.size());
    for (const ad::Var v : pass.params) {
        grads.push_back(pass.tape->grad(v));
    }
    return grads;
}

template <typename Scalar>
auto Network<Scalar>::encode(const Points& x) const -> Matrix
{
    Tape t;
    std::vector<ad::Var> p;
    for (const auto& v : params_.values) {
        p.push_back(t.leaf(v, false));
    }
    return t.value(build_encoder(t, p, x));
}

template <typename Scalar>
auto Network<Scalar>::attention(const Matrix& features) const -> Matrix
{
    if (features.cols() != config_.feat_dim) {
        throw ShapeError("attention: feature width does not match feat_dim");
    }
    Tape t;
    std::vector<ad::Var> p;
    for (const auto& v : params_.values) {
        p.push_back(t.leaf(v, false));
    }
    return t.value(build_attention(t, p, t.constant(features)));
}

template <typename Scalar>
auto Network<Scalar>::predict(const Points& x) const -> Points
{
    Pass pass = forward(x, false);
    return pass.tape->value(pass.output);
}

template <typename Scalar>
Eigen::VectorXd Network<Scalar>::classify(const CorrespondenceSet& y) const
{
    if (config_.n_classes == 0) {
        throw UnsupportedOperation("model has no classifier head");
    }
    if (y.rows() != config_.n_output) {
        throw ShapeError("classify: correspondence count does not match n_output");
    }
    Tape t;
    std::vector<ad::Var> p;
    for (const auto& v : params_.values) {
        p.push_back(t.leaf(v, false));
    }
    const ad::Var lp = build_classifier(t, p, t.constant(y.cast<Scalar>()));
    return t.value(lp).row(0).transpose().template cast<double>();
}

template class Network<float>;
template class Network<double>;

CorrespondenceSet predict(const PointCloud& x, const Eigen::MatrixXd& weights)
{
    if (weights.cols() != x.rows()) {
        throw ShapeError("predict: weight columns must match input point count");
    }
    return weights * x;
}

PreparedInput prepare_input(const PointCloud& cloud, const ModelConfig& config)
{
    if (cloud.rows() < config.n_input) {
        throw InvalidInput("input cloud has " + std::to_string(cloud.rows()) + " points; the model needs at least " +
                           std::to_string(config.n_input));
    }
    require_finite(cloud, "infer");
    PreparedInput in;
    PointCloud frame = cloud;
    if (config.normalize_input) {
        auto [normed, t] = normalize(cloud);
        frame = std::move(normed);
        in.transform = t;
    }
    in.points = farthest_point_sample(frame, config.n_input, order_free_start(frame)).cast<float>();
    return in;
}

CorrespondenceSet infer(const PointCloud& cloud, const Model& model)
{
    const PreparedInput in = prepare_input(cloud, model.config());
    const PointCloud y = model.predict(in.points).cast<double>();
    return denormalize(y, in.transform);
}

Eigen::VectorXd classify(const CorrespondenceSet& y, const Model& model)
{
    return model.classify(y);
}

std::vector<Eigen::MatrixXf> CrossSectionalEncoder::encode(const Model& model,
                                                           std::span<const Points3<float>> frames) const
{
    std::vector<Eigen::MatrixXf> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        out.push_back(model.encode(f));
    }
    return out;
}

std::vector<CorrespondenceSet> infer_sequence(std::span<const PointCloud> sequence, const Model& model,
                                              const SequenceEncoder& encoder)
{
    if (sequence.empty()) {
        throw InvalidInput("infer_sequence: empty sequence");
    }
    std::vector<PreparedInput> inputs;
    std::vector<Points3<float>> frames;
    for (const auto& cloud : sequence) {
        inputs.push_back(prepare_input(cloud, model.config()));
        frames.push_back(inputs.back().points);
    }
    const auto features = encoder.encode(model, frames);
    if (features.size() != sequence.size()) {
        throw ShapeError("sequence encoder returned the wrong number of frames");
    }
    std::vector<CorrespondenceSet> out;
    out.reserve(sequence.size());
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        const Eigen::MatrixXf w = model.attention(features[t]);
        const PointCloud y = (w * frames[t]).cast<double>();
        out.push_back(denormalize(y, inputs[t].transform));
    }
    return out;
}

} // namespace p2ssm
