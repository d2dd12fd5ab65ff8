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

#include "p2ssm/autodiff.hpp"
#include "p2ssm/geometry.hpp"
#include "p2ssm/types.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace p2ssm {

struct ModelConfig
{
    int n_input = 1024;  ///< points fed to the network per shape
    int n_output = 1024; ///< correspondence points predicted per shape
    int k_neighbors = 26;
    int feat_dim = 128;  ///< per-point feature width produced by the encoder
    std::vector<int> encoder_widths{64, 64, 128}; ///< edge-conv layers before the final feat_dim layer
    int attn_blocks = 3;
    int attn_heads = 4;
    int attn_width = 0;  ///< 0 selects 2 * feat_dim
    int n_classes = 0;   ///< anatomy classifier head size; 0 disables the head
    bool normalize_input = true;

    int hidden_width() const { return attn_width > 0 ? attn_width : 2 * feat_dim; }
    void validate() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

/// Named dense parameter arrays in a fixed creation order.
template <typename Scalar>
struct ParameterSet
{
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    std::vector<std::string> names;
    std::vector<Matrix> values;

    std::size_t size() const { return values.size(); }
    int find(std::string_view name) const;
    const Matrix& at(std::string_view name) const;
    std::size_t scalar_count() const;

    template <typename Other>
    ParameterSet<Other> cast() const
    {
        ParameterSet<Other> out;
        out.names = names;
        for (const auto& v : values) {
            out.values.push_back(v.template cast<Other>());
        }
        return out;
    }
};

/// Point correspondence network: edge-convolution encoder with a dynamic
/// k-NN graph, stacked self-attention blocks, and a row-softmax attention
/// map whose rows form convex weights over the input points.
template <typename Scalar>
class Network
{
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Points = Points3<Scalar>;
    using Tape = ad::Tape<Scalar>;

    Network(ModelConfig config, std::uint64_t seed);
    Network(ModelConfig config, ParameterSet<Scalar> params);

    const ModelConfig& config() const { return config_; }
    const ParameterSet<Scalar>& parameters() const { return params_; }
    ParameterSet<Scalar>& parameters() { return params_; }

    /// One recorded forward evaluation. Holds the tape so backward() can run.
    struct Pass
    {
        std::unique_ptr<Tape> tape;
        std::vector<ad::Var> params;
        ad::Var features;
        ad::Var weights;
        ad::Var output;
        ad::Var log_probs; ///< id -1 when the classifier was not evaluated
    };

    /// Records encoder, attention, and prediction for x (n_input x 3).
    Pass forward(const Points& x, bool track_grad, bool with_classifier = false) const;

    /// Back-propagates dL/doutput (and optionally dL/dlog_probs) and returns
    /// parameter gradients in parameter order.
    std::vector<Matrix> backward(Pass& pass, const Matrix& grad_output, const Matrix* grad_log_probs = nullptr) const;

    /// N x feat_dim features; throws ShapeError if x does not have n_input rows.
    Matrix encode(const Points& x) const;

    /// n_output x N row-stochastic weights from features.
    Matrix attention(const Matrix& features) const;

    /// W x for the network's own attention map.
    Points predict(const Points& x) const;

    /// Classifier log-probabilities for a correspondence set; throws
    /// UnsupportedOperation when the model has no classifier head.
    Eigen::VectorXd classify(const CorrespondenceSet& y) const;

    template <typename Other>
    Network<Other> cast() const
    {
        return Network<Other>(config_, params_.template cast<Other>());
    }

private:
    void check_parameters() const;
    ad::Var build_encoder(Tape& t, const std::vector<ad::Var>& p, const Points& x) const;
    ad::Var build_attention(Tape& t, const std::vector<ad::Var>& p, ad::Var features) const;
    ad::Var build_classifier(Tape& t, const std::vector<ad::Var>& p, ad::Var y) const;
    ad::Var param(const std::vector<ad::Var>& p, std::string_view name) const;

    ModelConfig config_;
    ParameterSet<Scalar> params_;
};

extern template class Network<float>;
extern template class Network<double>;

/// Deployed model precision.
using Model = Network<float>;

/// y_m = sum_n w(m, n) x_n.
CorrespondenceSet predict(const PointCloud& x, const Eigen::MatrixXd& weights);

/// Network input derived from a full cloud: normalised (when the config asks
/// for it) and reduced to n_input points by farthest-point sampling.
struct PreparedInput
{
    Points3<float> points;
    NormTransform transform;
};

PreparedInput prepare_input(const PointCloud& cloud, const ModelConfig& config);

/// normalise -> farthest-point sample -> network -> denormalise. The result
/// is expressed in the frame of `cloud`. Clouds with fewer than n_input
/// points are rejected.
CorrespondenceSet infer(const PointCloud& cloud, const Model& model);

/// Log-probabilities over anatomy classes for a correspondence set.
Eigen::VectorXd classify(const CorrespondenceSet& y, const Model& model);

/// Maps an ordered list of network inputs (one per time point) to one
/// feature matrix per time point.
class SequenceEncoder
{
public:
    virtual ~SequenceEncoder() = default;
    virtual std::vector<Eigen::MatrixXf> encode(const Model& model, std::span<const Points3<float>> frames) const = 0;
};

/// Encodes every frame independently with the model's own encoder.
class CrossSectionalEncoder final : public SequenceEncoder
{
public:
    std::vector<Eigen::MatrixXf> encode(const Model& model, std::span<const Points3<float>> frames) const override;
};

/// Per-frame correspondences for a sequence. The attention module and the
/// convex prediction are applied to each frame's features.
std::vector<CorrespondenceSet> infer_sequence(std::span<const PointCloud> sequence, const Model& model,
                                              const SequenceEncoder& encoder = CrossSectionalEncoder{});

} // namespace p2ssm
