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

#include "p2ssm/losses.hpp"
#include "p2ssm/model.hpp"
#include "p2ssm/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace p2ssm {

enum class Variant { point2ssm, point2ssm_pp };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct TrainConfig
{
    Variant variant = Variant::point2ssm_pp;
    ModelConfig model;
    LossConfig loss;
    double lr = 1e-4;
    int patience = 100;
    int max_epochs = 5000;
    std::uint64_t seed = 0;
    double rotation_deg = 15.0;
    bool multi_anatomy = false;
    double class_loss_weight = 0.1;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
    /// The network configuration implied by the variant: only the two-branch
    /// variant normalises its input.
    ModelConfig effective_model() const;
};

/// `key = value` lines; '#' starts a comment. Unknown or repeated keys are
/// rejected; missing keys keep their defaults.
TrainConfig parse_train_config(const std::string& text);
TrainConfig read_train_config(const std::filesystem::path& path);
/// Canonical text with every key, in a fixed order.
std::string format_train_config(const TrainConfig& cfg);
/// Sets a single key from its text value (same rules as the parser).
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
const std::vector<std::string>& train_config_keys();

struct TrainSample
{
    PointCloud cloud; ///< full cloud the chamfer term is measured against
    int label = -1;   ///< class index for the anatomy head
    int group = -1;   ///< samples sharing a group (a subject's frames) form one batch
};

struct EpochLog
{
    int epoch = 0;
    double train_cd = 0.0;
    double train_me = 0.0;
    double train_consist = 0.0;
    double val_cd = 0.0;
};

struct TrainResult
{
    Model model;    ///< parameters of the best validation epoch
    int best_epoch = 0;
    double best_val_cd = 0.0;
    int epochs_run = 0;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam with a constant learning rate. Each step draws a batch, subsamples
/// every cloud to n_input points (independently again for the rotated branch
/// of the two-branch variant, which is also rotated by up to rotation_deg),
/// and evaluates the variant loss against the full clouds in the input
/// frame. Validation CD after each epoch drives early stopping. When any
/// sample has a group id, batches are whole groups instead of batch_size
/// chunks. Throws NumericError if the loss becomes non-finite.
TrainResult train(const TrainConfig& config, std::span<const TrainSample> train_set,
                  std::span<const TrainSample> val_set, const EpochCallback& on_epoch = {});

/// Mean chamfer between infer() output and the full clouds.
double validate(const Model& model, std::span<const PointCloud> clouds);

void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> log);
std::vector<EpochLog> read_epoch_log(const std::filesystem::path& path);

/// Adam optimiser state over a parameter set.
class Adam
{
public:
    Adam(const ParameterSet<float>& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(ParameterSet<float>& params, const std::vector<Eigen::MatrixXf>& grads);

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<Eigen::MatrixXf> m_, v_;
};

struct SweepRow
{
    std::string value;
    int epochs_run = 0;
    int best_epoch = 0;
    double best_val_cd = 0.0;
    double test_cd = 0.0;
};

/// Trains once per value of `axis` (a config key) with everything else
/// shared, and reports validation and test chamfer for each.
std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& axis, std::span<const std::string> values,
                            std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                            std::span<const PointCloud> test_clouds);

// ---- checkpoints ------------------------------------------------------------

struct CheckpointMeta
{
    int epoch = 0;
    double best_val_cd = 0.0;
    std::uint64_t seed = 0;
    std::string variant;
    std::vector<std::string> class_names;
};

/// One file: a magic line, a single-line JSON header (model configuration,
/// metadata, parameter names and shapes), then raw little-endian float32
/// parameter data. Loading reproduces inference bit for bit.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);
std::pair<Model, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

} // namespace p2ssm
