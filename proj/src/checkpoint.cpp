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

#include <json.hpp>

#include <bit>
#include <fstream>

namespace p2ssm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kMagic = "p2ssm-checkpoint 1";

nlohmann::ordered_json config_json(const ModelConfig& c)
{
    return {{"n_input", c.n_input},       {"n_output", c.n_output},     {"k_neighbors", c.k_neighbors},
            {"feat_dim", c.feat_dim},     {"encoder_widths", c.encoder_widths}, {"attn_blocks", c.attn_blocks},
            {"attn_heads", c.attn_heads}, {"attn_width", c.attn_width}, {"n_classes", c.n_classes},
            {"normalize_input", c.normalize_input}};
}

ModelConfig config_from_json(const nlohmann::json& j)
{
    ModelConfig c;
    c.n_input = j.at("n_input").get<int>();
    c.n_output = j.at("n_output").get<int>();
    c.k_neighbors = j.at("k_neighbors").get<int>();
    c.feat_dim = j.at("feat_dim").get<int>();
    c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
    c.attn_blocks = j.at("attn_blocks").get<int>();
    c.attn_heads = j.at("attn_heads").get<int>();
    c.attn_width = j.at("attn_width").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
    c.normalize_input = j.at("normalize_input").get<bool>();
    return c;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta)
{
    nlohmann::ordered_json h;
    h["model"] = config_json(model.config());
    h["meta"] = {{"epoch", meta.epoch},     {"best_val_cd", meta.best_val_cd}, {"seed", meta.seed},
                 {"variant", meta.variant}, {"class_names", meta.class_names}};
    const auto& p = model.parameters();
    auto arr = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < p.size(); ++i) {
        arr.push_back({{"name", p.names[i]}, {"rows", p.values[i].rows()}, {"cols", p.values[i].cols()}});
    }
    h["params"] = arr;

    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write checkpoint " + path.string());
    }
    os << kMagic << '\n' << h.dump() << '\n';
    for (const auto& v : p.values) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    }
    if (!os) {
        throw std::runtime_error("failed writing checkpoint " + path.string());
    }
}

std::pair<Model, CheckpointMeta> load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot read checkpoint " + path.string());
    }
    std::string magic, header;
    if (!std::getline(is, magic) || magic != kMagic || !std::getline(is, header)) {
        throw ParseError(path.string() + ": not a checkpoint");
    }
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad header: " + e.what());
    }
    try {
        const ModelConfig cfg = config_from_json(h.at("model"));
        CheckpointMeta meta;
        const auto& m = h.at("meta");
        meta.epoch = m.at("epoch").get<int>();
        meta.best_val_cd = m.at("best_val_cd").get<double>();
        meta.seed = m.at("seed").get<std::uint64_t>();
        meta.variant = m.at("variant").get<std::string>();
        meta.class_names = m.at("class_names").get<std::vector<std::string>>();

        ParameterSet<float> params;
        for (const auto& e : h.at("params")) {
            const auto rows = e.at("rows").get<Eigen::Index>();
            const auto cols = e.at("cols").get<Eigen::Index>();
            if (rows < 0 || cols < 0 || rows * cols > (Eigen::Index{1} << 31)) {
                throw ParseError(path.string() + ": bad parameter shape");
            }
            Eigen::MatrixXf v(rows, cols);
            is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
            if (!is) {
                throw ParseError(path.string() + ": truncated parameter data");
            }
            params.names.push_back(e.at("name").get<std::string>());
            params.values.push_back(std::move(v));
        }
        if (is.peek() != std::char_traits<char>::eof()) {
            throw ParseError(path.string() + ": trailing data after parameters");
        }
        return {Model(cfg, std::move(params)), meta};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad header: " + e.what());
    }
}

} // namespace p2ssm
