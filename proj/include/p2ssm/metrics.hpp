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

#include "p2ssm/geometry.hpp"
#include "p2ssm/mesh.hpp"
#include "p2ssm/ssm.hpp"
#include "p2ssm/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace p2ssm {

/// Maps a point cloud (in its own frame) to correspondences in that frame.
using Predictor = std::function<CorrespondenceSet(const PointCloud&)>;

/// Mean over points of the exact distance to the closest mesh triangle.
double p2s(const CorrespondenceSet& y, const TriangleMesh& mesh);

/// (1/M) sum_m |a_m - b_m|^2.
double correspondence_mse(const CorrespondenceSet& a, const CorrespondenceSet& b);

/// MSE between predictions on two random n-point subsamples of `cloud`
/// drawn with the two seeds. Requires at least 2n points.
double sampling_invariance_mse(const Predictor& predict, const PointCloud& cloud, int n, std::uint64_t seed_a,
                               std::uint64_t seed_b);

/// MSE between R1^-1 predict(R1 cloud) and R2^-1 predict(R2 cloud), with
/// rotations about the origin.
double rotation_equivariance_mse(const Predictor& predict, const PointCloud& cloud, const Mat3& r1, const Mat3& r2);

/// Same, with R1 and R2 drawn by random_rotation(max_deg, ...) from `seed`.
double rotation_equivariance_mse(const Predictor& predict, const PointCloud& cloud, std::uint64_t seed,
                                 double max_deg = 15.0);

/// Warps mesh_src through the thin-plate spline y_src -> y_dst and returns the
/// symmetric mean vertex-to-surface distance to mesh_dst_truth.
double warp_s2s(const CorrespondenceSet& y_src, const CorrespondenceSet& y_dst, const TriangleMesh& mesh_src,
                const TriangleMesh& mesh_dst_truth);

struct Compactness
{
    std::vector<double> curve; ///< cumulative variance ratio per mode
    int modes_for_95 = 0;      ///< 0 for a zero-variance cohort
};
Compactness compactness(const ShapeModel& model);

/// Per-shape chamfer between each (model-aligned) shape and its k-mode reconstruction.
std::vector<double> generalization_errors(const ShapeModel& model, std::span<const CorrespondenceSet> aligned, int k);
double generalization(const ShapeModel& model, std::span<const CorrespondenceSet> aligned, int k);

/// Per-draw minimum chamfer between a k-mode model sample and the training shapes.
std::vector<double> specificity_errors(const ShapeModel& model, std::span<const CorrespondenceSet> train_aligned,
                                       int k, int n_samples, std::uint64_t seed);
double specificity(const ShapeModel& model, std::span<const CorrespondenceSet> train_aligned, int k,
                   int n_samples = 1000, std::uint64_t seed = 0);

/// A row per (sample, metric). Curves are indexed by mode count starting at 1.
struct MetricReport
{
    struct Row
    {
        std::string sample;
        std::string metric;
        double value = 0.0;
    };
    struct Curve
    {
        std::string name;
        std::vector<double> values;
    };
    std::string model_id;
    std::string dataset_id;
    std::vector<Row> rows;
    std::vector<Curve> curves;

    std::vector<std::string> metrics() const; ///< in first-appearance order
    std::vector<double> values(const std::string& metric) const;
};

struct Summary
{
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0; ///< sample standard deviation (0 for a single value)
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};
/// Quartiles use linear interpolation between order statistics.
Summary summarize(std::vector<double> values);

struct EvalSample
{
    std::string id;
    PointCloud cloud;
    std::optional<TriangleMesh> mesh;
};

struct EvalOptions
{
    int n_input = 1024;            ///< subsample size for the sampling-invariance metric
    int me_neighbors = 10;
    int specificity_samples = 1000;
    int curve_samples = 100;       ///< draws per point of the specificity curve
    int curve_modes = 30;
    double rotation_deg = 15.0;
    bool with_scale = false;       ///< scale removal in the shape model alignment
    std::uint64_t seed = 0;
    std::string model_id;
    std::string dataset_id;
};

/// Predicts every sample and computes per-sample CD, sampling and rotation
/// MSE, mapping error (mean against the other test shapes), generalization at
/// the 95% mode count, and, when every test sample and the first training
/// sample carry meshes, P2S and warp S2S (warping from the first training
/// sample). Compactness, generalization and specificity curves come from a
/// shape model fitted on the training predictions. Throws on an empty test set.
MetricReport evaluate_all(const Predictor& predict, std::span<const EvalSample> train,
                          std::span<const EvalSample> test, const EvalOptions& options);

/// Writes metrics.csv (sample,metric,value), curves.csv (curve,modes,value)
/// and summary.json into `dir`.
void write_report(const std::filesystem::path& dir, const MetricReport& report);
MetricReport read_report(const std::filesystem::path& dir);

} // namespace p2ssm
