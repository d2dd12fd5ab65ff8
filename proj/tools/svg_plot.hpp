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

#include <string>
#include <utility>
#include <vector>

namespace p2ssm::plot {

struct Series
{
    std::string label;
    std::vector<double> values;
};

/// One box per series: quartile box, median line, whiskers to the most
/// extreme values within 1.5 IQR, outliers drawn as circles. Output depends
/// only on the inputs, so identical data gives identical bytes.
std::string boxplot_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& boxes);

/// Polylines of values against 1-based mode counts, truncated to max_x.
std::string curve_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& lines,
                      int max_x = 30);

} // namespace p2ssm::plot
