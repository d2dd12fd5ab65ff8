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
#include "svg_plot.hpp"

#include "p2ssm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace p2ssm::plot {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Axis
{
    double lo = 0, hi = 1, step = 1;
};

// Range padded out to a 1-2-5 tick step.
Axis nice_axis(double lo, double hi)
{
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw std::invalid_argument("plot: non-finite value");
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
        const double pad = std::max(std::abs(hi) * 0.1, 1e-6);
        lo -= pad;
        hi += pad;
    }
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    }
    return {std::floor(lo / step) * step, std::ceil(hi / step) * step, step};
}

class Canvas
{
public:
    Canvas(const std::string& title, const std::string& y_label, Axis y) : y_(y)
    {
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
            << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
        os_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        os_ << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
            << escape(title) << "</text>\n";
        os_ << "<text transform=\"translate(16," << num(kTop + plot_h() / 2)
            << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
        for (double t = y.lo; t <= y.hi + 0.5 * y.step; t += y.step) {
            const double py = ypx(t);
            os_ << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py) << "\" x2=\"" << num(kWidth - kRight)
                << "\" y2=\"" << num(py) << "\" stroke=\"#e0e0e0\"/>\n";
            os_ << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">"
                << tick_label(t) << "</text>\n";
        }
        os_ << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(plot_w())
            << "\" height=\"" << num(plot_h()) << "\" fill=\"none\" stroke=\"black\"/>\n";
    }

    static double plot_w() { return kWidth - kLeft - kRight; }
    static double plot_h() { return kHeight - kTop - kBottom; }
    double ypx(double v) const { return kTop + plot_h() * (1.0 - (v - y_.lo) / (y_.hi - y_.lo)); }
    std::ostringstream& out() { return os_; }
    std::string finish()
    {
        os_ << "</svg>\n";
        return os_.str();
    }

private:
    Axis y_;
    std::ostringstream os_;
};

void check_series(const std::vector<Series>& s, const char* what)
{
    if (s.empty()) {
        throw std::invalid_argument(std::string(what) + ": nothing to plot");
    }
    for (const auto& x : s) {
        if (x.values.empty()) {
            throw std::invalid_argument(std::string(what) + ": series '" + x.label + "' is empty");
        }
    }
}

} // namespace

std::string boxplot_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& boxes)
{
    check_series(boxes, "boxplot");
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& b : boxes) {
        for (double v : b.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    Canvas c(title, y_label, nice_axis(lo, hi));
    auto& os = c.out();
    const double slot = Canvas::plot_w() / static_cast<double>(boxes.size());
    const double half = std::min(30.0, slot * 0.3);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Summary s = summarize(boxes[i].values);
        const double iqr = s.q3 - s.q1;
        double wlo = s.q1, whi = s.q3;
        for (double v : boxes[i].values) {
            if (v >= s.q1 - 1.5 * iqr) wlo = std::min(wlo, v);
            if (v <= s.q3 + 1.5 * iqr) whi = std::max(whi, v);
        }
        const std::string color = kPalette[i % std::size(kPalette)];
        const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
        os << "<line x1=\"" << num(cx) << "\" y1=\"" << num(c.ypx(wlo)) << "\" x2=\"" << num(cx) << "\" y2=\""
           << num(c.ypx(whi)) << "\" stroke=\"black\"/>\n";
        for (double w : {wlo, whi}) {
            os << "<line x1=\"" << num(cx - half / 2) << "\" y1=\"" << num(c.ypx(w)) << "\" x2=\"" << num(cx + half / 2)
               << "\" y2=\"" << num(c.ypx(w)) << "\" stroke=\"black\"/>\n";
        }
        os << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(c.ypx(s.q3)) << "\" width=\"" << num(2 * half)
           << "\" height=\"" << num(c.ypx(s.q1) - c.ypx(s.q3)) << "\" fill=\"" << color
           << "\" fill-opacity=\"0.35\" stroke=\"" << color << "\"/>\n";
        os << "<line x1=\"" << num(cx - half) << "\" y1=\"" << num(c.ypx(s.median)) << "\" x2=\"" << num(cx + half)
           << "\" y2=\"" << num(c.ypx(s.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        for (double v : boxes[i].values) {
            if (v < wlo || v > whi) {
                os << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(c.ypx(v)) << "\" r=\"2.5\" fill=\"none\" stroke=\""
                   << color << "\"/>\n";
            }
        }
        os << "<text x=\"" << num(cx) << "\" y=\"" << num(kHeight - kBottom + 18) << "\" text-anchor=\"middle\">"
           << escape(boxes[i].label) << "</text>\n";
    }
    return c.finish();
}

std::string curve_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& lines,
                      int max_x)
{
    check_series(lines, "curve");
    if (max_x < 1) {
        throw std::invalid_argument("curve: max_x must be positive");
    }
    double lo = INFINITY, hi = -INFINITY;
    std::size_t n = 0;
    for (const auto& l : lines) {
        const std::size_t m = std::min(l.values.size(), static_cast<std::size_t>(max_x));
        n = std::max(n, m);
        for (std::size_t k = 0; k < m; ++k) {
            lo = std::min(lo, l.values[k]);
            hi = std::max(hi, l.values[k]);
        }
    }
    Canvas c(title, y_label, nice_axis(lo, hi));
    auto& os = c.out();
    const auto xpx = [&](std::size_t k) {
        return n <= 1 ? kLeft + Canvas::plot_w() / 2
                      : kLeft + Canvas::plot_w() * static_cast<double>(k) / static_cast<double>(n - 1);
    };
    for (std::size_t k = 0; k < n; ++k) {
        if (n <= 10 || k % 5 == 4 || k == 0) {
            os << "<text x=\"" << num(xpx(k)) << "\" y=\"" << num(kHeight - kBottom + 18)
               << "\" text-anchor=\"middle\">" << k + 1 << "</text>\n";
        }
    }
    os << "<text x=\"" << num(kLeft + Canvas::plot_w() / 2) << "\" y=\"" << num(kHeight - 16)
       << "\" text-anchor=\"middle\">number of modes</text>\n";
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string color = kPalette[i % std::size(kPalette)];
        const std::size_t m = std::min(lines[i].values.size(), n);
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < m; ++k) {
            os << (k ? " " : "") << num(xpx(k)) << ',' << num(c.ypx(lines[i].values[k]));
        }
        os << "\"/>\n";
        const double ly = kTop + 16 + 16 * static_cast<double>(i);
        os << "<line x1=\"" << num(kWidth - kRight - 150) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
           << num(kWidth - kRight - 130) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
           << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << num(kWidth - kRight - 124) << "\" y=\"" << num(ly) << "\">" << escape(lines[i].label)
           << "</text>\n";
    }
    return c.finish();
}

} // namespace p2ssm::plot
