#include "hdpo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "hdpo/csv.hpp"
#include "hdpo/errors.hpp"
#include "hdpo/numeric.hpp"

namespace hdpo {

namespace {

// Dark-to-yellow perceptual ramp, anchors evenly spaced over [0, 1].
constexpr unsigned char kRamp[][3] = {
    {68, 1, 84},    {72, 40, 120},  {62, 74, 137},  {49, 104, 142}, {38, 130, 142},
    {31, 158, 137}, {53, 183, 121}, {110, 206, 88}, {181, 222, 43}, {253, 231, 37},
};
constexpr int kRampSize = 10;

// Pixel coordinate rounded to 2 decimals so output bytes stay small and
// deterministic.
std::string px(double v) { return format_double(std::round(v * 100.0) / 100.0); }

// Tick label with limited precision (these are human-facing, the CSV
// carries the exact values).
std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// Fractional index of value in a monotone axis, piecewise linear, for
// star placement on either linear or log spaced axes.
double fractional_index(const std::vector<double>& axis, double value) {
    if (value <= axis.front()) return 0.0;
    if (value >= axis.back()) return static_cast<double>(axis.size() - 1);
    for (std::size_t i = 1; i < axis.size(); ++i)
        if (value <= axis[i])
            return static_cast<double>(i - 1) + (value - axis[i - 1]) / (axis[i] - axis[i - 1]);
    return static_cast<double>(axis.size() - 1);
}

}  // namespace

std::string heatmap_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    double pos = t * (kRampSize - 1);
    int lo = static_cast<int>(pos);
    int hi = std::min(lo + 1, kRampSize - 1);
    double f = pos - lo;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(std::lround(kRamp[lo][0] + f * (kRamp[hi][0] - kRamp[lo][0]))),
                  static_cast<int>(std::lround(kRamp[lo][1] + f * (kRamp[hi][1] - kRamp[lo][1]))),
                  static_cast<int>(std::lround(kRamp[lo][2] + f * (kRamp[hi][2] - kRamp[lo][2]))));
    return buf;
}

std::string render_heatmap_svg(const Matrix& values, const std::vector<double>& mu_axis,
                               const std::vector<double>& sigma_axis, double star_mu,
                               double star_sigma) {
    if (values.rows != sigma_axis.size() || values.cols != mu_axis.size())
        throw std::invalid_argument("render_heatmap_svg: axis sizes do not match the matrix");
    if (mu_axis.size() < 2 || sigma_axis.size() < 2)
        throw std::invalid_argument("render_heatmap_svg: need at least a 2x2 grid");

    const double kScaleMax = 3.0;  // matches the min(3, .) cap on the values
    const double plot_w = 480.0, plot_h = 420.0;
    const double left = 70.0, top = 20.0, bottom = 50.0;
    const double bar_gap = 24.0, bar_w = 18.0, bar_label_w = 66.0;
    const double width = left + plot_w + bar_gap + bar_w + bar_label_w;
    const double height = top + plot_h + bottom;
    const double cell_w = plot_w / static_cast<double>(mu_axis.size());
    const double cell_h = plot_h / static_cast<double>(sigma_axis.size());

    std::string s;
    s.reserve(values.data.size() * 64 + 4096);
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(width) + "\" height=\"" +
         px(height) + "\" viewBox=\"0 0 " + px(width) + " " + px(height) + "\">\n";
    s += "<rect width=\"" + px(width) + "\" height=\"" + px(height) + "\" fill=\"white\"/>\n";

    // Cells: sigma rises upward, so row si sits at the bottom for si = 0.
    for (std::size_t si = 0; si < sigma_axis.size(); ++si) {
        double y = top + plot_h - cell_h * static_cast<double>(si + 1);
        for (std::size_t mi = 0; mi < mu_axis.size(); ++mi) {
            double x = left + cell_w * static_cast<double>(mi);
            double v = std::clamp(values.at(si, mi), 0.0, kScaleMax);
            s += "<rect x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" + px(cell_w + 0.5) +
                 "\" height=\"" + px(cell_h + 0.5) + "\" fill=\"" +
                 heatmap_color(v / kScaleMax) + "\"/>\n";
        }
    }

    // Axis ticks: five per axis, placed by index so they line up with cells.
    auto x_of_index = [&](double idx) { return left + cell_w * (idx + 0.5); };
    auto y_of_index = [&](double idx) { return top + plot_h - cell_h * (idx + 0.5); };
    for (int t = 0; t < 5; ++t) {
        double fm = static_cast<double>(mu_axis.size() - 1) * t / 4.0;
        double fs = static_cast<double>(sigma_axis.size() - 1) * t / 4.0;
        std::size_t mi = static_cast<std::size_t>(std::lround(fm));
        std::size_t si = static_cast<std::size_t>(std::lround(fs));
        double xt = x_of_index(static_cast<double>(mi));
        double ys = y_of_index(static_cast<double>(si));
        s += "<line x1=\"" + px(xt) + "\" y1=\"" + px(top + plot_h) + "\" x2=\"" + px(xt) +
             "\" y2=\"" + px(top + plot_h + 5) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + px(xt) + "\" y=\"" + px(top + plot_h + 18) +
             "\" font-size=\"11\" text-anchor=\"middle\">" + tick_label(mu_axis[mi]) + "</text>\n";
        s += "<line x1=\"" + px(left - 5) + "\" y1=\"" + px(ys) + "\" x2=\"" + px(left) +
             "\" y2=\"" + px(ys) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + px(left - 8) + "\" y=\"" + px(ys + 4) +
             "\" font-size=\"11\" text-anchor=\"end\">" + tick_label(sigma_axis[si]) +
             "</text>\n";
    }
    s += "<text x=\"" + px(left + plot_w / 2) + "\" y=\"" + px(height - 12) +
         "\" font-size=\"14\" text-anchor=\"middle\">\xce\xbc</text>\n";
    s += "<text x=\"" + px(18.0) + "\" y=\"" + px(top + plot_h / 2) +
         "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         px(top + plot_h / 2) + ")\">\xcf\x83</text>\n";

    // Colour bar with the fixed [0, 3] scale.
    const int bar_slices = 60;
    double bar_x = left + plot_w + bar_gap;
    for (int i = 0; i < bar_slices; ++i) {
        double frac = (i + 0.5) / bar_slices;
        double y = top + plot_h * (1.0 - static_cast<double>(i + 1) / bar_slices);
        s += "<rect x=\"" + px(bar_x) + "\" y=\"" + px(y) + "\" width=\"" + px(bar_w) +
             "\" height=\"" + px(plot_h / bar_slices + 0.5) + "\" fill=\"" + heatmap_color(frac) +
             "\"/>\n";
    }
    for (int v = 0; v <= 3; ++v) {
        double y = top + plot_h * (1.0 - v / kScaleMax);
        s += "<text x=\"" + px(bar_x + bar_w + 6) + "\" y=\"" + px(y + 4) +
             "\" font-size=\"11\">" + std::to_string(v) + "</text>\n";
    }

    // Red star at the fitted parameters.
    double sx = x_of_index(fractional_index(mu_axis, star_mu));
    double sy = y_of_index(fractional_index(sigma_axis, star_sigma));
    s += "<polygon points=\"";
    for (int k = 0; k < 10; ++k) {
        double radius = (k % 2 == 0) ? 8.0 : 3.4;
        double ang = -0.5 * kPi + k * kPi / 5.0;
        if (k) s += ' ';
        s += px(sx + radius * std::cos(ang)) + "," + px(sy + radius * std::sin(ang));
    }
    s += "\" fill=\"red\" stroke=\"white\" stroke-width=\"1\"/>\n";
    s += "</svg>\n";
    return s;
}

void emit_heatmap_svg(const Matrix& values, const std::vector<double>& mu_axis,
                      const std::vector<double>& sigma_axis, double star_mu, double star_sigma,
                      const std::filesystem::path& path) {
    std::string body = render_heatmap_svg(values, mu_axis, sigma_axis, star_mu, star_sigma);
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("emit_heatmap_svg: cannot open " + path.string());
    file.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!file) throw IoError("emit_heatmap_svg: write failed for " + path.string());
}

}  // namespace hdpo
