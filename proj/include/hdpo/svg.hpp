#pragma once

// Self contained SVG heatmap renderer. Fixed colour scale over [0, 3]
// (values are clamped into it), perceptual dark-to-yellow ramp, a red
// star at the fitted parameters, mu on the x axis and sigma on the y
// axis, plus a labelled colour bar. Output bytes are deterministic.

#include <filesystem>
#include <string>
#include <vector>

#include "hdpo/matrix.hpp"

namespace hdpo {

// values has rows indexed by sigma and cols by mu, matching the axes.
std::string render_heatmap_svg(const Matrix& values, const std::vector<double>& mu_axis,
                               const std::vector<double>& sigma_axis, double star_mu,
                               double star_sigma);

// Colour for a scale position in [0, 1]; exposed for tests.
std::string heatmap_color(double t);

void emit_heatmap_svg(const Matrix& values, const std::vector<double>& mu_axis,
                      const std::vector<double>& sigma_axis, double star_mu, double star_sigma,
                      const std::filesystem::path& path);

}  // namespace hdpo
