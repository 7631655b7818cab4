#pragma once

// Fit a single Gaussian to a Gaussian mixture by minimising
// D_alpha(g || spec) over (mu, sigma): coarse grid scan, then Nelder-Mead
// refinement from the best cell. Also renders the log-difference heatmap
// of the landscape around the fitted optimum, capped at +3.

#include <string>
#include <vector>

#include "hdpo/distributions.hpp"
#include "hdpo/matrix.hpp"

namespace hdpo {

struct GridSpec {
    double min = 0.0;
    double max = 1.0;
    int count = 2;  // >= 2
    bool log_spaced = false;
};

struct FitConfig {
    double alpha = 1.0;  // in [0, 2]
    GridSpec mu_grid;
    GridSpec sigma_grid;  // sigma_grid.min must be >= 1e-3
    int refine_iters = 500;
    double refine_tol = 1e-8;  // simplex diameter
    QuadratureConfig quadrature;
    int threads = 1;  // <= 0 means use all hardware threads
};

struct FitResult {
    GaussianParams g_hat;
    double d_alpha_value = 0.0;
    GaussianParams grid_best;
    double grid_best_value = 0.0;
    // False when the simplex never met the diameter tolerance or the fit
    // ran into the sigma floor (the objective keeps improving as sigma
    // shrinks, e.g. at alpha = 0).
    bool converged = false;
};

struct HeatmapSpec {
    GridSpec mu_range;
    GridSpec sigma_range;
};

struct Heatmap {
    std::vector<double> mu_axis;
    std::vector<double> sigma_axis;
    Matrix values;  // rows indexed by sigma, cols by mu
    GaussianParams star;
};

struct NamedMixture {
    std::string name;
    GaussianMixtureSpec spec;
};

struct SweepEntry {
    double alpha = 0.0;
    FitResult result;
    bool ok = false;
    std::string error;
};

// The nine benchmark mixtures: equal weights, first mean at 0, means
// spaced by a constant gap. Two components use stds (1, 0.8) with gaps
// {4, 5, 6}; three components stds (1, 0.8, 0.5) with gaps {3, 5, 7};
// four components stds (1, 0.8, 0.5, 0.3) with gaps {3, 5, 7}.
std::vector<NamedMixture> standard_configs();

// Look up one of the standard_configs entries by name.
GaussianMixtureSpec standard_config(const std::string& name);

// Search box derived from the mixture: mu linear over
// [lowest mean - 3 max std, highest mean + 3 max std] x 200, sigma
// log-spaced over [0.05, 3 max std] x 100.
FitConfig default_fit_config(const GaussianMixtureSpec& spec, double alpha);

FitResult fit_gaussian_dalpha(const GaussianMixtureSpec& spec, const FitConfig& cfg);

// Per-cell min(3, ln D_alpha(cell) - ln D_alpha(fit.g_hat)). The fit must
// come from the same (spec, alpha). Throws NumericError (naming the cell)
// if any cell or the fit itself has non-positive D_alpha, which happens
// for alpha > 1 where the objective can cross zero.
Heatmap dalpha_heatmap(const GaussianMixtureSpec& spec, double alpha, const HeatmapSpec& hs,
                       const FitResult& fit, int threads = 1);

// One fit per alpha with cfg's grids; per-alpha failures are recorded in
// the entry and the sweep continues.
std::vector<SweepEntry> alpha_sweep_fit(const GaussianMixtureSpec& spec,
                                        const std::vector<double>& alphas, const FitConfig& cfg);

// Axis helper shared with the CLI: count points over [min, max], linear
// or log spaced, endpoints included.
std::vector<double> grid_axis(const GridSpec& g);

}  // namespace hdpo
