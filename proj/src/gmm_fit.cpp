#include "hdpo/gmm_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hdpo/parallel.hpp"

namespace hdpo {

namespace {

// Hard floor for sigma during refinement. Reaching it means the objective
// wants a point mass and the fit is reported as not converged.
constexpr double kSigmaFloor = 1e-3;

void validate_grid(const GridSpec& g, const char* what) {
    if (!(g.min < g.max))
        throw std::invalid_argument(std::string(what) + ": min must be < max");
    if (g.count < 2) throw std::invalid_argument(std::string(what) + ": count must be >= 2");
    if (g.log_spaced && !(g.min > 0.0))
        throw std::invalid_argument(std::string(what) + ": log spacing needs min > 0");
    if (!std::isfinite(g.min) || !std::isfinite(g.max))
        throw std::invalid_argument(std::string(what) + ": bounds must be finite");
}

void validate_fit_config(const FitConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 2.0))
        throw std::invalid_argument("FitConfig: alpha must be in [0, 2]");
    validate_grid(cfg.mu_grid, "FitConfig.mu_grid");
    validate_grid(cfg.sigma_grid, "FitConfig.sigma_grid");
    if (!(cfg.sigma_grid.min >= kSigmaFloor))
        throw std::invalid_argument("FitConfig.sigma_grid: min must be >= 1e-3");
    if (cfg.refine_iters < 0)
        throw std::invalid_argument("FitConfig: refine_iters must be >= 0");
    if (!(cfg.refine_tol > 0.0))
        throw std::invalid_argument("FitConfig: refine_tol must be positive");
    validate(cfg.quadrature);
}

struct Simplex2d {
    // One vertex of a (mu, sigma) simplex plus its objective value.
    struct Vertex {
        double mu = 0.0;
        double sigma = 0.0;
        double value = 0.0;
    };
    Vertex v[3];
};

double vertex_distance(const Simplex2d::Vertex& a, const Simplex2d::Vertex& b) {
    double dm = a.mu - b.mu;
    double ds = a.sigma - b.sigma;
    return std::sqrt(dm * dm + ds * ds);
}

double simplex_diameter(const Simplex2d& s) {
    return std::max({vertex_distance(s.v[0], s.v[1]), vertex_distance(s.v[0], s.v[2]),
                     vertex_distance(s.v[1], s.v[2])});
}

}  // namespace

std::vector<double> grid_axis(const GridSpec& g) {
    validate_grid(g, "grid_axis");
    std::vector<double> axis(g.count);
    if (g.log_spaced) {
        double ratio = std::log(g.max / g.min) / (g.count - 1);
        for (int i = 0; i < g.count; ++i) axis[i] = g.min * std::exp(ratio * i);
    } else {
        double step = (g.max - g.min) / (g.count - 1);
        for (int i = 0; i < g.count; ++i) axis[i] = g.min + step * i;
    }
    axis.front() = g.min;  // pin endpoints against rounding
    axis.back() = g.max;
    return axis;
}

std::vector<NamedMixture> standard_configs() {
    struct Family {
        int n_components;
        std::vector<double> stds;
        std::vector<double> gaps;
    };
    const std::vector<Family> families = {
        {2, {1.0, 0.8}, {4.0, 5.0, 6.0}},
        {3, {1.0, 0.8, 0.5}, {3.0, 5.0, 7.0}},
        {4, {1.0, 0.8, 0.5, 0.3}, {3.0, 5.0, 7.0}},
    };
    std::vector<NamedMixture> out;
    for (const auto& fam : families) {
        for (double gap : fam.gaps) {
            NamedMixture nm;
            nm.name = std::to_string(fam.n_components) + "comp-gap" +
                      std::to_string(static_cast<int>(gap));
            double w = 1.0 / fam.n_components;
            for (int i = 0; i < fam.n_components; ++i)
                nm.spec.components.push_back({w, gap * i, fam.stds[i]});
            validate(nm.spec);
            out.push_back(std::move(nm));
        }
    }
    return out;
}

GaussianMixtureSpec standard_config(const std::string& name) {
    for (auto& nm : standard_configs())
        if (nm.name == name) return nm.spec;
    throw std::invalid_argument("standard_config: unknown mixture name '" + name + "'");
}

FitConfig default_fit_config(const GaussianMixtureSpec& spec, double alpha) {
    validate(spec);
    double lo_mean = spec.components.front().mu;
    double hi_mean = lo_mean;
    double max_std = 0.0;
    for (const auto& c : spec.components) {
        lo_mean = std::min(lo_mean, c.mu);
        hi_mean = std::max(hi_mean, c.mu);
        max_std = std::max(max_std, c.sigma);
    }
    FitConfig cfg;
    cfg.alpha = alpha;
    cfg.mu_grid = {lo_mean - 3.0 * max_std, hi_mean + 3.0 * max_std, 200, false};
    cfg.sigma_grid = {0.05, 3.0 * max_std, 100, true};
    return cfg;
}

FitResult fit_gaussian_dalpha(const GaussianMixtureSpec& spec, const FitConfig& cfg) {
    validate(spec);
    validate_fit_config(cfg);

    const std::vector<double> mu_axis = grid_axis(cfg.mu_grid);
    const std::vector<double> sigma_axis = grid_axis(cfg.sigma_grid);
    const std::size_t n_mu = mu_axis.size();
    const std::size_t n_sigma = sigma_axis.size();

    auto objective = [&](double mu, double sigma) {
        return d_alpha_continuous({mu, std::max(sigma, kSigmaFloor)}, spec, cfg.alpha,
                                  cfg.quadrature);
    };

    // 1. Grid scan. Cells are evaluated in parallel by index; the argmin
    // scan afterwards is sequential, so results do not depend on threads.
    std::vector<double> values(n_mu * n_sigma);
    parallel_for(values.size(), cfg.threads, [&](std::size_t idx) {
        std::size_t mi = idx / n_sigma;
        std::size_t si = idx % n_sigma;
        values[idx] = d_alpha_continuous({mu_axis[mi], sigma_axis[si]}, spec, cfg.alpha,
                                         cfg.quadrature);
    });

    std::size_t best_idx = 0;
    for (std::size_t idx = 1; idx < values.size(); ++idx) {
        // Ties broken toward smaller sigma, then smaller mu. The scan order
        // is mu-major, so within equal value we must compare explicitly.
        double v = values[idx];
        double b = values[best_idx];
        if (v < b) {
            best_idx = idx;
        } else if (v == b) {
            std::size_t mi = idx / n_sigma, si = idx % n_sigma;
            std::size_t bmi = best_idx / n_sigma, bsi = best_idx % n_sigma;
            if (sigma_axis[si] < sigma_axis[bsi] ||
                (sigma_axis[si] == sigma_axis[bsi] && mu_axis[mi] < mu_axis[bmi]))
                best_idx = idx;
        }
    }

    FitResult res;
    res.grid_best = {mu_axis[best_idx / n_sigma], sigma_axis[best_idx % n_sigma]};
    res.grid_best_value = values[best_idx];

    // 2. Nelder-Mead from the best cell. Coefficients: reflection 1,
    // expansion 2, contraction 0.5, shrink 0.5.
    double dmu = (cfg.mu_grid.max - cfg.mu_grid.min) / (cfg.mu_grid.count - 1);
    double dsigma = cfg.sigma_grid.log_spaced
                        ? res.grid_best.sigma *
                              (std::exp(std::log(cfg.sigma_grid.max / cfg.sigma_grid.min) /
                                        (cfg.sigma_grid.count - 1)) -
                               1.0)
                        : (cfg.sigma_grid.max - cfg.sigma_grid.min) / (cfg.sigma_grid.count - 1);
    dsigma = std::max(dsigma, 1e-6);

    Simplex2d s;
    s.v[0] = {res.grid_best.mu, res.grid_best.sigma, res.grid_best_value};
    s.v[1] = {res.grid_best.mu + dmu, res.grid_best.sigma,
              objective(res.grid_best.mu + dmu, res.grid_best.sigma)};
    s.v[2] = {res.grid_best.mu, res.grid_best.sigma + dsigma,
              objective(res.grid_best.mu, res.grid_best.sigma + dsigma)};

    bool tol_reached = false;
    for (int iter = 0; iter < cfg.refine_iters; ++iter) {
        std::sort(std::begin(s.v), std::end(s.v),
                  [](const auto& a, const auto& b) { return a.value < b.value; });
        if (simplex_diameter(s) < cfg.refine_tol) {
            tol_reached = true;
            break;
        }
        const auto& best = s.v[0];
        auto& worst = s.v[2];
        double cmu = 0.5 * (s.v[0].mu + s.v[1].mu);
        double csigma = 0.5 * (s.v[0].sigma + s.v[1].sigma);

        double rmu = cmu + (cmu - worst.mu);
        double rsigma = csigma + (csigma - worst.sigma);
        double rval = objective(rmu, rsigma);
        if (rval < best.value) {
            double emu = cmu + 2.0 * (cmu - worst.mu);
            double esigma = csigma + 2.0 * (csigma - worst.sigma);
            double eval_ = objective(emu, esigma);
            if (eval_ < rval)
                worst = {emu, esigma, eval_};
            else
                worst = {rmu, rsigma, rval};
        } else if (rval < s.v[1].value) {
            worst = {rmu, rsigma, rval};
        } else {
            // Contract toward the better of worst/reflected.
            bool outside = rval < worst.value;
            double tmu = outside ? rmu : worst.mu;
            double tsigma = outside ? rsigma : worst.sigma;
            double kmu = cmu + 0.5 * (tmu - cmu);
            double ksigma = csigma + 0.5 * (tsigma - csigma);
            double kval = objective(kmu, ksigma);
            if (kval < std::min(rval, worst.value)) {
                worst = {kmu, ksigma, kval};
            } else {
                // Shrink toward the best vertex.
                for (int i = 1; i < 3; ++i) {
                    s.v[i].mu = best.mu + 0.5 * (s.v[i].mu - best.mu);
                    s.v[i].sigma = best.sigma + 0.5 * (s.v[i].sigma - best.sigma);
                    s.v[i].value = objective(s.v[i].mu, s.v[i].sigma);
                }
            }
        }
    }
    std::sort(std::begin(s.v), std::end(s.v),
              [](const auto& a, const auto& b) { return a.value < b.value; });
    if (!tol_reached && simplex_diameter(s) < cfg.refine_tol) tol_reached = true;

    double ref_mu = s.v[0].mu;
    double ref_sigma = std::max(s.v[0].sigma, kSigmaFloor);
    double ref_value = s.v[0].value;
    if (ref_value <= res.grid_best_value) {
        res.g_hat = {ref_mu, ref_sigma};
        res.d_alpha_value = ref_value;
    } else {
        // Defensive: the initial vertex is the grid best, so refinement
        // cannot genuinely worsen; keep the grid answer if it somehow did.
        res.g_hat = res.grid_best;
        res.d_alpha_value = res.grid_best_value;
    }
    bool on_floor = res.g_hat.sigma <= kSigmaFloor * (1.0 + 1e-9);
    res.converged = tol_reached && !on_floor;
    return res;
}

Heatmap dalpha_heatmap(const GaussianMixtureSpec& spec, double alpha, const HeatmapSpec& hs,
                       const FitResult& fit, int threads) {
    validate(spec);
    if (!(alpha >= 0.0 && alpha <= 2.0))
        throw std::invalid_argument("dalpha_heatmap: alpha must be in [0, 2]");
    validate_grid(hs.mu_range, "HeatmapSpec.mu_range");
    validate_grid(hs.sigma_range, "HeatmapSpec.sigma_range");
    if (!(hs.sigma_range.min > 0.0))
        throw std::invalid_argument("HeatmapSpec.sigma_range: min must be positive");

    if (!(fit.d_alpha_value > 0.0)) {
        std::ostringstream msg;
        msg << "dalpha_heatmap: D_alpha at the fitted star is " << fit.d_alpha_value
            << "; the log-difference map needs positive values";
        throw NumericError(msg.str());
    }

    Heatmap hm;
    hm.mu_axis = grid_axis(hs.mu_range);
    hm.sigma_axis = grid_axis(hs.sigma_range);
    hm.star = fit.g_hat;
    hm.values = Matrix(hm.sigma_axis.size(), hm.mu_axis.size());

    std::vector<double> raw(hm.values.data.size());
    parallel_for(raw.size(), threads, [&](std::size_t idx) {
        std::size_t si = idx / hm.mu_axis.size();
        std::size_t mi = idx % hm.mu_axis.size();
        raw[idx] = d_alpha_continuous({hm.mu_axis[mi], hm.sigma_axis[si]}, spec, alpha);
    });

    double log_star = std::log(fit.d_alpha_value);
    for (std::size_t idx = 0; idx < raw.size(); ++idx) {
        if (!(raw[idx] > 0.0)) {
            std::size_t si = idx / hm.mu_axis.size();
            std::size_t mi = idx % hm.mu_axis.size();
            std::ostringstream msg;
            msg << "dalpha_heatmap: non-positive D_alpha=" << raw[idx] << " at cell (mu_index="
                << mi << ", sigma_index=" << si << ", mu=" << hm.mu_axis[mi]
                << ", sigma=" << hm.sigma_axis[si] << ")";
            throw NumericError(msg.str());
        }
        hm.values.data[idx] = std::min(3.0, std::log(raw[idx]) - log_star);
    }
    return hm;
}

std::vector<SweepEntry> alpha_sweep_fit(const GaussianMixtureSpec& spec,
                                        const std::vector<double>& alphas, const FitConfig& cfg) {
    if (alphas.empty()) throw std::invalid_argument("alpha_sweep_fit: empty alpha list");
    std::vector<SweepEntry> out(alphas.size());
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        out[i].alpha = alphas[i];
        FitConfig per = cfg;
        per.alpha = alphas[i];
        try {
            out[i].result = fit_gaussian_dalpha(spec, per);
            out[i].ok = true;
        } catch (const std::exception& e) {
            out[i].ok = false;
            out[i].error = e.what();
        }
    }
    return out;
}

}  // namespace hdpo
