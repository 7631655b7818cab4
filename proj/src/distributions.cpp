#include "hdpo/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "hdpo/numeric.hpp"

namespace hdpo {

namespace {

constexpr double kWeightSumTol = 1e-12;
constexpr double kQuadConvergenceTol = 1e-8;

// Mixture with per-component constants folded in, so the hot quadrature
// loop does no allocation and no redundant logs.
struct PreparedMixture {
    std::vector<double> log_coeff;  // ln w_i - ln sigma_i - 0.5 ln(2 pi)
    std::vector<double> mu;
    std::vector<double> inv_sigma;

    explicit PreparedMixture(const GaussianMixtureSpec& spec) {
        log_coeff.reserve(spec.components.size());
        mu.reserve(spec.components.size());
        inv_sigma.reserve(spec.components.size());
        for (const auto& c : spec.components) {
            log_coeff.push_back(std::log(c.weight) - std::log(c.sigma) - 0.5 * std::log(2.0 * kPi));
            mu.push_back(c.mu);
            inv_sigma.push_back(1.0 / c.sigma);
        }
    }

    // Streaming logsumexp over component log densities.
    double log_pdf(double x) const {
        double m = -std::numeric_limits<double>::infinity();
        double s = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            double z = (x - mu[i]) * inv_sigma[i];
            double t = log_coeff[i] - 0.5 * z * z;
            if (t <= m) {
                s += std::exp(t - m);
            } else {
                s = s * std::exp(m - t) + 1.0;
                m = t;
            }
        }
        return m + std::log(s);
    }
};

// The integrand g(x) * log mixture(x) is analytic, but the log-sum-exp
// has branch points within distance pi / |slope difference| of each
// point where two components tie. A single global rule therefore
// converges far too slowly; instead the integral is taken over a window
// centered and scaled by (g.mu, g.sigma) and split into panels whose
// interior is free of tie points, so per-panel Gauss-Legendre converges
// geometrically.
std::vector<double> panel_boundaries(const GaussianParams& g, const PreparedMixture& pm) {
    constexpr double kWindowSigmas = 10.0;  // g mass beyond is ~1e-22
    constexpr double kMaxPanelSigmas = 2.0;
    const double lo = g.mu - kWindowSigmas * g.sigma;
    const double hi = g.mu + kWindowSigmas * g.sigma;

    std::vector<double> cuts{lo, hi};
    const std::size_t n_comp = pm.mu.size();
    auto add_root = [&](double x) {
        if (std::isfinite(x) && x > lo && x < hi) cuts.push_back(x);
    };
    for (std::size_t i = 0; i < n_comp; ++i) {
        for (std::size_t j = i + 1; j < n_comp; ++j) {
            // Tie points of component log densities: a x^2 + b x + c = 0.
            double ii = pm.inv_sigma[i] * pm.inv_sigma[i];
            double jj = pm.inv_sigma[j] * pm.inv_sigma[j];
            double a = 0.5 * (jj - ii);
            double b = pm.mu[i] * ii - pm.mu[j] * jj;
            double c = pm.log_coeff[i] - 0.5 * pm.mu[i] * pm.mu[i] * ii - pm.log_coeff[j] +
                       0.5 * pm.mu[j] * pm.mu[j] * jj;
            if (a == 0.0) {
                if (b != 0.0) add_root(-c / b);
                continue;
            }
            double disc = b * b - 4.0 * a * c;
            if (disc <= 0.0) continue;
            double sq = std::sqrt(disc);
            add_root((-b - sq) / (2.0 * a));
            add_root((-b + sq) / (2.0 * a));
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [&](double a, double b) { return b - a < 1e-12 * g.sigma; }),
               cuts.end());

    std::vector<double> bounds;
    bounds.push_back(cuts.front());
    const double max_len = kMaxPanelSigmas * g.sigma;
    for (std::size_t i = 1; i < cuts.size(); ++i) {
        double a = cuts[i - 1];
        double b = cuts[i];
        int pieces = static_cast<int>(std::ceil((b - a) / max_len));
        for (int k = 1; k <= pieces; ++k)
            bounds.push_back(a + (b - a) * (static_cast<double>(k) / pieces));
    }
    return bounds;
}

// Implicit-shift QL on a symmetric tridiagonal Jacobi matrix, tracking
// only the first row of the eigenvector matrix (all any Gauss rule
// needs). On return d holds the eigenvalues and q the first components.
void jacobi_eigen_first_components(std::vector<double>& d, std::vector<double>& e,
                                   std::vector<double>& q) {
    const int n = static_cast<int>(d.size());
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        while (true) {
            int m = l;
            for (; m < n - 1; ++m) {
                double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
            }
            if (m == l) break;
            if (++iter > 50)
                throw NumericError("quadrature rule: eigenvalue iteration failed for n=" +
                                   std::to_string(n));
            double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            double r = std::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
            double s = 1.0;
            double c = 1.0;
            double p = 0.0;
            bool underflow = false;
            for (int i = m - 1; i >= l; --i) {
                double f = s * e[i];
                double b = c * e[i];
                r = std::hypot(f, g);
                e[i + 1] = r;
                if (r == 0.0) {
                    // A rotation annihilated early; restart the sweep.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                double qf = q[i + 1];
                q[i + 1] = s * q[i] + c * qf;
                q[i] = c * q[i] - s * qf;
            }
            if (underflow) continue;
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

// Sort by node, scale squared first components to weights, and enforce
// the exact-arithmetic symmetry about 0 so +/- pairs match bitwise.
GaussHermiteRule assemble_rule(std::vector<double>& d, std::vector<double>& q,
                               double weight_total) {
    const int n = static_cast<int>(d.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return d[a] < d[b]; });

    GaussHermiteRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = d[order[i]];
        rule.weights[i] = weight_total * q[order[i]] * q[order[i]];
    }
    for (int i = 0; i < n / 2; ++i) {
        int j = n - 1 - i;
        double node = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        rule.nodes[i] = -node;
        rule.nodes[j] = node;
        double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

GaussHermiteRule compute_gauss_hermite(int n) {
    // Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix (zero
    // diagonal, off diagonal sqrt(j/2)); each weight is sqrt(pi) times
    // the squared first eigenvector component. Seeded Newton refinements
    // drift into the wrong root basin past n ~ 150, which is why the
    // eigenvalue route is used for every size.
    std::vector<double> d(n, 0.0);
    std::vector<double> e(n, 0.0);
    std::vector<double> q(n, 0.0);
    for (int j = 1; j < n; ++j) e[j - 1] = std::sqrt(j / 2.0);
    q[0] = 1.0;
    jacobi_eigen_first_components(d, e, q);
    return assemble_rule(d, q, std::sqrt(kPi));
}

GaussHermiteRule compute_gauss_legendre(int n) {
    // Same construction for the Legendre weight on [-1, 1]: off diagonal
    // j/sqrt(4j^2-1), total weight 2.
    std::vector<double> d(n, 0.0);
    std::vector<double> e(n, 0.0);
    std::vector<double> q(n, 0.0);
    for (int j = 1; j < n; ++j) e[j - 1] = j / std::sqrt(4.0 * j * j - 1.0);
    q[0] = 1.0;
    jacobi_eigen_first_components(d, e, q);
    return assemble_rule(d, q, 2.0);
}

const GaussHermiteRule& gauss_legendre_rule(int n) {
    static std::mutex mu;
    static std::map<int, GaussHermiteRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
    return it->second;
}

double composite_cross_entropy(const GaussianParams& g, const PreparedMixture& pm,
                               const std::vector<double>& bounds, int nodes_per_panel) {
    const GaussHermiteRule& rule = gauss_legendre_rule(nodes_per_panel);
    const double inv_sigma = 1.0 / g.sigma;
    const double norm = 1.0 / (g.sigma * std::sqrt(2.0 * kPi));
    double acc = 0.0;
    for (std::size_t p = 1; p < bounds.size(); ++p) {
        const double mid = 0.5 * (bounds[p - 1] + bounds[p]);
        const double half = 0.5 * (bounds[p] - bounds[p - 1]);
        double panel = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            double x = mid + half * rule.nodes[i];
            double z = (x - g.mu) * inv_sigma;
            panel += rule.weights[i] * std::exp(-0.5 * z * z) * pm.log_pdf(x);
        }
        acc += half * panel;
    }
    return -acc * norm;
}

}  // namespace

void validate(const GaussianParams& g) {
    if (!std::isfinite(g.mu)) throw std::invalid_argument("GaussianParams: mu must be finite");
    if (!(g.sigma > 0.0) || !std::isfinite(g.sigma))
        throw std::invalid_argument("GaussianParams: sigma must be positive and finite");
}

void validate(const GaussianMixtureSpec& spec) {
    if (spec.components.empty())
        throw std::invalid_argument("GaussianMixtureSpec: at least one component required");
    double total = 0.0;
    for (const auto& c : spec.components) {
        if (!(c.weight > 0.0) || !std::isfinite(c.weight))
            throw std::invalid_argument("GaussianMixtureSpec: weights must be positive and finite");
        if (!std::isfinite(c.mu))
            throw std::invalid_argument("GaussianMixtureSpec: means must be finite");
        if (!(c.sigma > 0.0) || !std::isfinite(c.sigma))
            throw std::invalid_argument("GaussianMixtureSpec: sigmas must be positive and finite");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > kWeightSumTol)
        throw std::invalid_argument("GaussianMixtureSpec: weights must sum to 1 within 1e-12");
}

void validate(const CategoricalDist& d) {
    if (d.probs.empty()) throw std::invalid_argument("CategoricalDist: empty support");
    double total = 0.0;
    for (double p : d.probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("CategoricalDist: entries must be >= 0 and finite");
        total += p;
    }
    if (std::abs(total - 1.0) > kWeightSumTol)
        throw std::invalid_argument("CategoricalDist: probabilities must sum to 1 within 1e-12");
}

void validate(const QuadratureConfig& q) {
    if (q.node_count < 8)
        throw std::invalid_argument("QuadratureConfig: node_count must be >= 8");
}

double gauss_entropy(const GaussianParams& g) {
    validate(g);
    return 0.5 * std::log(2.0 * kPi * std::exp(1.0) * g.sigma * g.sigma);
}

double gmm_log_pdf(const GaussianMixtureSpec& spec, double x) {
    validate(spec);
    if (!std::isfinite(x)) throw std::invalid_argument("gmm_log_pdf: x must be finite");
    return PreparedMixture(spec).log_pdf(x);
}

const GaussHermiteRule& gauss_hermite_rule(int n) {
    if (n < 2) throw std::invalid_argument("gauss_hermite_rule: need at least 2 nodes");
    static std::mutex mu;
    static std::map<int, GaussHermiteRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_hermite(n)).first;
    return it->second;
}

double cross_entropy_gauss_gmm(const GaussianParams& g, const GaussianMixtureSpec& spec,
                               const QuadratureConfig& q) {
    validate(g);
    validate(spec);
    validate(q);
    PreparedMixture pm(spec);
    std::vector<double> bounds = panel_boundaries(g, pm);
    double coarse = composite_cross_entropy(g, pm, bounds, q.node_count);
    double fine = composite_cross_entropy(g, pm, bounds, 2 * q.node_count);
    if (!(std::abs(coarse - fine) <= kQuadConvergenceTol)) {
        std::ostringstream msg;
        msg << "cross_entropy_gauss_gmm: quadrature not converged at node_count=" << q.node_count
            << " (value moved " << std::abs(coarse - fine) << " when doubled, tolerance "
            << kQuadConvergenceTol << ", g = N(" << g.mu << ", " << g.sigma << "))";
        throw QuadratureError(msg.str());
    }
    return fine;
}

double d_alpha_continuous(const GaussianParams& g, const GaussianMixtureSpec& spec, double alpha,
                          const QuadratureConfig& q) {
    if (!(alpha >= 0.0 && alpha <= 2.0))
        throw std::invalid_argument("d_alpha_continuous: alpha must be in [0, 2]");
    return -alpha * gauss_entropy(g) + cross_entropy_gauss_gmm(g, spec, q);
}

CategoricalFunctionals categorical_functionals(const CategoricalDist& p, const CategoricalDist& q,
                                               double alpha) {
    validate(p);
    validate(q);
    if (p.probs.size() != q.probs.size())
        throw std::invalid_argument("categorical_functionals: p and q must share a support size");
    if (!(alpha >= 0.0 && alpha <= 2.0))
        throw std::invalid_argument("categorical_functionals: alpha must be in [0, 2]");
    CategoricalFunctionals out;
    for (std::size_t i = 0; i < p.probs.size(); ++i) {
        double pi = p.probs[i];
        if (pi <= 0.0) continue;
        if (q.probs[i] <= 0.0)
            throw SupportError("categorical_functionals: p has mass at outcome " +
                               std::to_string(i) + " where q is zero");
        out.entropy -= pi * std::log(pi);
        out.cross_entropy -= pi * std::log(q.probs[i]);
    }
    out.kl = out.cross_entropy - out.entropy;
    out.d_alpha = -alpha * out.entropy + out.cross_entropy;
    return out;
}

void softmax_stable(const double* logits, std::size_t n, double* out) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (logits[i] > m) m = logits[i];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(logits[i] - m);
        total += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= total;
}

std::vector<double> apply_temperature(const std::vector<double>& logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("apply_temperature: empty logits");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("apply_temperature: temperature must be positive and finite");
    for (double z : logits)
        if (!std::isfinite(z))
            throw std::invalid_argument("apply_temperature: logits must be finite");
    std::vector<double> scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
    std::vector<double> out(logits.size());
    softmax_stable(scaled.data(), scaled.size(), out.data());
    return out;
}

}  // namespace hdpo
