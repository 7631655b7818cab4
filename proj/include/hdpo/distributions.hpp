#pragma once

// One dimensional Gaussians, Gaussian mixtures and finite categorical
// distributions, plus the entropy-scaled divergence
//
//     D_alpha(g || spec) = -alpha * H(g) + H(g, spec)
//
// that the fitting and training modules minimise. alpha = 1 recovers
// reverse KL. alpha < 1 discounts the entropy bonus, so minimisers
// concentrate (mode seeking); alpha > 1 spreads them out. Beware that
// D_alpha(p || p) = (1 - alpha) * H(p), which is nonzero for alpha != 1:
// this is a regularised objective, not a divergence.

#include <vector>

#include "hdpo/errors.hpp"

namespace hdpo {

struct GaussianParams {
    double mu = 0.0;
    double sigma = 1.0;  // must be > 0
};

struct MixtureComponent {
    double weight = 1.0;  // must be > 0; weights sum to 1
    double mu = 0.0;
    double sigma = 1.0;  // must be > 0
};

struct GaussianMixtureSpec {
    std::vector<MixtureComponent> components;  // non-empty
};

struct CategoricalDist {
    std::vector<double> probs;  // non-empty, entries >= 0, sum 1 within 1e-12
};

struct QuadratureConfig {
    int node_count = 128;  // >= 8 nodes per panel; also run at 2x for a convergence check
};

void validate(const GaussianParams& g);
void validate(const GaussianMixtureSpec& spec);
void validate(const CategoricalDist& d);
void validate(const QuadratureConfig& q);

// Differential entropy 0.5 * ln(2 pi e sigma^2).
double gauss_entropy(const GaussianParams& g);

// Log density of the mixture at x, evaluated in the log domain so deep
// tails stay finite instead of underflowing.
double gmm_log_pdf(const GaussianMixtureSpec& spec, double x);

// H(g, spec) = -E_{x~g}[ln spec(x)] over a window centered and scaled by
// (g.mu, g.sigma), integrated by Gauss-Legendre panels that are split at
// the mixture's component tie points (the log density is analytic only
// away from those). Throws QuadratureError if doubling the per-panel
// node count moves the value by more than 1e-8.
double cross_entropy_gauss_gmm(const GaussianParams& g, const GaussianMixtureSpec& spec,
                               const QuadratureConfig& q = {});

// -alpha * gauss_entropy(g) + cross_entropy_gauss_gmm(g, spec). Requires
// alpha in [0, 2].
double d_alpha_continuous(const GaussianParams& g, const GaussianMixtureSpec& spec, double alpha,
                          const QuadratureConfig& q = {});

struct CategoricalFunctionals {
    double entropy = 0.0;
    double cross_entropy = 0.0;
    double kl = 0.0;
    double d_alpha = 0.0;
};

// All four functionals of (p, q) in one pass, 0 ln 0 taken as 0. Throws
// SupportError if p places mass where q has none. Requires alpha in [0, 2].
CategoricalFunctionals categorical_functionals(const CategoricalDist& p, const CategoricalDist& q,
                                               double alpha);

// softmax(logits / temperature) with max subtraction. temperature > 0.
std::vector<double> apply_temperature(const std::vector<double>& logits, double temperature);

// Shared stable softmax kernel. Exposed so every caller sharpens and
// normalises through the same floating point expression.
void softmax_stable(const double* logits, std::size_t n, double* out);

// Gauss-Hermite nodes and weights for integrals against exp(-x^2),
// computed by Newton iteration on the normalised Hermite recurrence and
// cached per node count. Exposed for tests.
struct GaussHermiteRule {
    std::vector<double> nodes;    // ascending
    std::vector<double> weights;  // sum to sqrt(pi)
};

const GaussHermiteRule& gauss_hermite_rule(int n);

}  // namespace hdpo
