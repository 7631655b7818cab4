#pragma once

// Small shared numeric helpers. All are safe for large magnitude inputs;
// summations run in fixed index order so results are bit-reproducible.

#include <cmath>
#include <cstddef>
#include <limits>

namespace hdpo {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline double logsumexp(const double* v, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        if (v[i] > m) m = v[i];
    if (!std::isfinite(m)) return m;  // all -inf (or an explicit +inf) passes through
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// ln(1 + e^x) without overflow for large |x|.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// -ln sigmoid(x) = softplus(-x), the pairwise logistic loss term.
inline double neg_log_sigmoid(double x) { return softplus(-x); }

// Shannon entropy of a probability vector, 0 * ln 0 taken as 0.
inline double entropy(const double* p, std::size_t n) {
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
}

}  // namespace hdpo
