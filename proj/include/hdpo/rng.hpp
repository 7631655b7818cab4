#pragma once

// Deterministic random source. std:: distribution objects are
// implementation defined, so uniforms, normals and categorical draws are
// generated here from raw mt19937_64 output (which the standard does pin
// bit for bit). Same seed means same stream on every platform.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "hdpo/numeric.hpp"

namespace hdpo {

inline std::uint64_t splitmix64(std::uint64_t state) {
    std::uint64_t z = state + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed for sub-run `index` of a root seed. Pure function of (root, index),
// so parallel execution order cannot change any stream.
inline std::uint64_t child_seed(std::uint64_t root, std::uint64_t index) {
    return splitmix64(root + 0x9e3779b97f4a7c15ULL * (index + 1));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the second variate is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double rad = std::sqrt(-2.0 * std::log(u1));
        double ang = 2.0 * kPi * u2;
        spare_ = rad * std::sin(ang);
        have_spare_ = true;
        return rad * std::cos(ang);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Index draw by inverse cdf; probs must sum to ~1.
    std::size_t categorical(const std::vector<double>& probs) {
        if (probs.empty()) throw std::invalid_argument("categorical: empty probability vector");
        double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return probs.size() - 1;  // guard against rounding in the partial sums
    }

    // Marsaglia-Tsang; shape < 1 boosted via the power trick.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            double u;
            do {
                u = uniform();
            } while (u <= 0.0);
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / (3.0 * std::sqrt(d));
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u;
            do {
                u = uniform();
            } while (u <= 0.0);
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    std::vector<double> dirichlet(const std::vector<double>& concentration) {
        std::vector<double> out(concentration.size());
        double total = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = gamma(concentration[i]);
            total += out[i];
        }
        for (double& v : out) v /= total;
        return out;
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hdpo
