#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "hdpo/distributions.hpp"
#include "hdpo/metrics.hpp"
#include "hdpo/rng.hpp"

using namespace hdpo;

namespace {

int popcount(unsigned m) {
    int c = 0;
    for (; m; m >>= 1) c += static_cast<int>(m & 1u);
    return c;
}

// Enumeration oracle: walk every k-subset of {0..n-1}, treat the first c
// indices as correct, and apply the same final expression the analytic
// path uses, so agreement must be exact.
double pass_at_k_enumerated(int n, int c, int k) {
    std::uint64_t total = 0;
    std::uint64_t miss = 0;
    for (unsigned m = 0; m < (1u << n); ++m) {
        if (popcount(m) != k) continue;
        ++total;
        if ((m & ((1u << c) - 1u)) == 0u) ++miss;
    }
    return 1.0 - static_cast<double>(miss) / static_cast<double>(total);
}

std::map<std::vector<int>, int> grams(const std::vector<int>& seq, int n) {
    std::map<std::vector<int>, int> out;
    for (std::size_t i = 0; i + n <= seq.size(); ++i)
        ++out[std::vector<int>(seq.begin() + i, seq.begin() + i + n)];
    return out;
}

// Straight from the definition: merge reference counts per candidate.
// Quadratic, used only to pin the linear implementation.
double naive_bleu(const std::vector<int>& cand, const std::vector<const std::vector<int>*>& refs) {
    double log_prec = 0.0;
    for (int n = 1; n <= 4; ++n) {
        auto cc = grams(cand, n);
        std::map<std::vector<int>, int> best;
        for (const auto* r : refs)
            for (const auto& [g, cnt] : grams(*r, n)) {
                auto it = best.find(g);
                if (it == best.end())
                    best.emplace(g, cnt);
                else if (cnt > it->second)
                    it->second = cnt;
            }
        long total = std::max<long>(0, static_cast<long>(cand.size()) - n + 1);
        long matches = 0;
        for (const auto& [g, cnt] : cc) {
            auto it = best.find(g);
            if (it != best.end()) matches += std::min<long>(cnt, it->second);
        }
        double p;
        if (matches == 0) {
            if (n == 1) return 0.0;
            p = 1.0 / static_cast<double>(total + 1);
        } else {
            p = static_cast<double>(matches) / static_cast<double>(total);
        }
        log_prec += std::log(p);
    }
    long clen = static_cast<long>(cand.size());
    long rlen = static_cast<long>(refs.front()->size());
    for (const auto* r : refs) {
        long len = static_cast<long>(r->size());
        if (std::labs(len - clen) < std::labs(rlen - clen) ||
            (std::labs(len - clen) == std::labs(rlen - clen) && len < rlen))
            rlen = len;
    }
    double bp = clen >= rlen ? 1.0 : std::exp(1.0 - static_cast<double>(rlen) / clen);
    return bp * std::exp(log_prec / 4.0);
}

double naive_self_bleu(const GenerationSet& gs) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& prompt : gs.per_prompt) {
        if (prompt.size() < 2) continue;
        for (std::size_t i = 0; i < prompt.size(); ++i) {
            std::vector<const std::vector<int>*> refs;
            for (std::size_t j = 0; j < prompt.size(); ++j)
                if (j != i) refs.push_back(&prompt[j].tokens);
            total += naive_bleu(prompt[i].tokens, refs);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

Generation gen(std::vector<int> tokens, double log_prob) {
    Generation g;
    g.tokens = std::move(tokens);
    g.log_prob = log_prob;
    return g;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("pass_at_k agrees exactly with subset enumeration") {
    for (int n = 1; n <= 8; ++n)
        for (int c = 0; c <= n; ++c)
            for (int k = 1; k <= n; ++k)
                CHECK(pass_at_k(n, c, k) == pass_at_k_enumerated(n, c, k));
    CHECK(pass_at_k(5, 2, 2) == 0.7);
    CHECK(pass_at_k(1, 1, 1) == 1.0);
    CHECK(pass_at_k(1, 0, 1) == 0.0);
    CHECK(pass_at_k(10, 10, 1) == 1.0);
}

TEST_CASE("pass_at_k is monotone in k and c") {
    for (int n : {30, 100}) {
        for (int c : {0, 1, n / 4, n / 2}) {
            double prev = 0.0;
            for (int k = 1; k <= n; ++k) {
                double v = pass_at_k(n, c, k);
                CHECK(v >= prev - 1e-15);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                prev = v;
            }
        }
        for (int k : {1, 5, n / 2}) {
            double prev = 0.0;
            for (int c = 0; c <= n; ++c) {
                double v = pass_at_k(n, c, k);
                CHECK(v >= prev - 1e-15);
                prev = v;
            }
        }
    }
}

TEST_CASE("large n path matches a long double reference") {
    for (int n : {56, 80, 200}) {
        for (int c : {1, 3, n / 5}) {
            for (int k : {1, 7, n / 3}) {
                if (n - c < k) continue;
                long double miss = 1.0L;
                for (int i = 0; i < k; ++i)
                    miss *= static_cast<long double>(n - c - i) / static_cast<long double>(n - i);
                double want = static_cast<double>(1.0L - miss);
                CHECK(pass_at_k(n, c, k) == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("pass_at_k rejects bad arguments") {
    CHECK_THROWS_AS(pass_at_k(0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(pass_at_k(5, -1, 1), std::invalid_argument);
    CHECK_THROWS_AS(pass_at_k(5, 6, 1), std::invalid_argument);
    CHECK_THROWS_AS(pass_at_k(5, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(pass_at_k(5, 2, 6), std::invalid_argument);
}

TEST_CASE("coverage_report means and errors") {
    std::vector<SampleCount> problems{{10, 0}, {10, 10}};
    auto rows = coverage_report(problems, {1, 10});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].k == 1);
    CHECK(rows[0].mean_pass == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rows[1].mean_pass == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(coverage_report(problems, {11}), std::invalid_argument);
    CHECK_THROWS_AS(coverage_report({}, {1}), std::invalid_argument);
}

TEST_CASE("normalized entropy pools per token surprisal") {
    GenerationSet gs;
    gs.per_prompt = {{gen({1, 2}, -2.0), gen({1, 2, 3}, -3.0)}};
    CHECK(normalized_entropy(gs) == doctest::Approx(1.0).epsilon(1e-15));
    GenerationSet bad;
    CHECK_THROWS_AS(normalized_entropy(bad), std::invalid_argument);
}

TEST_CASE("self bleu on an identical corpus is one") {
    GenerationSet gs;
    gs.per_prompt = {{gen({1, 2, 3, 4, 1}, -1.0), gen({1, 2, 3, 4, 1}, -1.0),
                      gen({1, 2, 3, 4, 1}, -1.0)}};
    CHECK(self_bleu(gs) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("self bleu matches the quadratic reference implementation") {
    Rng rng(314);
    for (int corpus = 0; corpus < 20; ++corpus) {
        GenerationSet gs;
        int n_prompts = 1 + static_cast<int>(rng.bits() % 3);
        for (int p = 0; p < n_prompts; ++p) {
            std::vector<Generation> prompt;
            int n_resp = 2 + static_cast<int>(rng.bits() % 5);
            for (int i = 0; i < n_resp; ++i) {
                int len = 1 + static_cast<int>(rng.bits() % 12);
                std::vector<int> toks;
                for (int t = 0; t < len; ++t) toks.push_back(static_cast<int>(rng.bits() % 4));
                prompt.push_back(gen(std::move(toks), -1.0));
            }
            gs.per_prompt.push_back(std::move(prompt));
        }
        CHECK(self_bleu(gs) == doctest::Approx(naive_self_bleu(gs)).epsilon(1e-12));
    }
}

TEST_CASE("self bleu skips prompts with fewer than two responses") {
    GenerationSet gs;
    gs.per_prompt = {{gen({1, 2}, -1.0)},
                     {gen({1, 2, 3}, -1.0), gen({1, 2, 3}, -1.0)},
                     {}};
    std::vector<std::size_t> skipped;
    double v = self_bleu(gs, &skipped);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    REQUIRE(skipped.size() == 2);
    CHECK(skipped[0] == 0);
    CHECK(skipped[1] == 2);

    GenerationSet lonely;
    lonely.per_prompt = {{gen({1}, -1.0)}};
    CHECK_THROWS_AS(self_bleu(lonely), std::invalid_argument);
}

TEST_CASE("distinct n") {
    GenerationSet gs;
    gs.per_prompt = {{gen({1, 2, 1, 2}, -1.0), gen({2, 3}, -1.0)}};
    CHECK(distinct_n(gs, 1) == doctest::Approx(0.5).epsilon(1e-15));   // 3 of 6
    CHECK(distinct_n(gs, 2) == doctest::Approx(0.75).epsilon(1e-15));  // 3 of 4
    CHECK_THROWS_AS(distinct_n(gs, 5), std::invalid_argument);
    CHECK_THROWS_AS(distinct_n(gs, 0), std::invalid_argument);
}

TEST_CASE("toy lm sampling") {
    ToyLM lm = random_toy_lm(4, 99);
    CHECK_NOTHROW(validate(lm));
    GenerationSet a = sample_toy_lm(lm, 0.8, 200, 15, 7);
    GenerationSet b = sample_toy_lm(lm, 0.8, 200, 15, 7);
    REQUIRE(a.per_prompt.size() == 1);
    REQUIRE(a.per_prompt[0].size() == 200);

    for (std::size_t i = 0; i < 200; ++i) {
        const Generation& g = a.per_prompt[0][i];
        const Generation& h = b.per_prompt[0][i];
        CHECK(g.tokens == h.tokens);
        CHECK(g.log_prob == h.log_prob);
        REQUIRE(!g.tokens.empty());
        CHECK(g.tokens.size() <= 15);
        CHECK(g.log_prob <= 0.0);
        for (int t : g.tokens) {
            CHECK(t >= 0);
            CHECK(t < 4);
        }

        // Replay the chain: the recomputed sequence probability must match
        // the sampler bit for bit since both go through apply_temperature.
        double lp = 0.0;
        std::size_t state = 0;
        for (std::size_t t = 0; t < g.tokens.size(); ++t) {
            const double* row = lm.transition_logits.row(state);
            std::vector<double> logits(row, row + 5);
            if (t == 0) logits.pop_back();
            std::vector<double> probs = apply_temperature(logits, 0.8);
            lp += std::log(probs[static_cast<std::size_t>(g.tokens[t])]);
            state = static_cast<std::size_t>(g.tokens[t]) + 1;
        }
        if (g.tokens.size() < 15) {  // stopped on its own, add the stop mass
            const double* row = lm.transition_logits.row(state);
            std::vector<double> logits(row, row + 5);
            std::vector<double> probs = apply_temperature(logits, 0.8);
            lp += std::log(probs[4]);
        }
        CHECK(g.log_prob == lp);
    }

    SUBCASE("entropy rises with temperature") {
        double cold = normalized_entropy(sample_toy_lm(lm, 0.5, 2000, 20, 11));
        double hot = normalized_entropy(sample_toy_lm(lm, 1.0, 2000, 20, 11));
        CHECK(cold < hot);
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(sample_toy_lm(lm, 0.0, 10, 10, 1), std::invalid_argument);
        CHECK_THROWS_AS(sample_toy_lm(lm, 1.0, 0, 10, 1), std::invalid_argument);
        CHECK_THROWS_AS(sample_toy_lm(lm, 1.0, 10, 0, 1), std::invalid_argument);
        CHECK_THROWS_AS(random_toy_lm(1, 5), std::invalid_argument);
    }
}

}  // TEST_SUITE
