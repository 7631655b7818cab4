#pragma once

// Diversity and correctness metrics over sets of generated token
// sequences, plus a tiny first order Markov language model that produces
// controlled samples at a chosen softmax temperature.

#include <cstdint>
#include <vector>

#include "hdpo/matrix.hpp"

namespace hdpo {

struct Generation {
    std::vector<int> tokens;  // non-empty
    double log_prob = 0.0;    // exact sequence log probability, <= 0
};

// Responses grouped by the prompt that produced them.
struct GenerationSet {
    std::vector<std::vector<Generation>> per_prompt;
};

// Correctness counts for one problem: n samples drawn, c of them correct.
struct SampleCount {
    int total = 0;
    int correct = 0;
};

struct CoverageRow {
    int k = 0;
    double mean_pass = 0.0;
};

// Probability that a uniformly random size-k subset of n samples contains
// at least one of the c correct ones: 1 - C(n-c, k) / C(n, k). Exact
// integer binomials are used while they fit a double (n <= 55); larger n
// falls back to the stable ratio product. Early exit to 1.0 when
// n - c < k.
double pass_at_k(int n, int c, int k);

// Mean pass_at_k over problems for each requested k. Throws
// std::invalid_argument naming the first problem whose sample count is
// smaller than some k.
std::vector<CoverageRow> coverage_report(const std::vector<SampleCount>& problems,
                                         const std::vector<int>& ks);

// Pooled mean over all responses of -log_prob / token_count.
double normalized_entropy(const GenerationSet& gs);

// Mean over responses of BLEU (orders 1..4, uniform weights, brevity
// penalty, add-one smoothing on zero higher-order counts) against all
// other responses for the same prompt. Prompts with fewer than two
// responses are skipped (indices reported through skipped_prompts when
// given); throws std::invalid_argument if every prompt is skipped.
double self_bleu(const GenerationSet& gs, std::vector<std::size_t>* skipped_prompts = nullptr);

// Distinct n-grams across all responses divided by total n-grams. Throws
// std::invalid_argument when no response is long enough to hold a single
// n-gram.
double distinct_n(const GenerationSet& gs, int n);

// First order Markov model over vocab_size symbols with explicit start
// and stop states. transition_logits is (vocab_size + 1) x (vocab_size + 1):
// row 0 is the start state, row 1 + s follows symbol s; columns 0..V-1
// emit a symbol, the last column stops. All entries finite.
struct ToyLM {
    int vocab_size = 0;
    Matrix transition_logits;
};

void validate(const ToyLM& lm);

// iid standard normal transition logits; deterministic in the seed.
ToyLM random_toy_lm(int vocab_size, std::uint64_t seed);

// Temperature sampling. The stop column is masked at the first step so
// sequences are never empty; log_prob is the exact sequence probability
// under that model (stop probability included when the sequence stops on
// its own, prefix probability when max_len cuts it off). Returns a single
// prompt group of n_samples responses.
GenerationSet sample_toy_lm(const ToyLM& lm, double temperature, int n_samples, int max_len,
                            std::uint64_t seed);

}  // namespace hdpo
