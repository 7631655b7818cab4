#include "hdpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>

#include "hdpo/distributions.hpp"
#include "hdpo/rng.hpp"

namespace hdpo {

namespace {

// Exact binomial coefficient in uint64; every intermediate division is
// exact, and for n <= 55 the result also fits a double exactly (< 2^53).
std::uint64_t binomial_u64(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    }
    return c;
}

void validate_generation_set(const GenerationSet& gs) {
    bool any = false;
    for (const auto& prompt : gs.per_prompt)
        for (const auto& g : prompt) {
            any = true;
            if (g.tokens.empty())
                throw std::invalid_argument("GenerationSet: sequences must be non-empty");
            if (!(g.log_prob <= 0.0))
                throw std::invalid_argument("GenerationSet: log_prob must be <= 0");
        }
    if (!any) throw std::invalid_argument("GenerationSet: no responses");
}

using Ngram = std::vector<int>;

std::map<Ngram, int> ngram_counts(const std::vector<int>& tokens, int n) {
    std::map<Ngram, int> counts;
    if (static_cast<int>(tokens.size()) >= n)
        for (std::size_t i = 0; i + n <= tokens.size(); ++i)
            ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

// Per-gram top two counts across a prompt's responses, with the owner of
// the top count. The clipped reference count for candidate i is then
// top1 if another response owns it, else top2, which makes self-BLEU
// linear in the number of responses instead of quadratic.
struct ClipEntry {
    int top1 = 0;
    std::size_t top1_owner = 0;
    int top2 = 0;
};

struct PromptClipTables {
    std::map<Ngram, ClipEntry> by_order[4];
    std::vector<long> sorted_lengths;
};

PromptClipTables build_clip_tables(const std::vector<Generation>& prompt) {
    PromptClipTables tables;
    for (int n = 1; n <= 4; ++n)
        for (std::size_t j = 0; j < prompt.size(); ++j)
            for (const auto& [gram, cnt] : ngram_counts(prompt[j].tokens, n)) {
                ClipEntry& e = tables.by_order[n - 1][gram];
                if (cnt > e.top1) {
                    e.top2 = e.top1;
                    e.top1 = cnt;
                    e.top1_owner = j;
                } else if (cnt > e.top2) {
                    e.top2 = cnt;
                }
            }
    tables.sorted_lengths.reserve(prompt.size());
    for (const auto& g : prompt) tables.sorted_lengths.push_back(static_cast<long>(g.tokens.size()));
    std::sort(tables.sorted_lengths.begin(), tables.sorted_lengths.end());
    return tables;
}

// Closest value to clen among the sorted lengths minus one instance of
// own_len (the candidate itself); ties go to the shorter length.
long closest_other_length(const std::vector<long>& sorted, long own_len) {
    long best = -1;
    bool own_skipped = false;
    for (long len : sorted) {
        if (!own_skipped && len == own_len) {
            own_skipped = true;  // drop exactly one instance: the candidate
            continue;
        }
        if (best < 0) {
            best = len;
            continue;
        }
        long d = std::labs(len - own_len);
        long dbest = std::labs(best - own_len);
        if (d < dbest || (d == dbest && len < best)) best = len;
    }
    return best;
}

// BLEU of response i against all other responses of its prompt: orders
// 1..4 with uniform weights, clipped precision, add-one smoothing when a
// higher order has zero matches, brevity penalty against the closest
// other response's length.
double self_bleu_one(const std::vector<Generation>& prompt, std::size_t i,
                     const PromptClipTables& tables) {
    const std::vector<int>& candidate = prompt[i].tokens;
    double log_prec_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        long total = std::max<long>(0, static_cast<long>(candidate.size()) - n + 1);
        long matches = 0;
        for (const auto& [gram, cnt] : ngram_counts(candidate, n)) {
            auto it = tables.by_order[n - 1].find(gram);
            if (it == tables.by_order[n - 1].end()) continue;
            int clip = it->second.top1_owner == i ? it->second.top2 : it->second.top1;
            matches += std::min(cnt, clip);
        }
        double p;
        if (matches == 0) {
            if (n == 1) return 0.0;  // no unigram overlap, BLEU is 0 outright
            p = 1.0 / static_cast<double>(total + 1);
        } else {
            p = static_cast<double>(matches) / static_cast<double>(total);
        }
        log_prec_sum += std::log(p);
    }
    long clen = static_cast<long>(candidate.size());
    long rlen = closest_other_length(tables.sorted_lengths, clen);
    double bp = clen >= rlen ? 1.0 : std::exp(1.0 - static_cast<double>(rlen) / clen);
    return bp * std::exp(log_prec_sum / 4.0);
}

}  // namespace

double pass_at_k(int n, int c, int k) {
    if (n < 1) throw std::invalid_argument("pass_at_k: n must be >= 1");
    if (c < 0 || c > n) throw std::invalid_argument("pass_at_k: need 0 <= c <= n");
    if (k < 1 || k > n) throw std::invalid_argument("pass_at_k: need 1 <= k <= n");
    if (n - c < k) return 1.0;  // every subset must contain a correct sample
    if (n <= 55) {
        double miss = static_cast<double>(binomial_u64(n - c, k)) /
                      static_cast<double>(binomial_u64(n, k));
        return 1.0 - miss;
    }
    double prod = 1.0;
    for (int i = 0; i < k; ++i)
        prod *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - prod;
}

std::vector<CoverageRow> coverage_report(const std::vector<SampleCount>& problems,
                                         const std::vector<int>& ks) {
    if (problems.empty()) throw std::invalid_argument("coverage_report: no problems");
    if (ks.empty()) throw std::invalid_argument("coverage_report: no k values");
    for (std::size_t i = 0; i < problems.size(); ++i) {
        if (problems[i].total < 1 || problems[i].correct < 0 ||
            problems[i].correct > problems[i].total)
            throw std::invalid_argument("coverage_report: bad sample counts at problem " +
                                        std::to_string(i));
        for (int k : ks)
            if (k < 1 || k > problems[i].total)
                throw std::invalid_argument("coverage_report: k=" + std::to_string(k) +
                                            " exceeds sample count at problem " +
                                            std::to_string(i));
    }
    std::vector<CoverageRow> rows;
    rows.reserve(ks.size());
    for (int k : ks) {
        double mean = 0.0;
        for (const auto& p : problems) mean += pass_at_k(p.total, p.correct, k);
        rows.push_back({k, mean / static_cast<double>(problems.size())});
    }
    return rows;
}

double normalized_entropy(const GenerationSet& gs) {
    validate_generation_set(gs);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& prompt : gs.per_prompt)
        for (const auto& g : prompt) {
            total += -g.log_prob / static_cast<double>(g.tokens.size());
            ++count;
        }
    return total / static_cast<double>(count);
}

double self_bleu(const GenerationSet& gs, std::vector<std::size_t>* skipped_prompts) {
    validate_generation_set(gs);
    if (skipped_prompts) skipped_prompts->clear();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t pi = 0; pi < gs.per_prompt.size(); ++pi) {
        const auto& prompt = gs.per_prompt[pi];
        if (prompt.size() < 2) {
            if (skipped_prompts) skipped_prompts->push_back(pi);
            continue;
        }
        PromptClipTables tables = build_clip_tables(prompt);
        for (std::size_t i = 0; i < prompt.size(); ++i) {
            total += self_bleu_one(prompt, i, tables);
            ++count;
        }
    }
    if (count == 0)
        throw std::invalid_argument(
            "self_bleu: every prompt has fewer than two responses, nothing to compare");
    return total / static_cast<double>(count);
}

double distinct_n(const GenerationSet& gs, int n) {
    if (n < 1) throw std::invalid_argument("distinct_n: n must be >= 1");
    validate_generation_set(gs);
    std::map<Ngram, int> seen;
    long total = 0;
    for (const auto& prompt : gs.per_prompt)
        for (const auto& g : prompt)
            for (const auto& [gram, cnt] : ngram_counts(g.tokens, n)) {
                seen[gram] += cnt;
                total += cnt;
            }
    if (total == 0)
        throw std::invalid_argument("distinct_n: no response holds a single n-gram of order " +
                                    std::to_string(n));
    return static_cast<double>(seen.size()) / static_cast<double>(total);
}

void validate(const ToyLM& lm) {
    if (lm.vocab_size < 2) throw std::invalid_argument("ToyLM: vocab_size must be >= 2");
    std::size_t dim = static_cast<std::size_t>(lm.vocab_size) + 1;
    if (lm.transition_logits.rows != dim || lm.transition_logits.cols != dim)
        throw std::invalid_argument("ToyLM: transition table must be (V+1) x (V+1)");
    if (!all_finite(lm.transition_logits))
        throw std::invalid_argument("ToyLM: transition logits must be finite");
}

ToyLM random_toy_lm(int vocab_size, std::uint64_t seed) {
    if (vocab_size < 2) throw std::invalid_argument("random_toy_lm: vocab_size must be >= 2");
    Rng rng(seed);
    ToyLM lm;
    lm.vocab_size = vocab_size;
    std::size_t dim = static_cast<std::size_t>(vocab_size) + 1;
    lm.transition_logits = Matrix(dim, dim);
    for (double& v : lm.transition_logits.data) v = rng.normal();
    return lm;
}

GenerationSet sample_toy_lm(const ToyLM& lm, double temperature, int n_samples, int max_len,
                            std::uint64_t seed) {
    validate(lm);
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("sample_toy_lm: temperature must be positive and finite");
    if (n_samples < 1) throw std::invalid_argument("sample_toy_lm: n_samples must be >= 1");
    if (max_len < 1) throw std::invalid_argument("sample_toy_lm: max_len must be >= 1");

    const int v = lm.vocab_size;
    const std::size_t stop = static_cast<std::size_t>(v);
    Rng rng(seed);
    GenerationSet out;
    out.per_prompt.resize(1);
    out.per_prompt[0].reserve(n_samples);

    for (int s = 0; s < n_samples; ++s) {
        Generation g;
        std::size_t state = 0;  // start row
        for (int t = 0; t < max_len; ++t) {
            const double* row = lm.transition_logits.row(state);
            std::vector<double> logits(row, row + v + 1);
            if (t == 0) logits.pop_back();  // mask stop so sequences are never empty
            std::vector<double> probs = apply_temperature(logits, temperature);
            std::size_t pick = rng.categorical(probs);
            g.log_prob += std::log(probs[pick]);
            if (pick == stop) break;
            g.tokens.push_back(static_cast<int>(pick));
            state = pick + 1;
        }
        out.per_prompt[0].push_back(std::move(g));
    }
    return out;
}

}  // namespace hdpo
