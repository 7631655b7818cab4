#pragma once

// Synthetic preference tasks and full batch gradient descent on tabular
// policies, with the closed form optimum as convergence oracle. Also the
// two sweep experiments built on top: mean policy entropy as a function
// of alpha, and the scan showing which (if any) plain-loss beta'
// reproduces an alpha-scaled optimum.

#include <cstdint>
#include <string>
#include <vector>

#include "hdpo/preference.hpp"

namespace hdpo {

struct SyntheticTask {
    std::size_t n_prompts = 0;
    std::size_t n_completions = 0;
    RewardTable reward;
    TabularPolicy ref;
    std::vector<double> prompt_weights;  // >= 0, sum 1
};

struct TrainConfig {
    double learning_rate = 0.5;   // > 0
    int max_steps = 20000;        // >= 1
    double grad_norm_tol = 1e-8;  // stop when the full gradient norm drops below
};

struct TrainReport {
    TabularPolicy final_policy;
    std::vector<double> loss_curve;  // loss at every visited policy, length steps_used + 1
    double final_grad_norm = 0.0;
    int steps_used = 0;
};

struct EntropySweepEntry {
    double alpha = 0.0;
    double mean_entropy = 0.0;  // prompt-weighted mean row entropy of the trained policy
    bool ok = false;
    std::string error;
};

struct BetaScanRow {
    double beta_prime = 0.0;
    double tv = 0.0;
};

struct BetaScanResult {
    double min_tv = 0.0;
    double argmin_beta = 0.0;
    std::vector<BetaScanRow> per_beta;
};

void validate(const SyntheticTask& task);
void validate(const TrainConfig& cfg);

// Rewards iid standard normal, reference = softmax of iid standard normal
// logits, uniform prompt weights. Draw order is rewards row-major then
// reference logits row-major, so a seed pins the task bytes.
SyntheticTask random_task(std::size_t n_prompts, std::size_t n_completions, std::uint64_t seed);

// One prompt, three completions, deliberately skewed reference
// (0.15, 0.08, 0.77) with rewards (0, 0.007, 0.0033). At alpha = 0.9,
// beta = 0.01 no single beta' of the unscaled loss reproduces the
// alpha-scaled optimum (min TV stays above 0.03); with a uniform
// reference the scan collapses exactly at beta' = alpha * beta.
SyntheticTask skewed_reference_task();

// Exact weights proportional to prompt_weight(x) * bt_prob(r, x, w, l)
// over all ordered pairs with w != l, normalised to sum 1.
PreferenceDataset synthesize_dataset_population(const SyntheticTask& task);

// n_pairs draws: prompt by prompt weight, unordered pair uniform, winner
// by Bradley-Terry. Same seed, same pair list.
PreferenceDataset synthesize_dataset_sampled(const SyntheticTask& task, std::size_t n_pairs,
                                             std::uint64_t seed);

// Full batch gradient descent from zero logits. Stops at grad_norm_tol or
// max_steps. Throws NumericError naming the step and prompt row if the
// loss goes non-finite.
TrainReport train(const SyntheticTask& task, const PreferenceDataset& data, const LossConfig& loss,
                  const TrainConfig& cfg);

// Train on the population dataset once per alpha and report the mean
// policy entropy. Per-alpha failures are recorded and the sweep continues.
std::vector<EntropySweepEntry> entropy_vs_alpha(const SyntheticTask& task,
                                                const std::vector<double>& alphas, double beta,
                                                const TrainConfig& cfg);

// TV between the (alpha, beta) optimum and the (1, beta') optimum for
// each beta' in the grid. Requires alpha != 1 (the scan is vacuous there).
BetaScanResult beta_equivalence_scan(const SyntheticTask& task, double alpha, double beta,
                                     const std::vector<double>& beta_grid);

}  // namespace hdpo
