#pragma once

// Tabular preference learning core. Policies are row-softmax tables over
// (prompt, completion). The pairwise logistic loss scales the policy log
// ratio by alpha * beta and the reference log ratio by beta:
//
//   loss = E[ -ln sigmoid(alpha beta (ln pi(w) - ln pi(l))
//                         - beta (ln ref(w) - ln ref(l))) ]
//
// alpha = 1 is the plain direct preference loss. The matching closed form
// optimum is pi*(y|x) proportional to ref(y|x)^(1/alpha) exp(r(x,y)/(alpha beta)),
// i.e. a temperature-alpha softmax of (ln ref + r / beta).

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hdpo/errors.hpp"
#include "hdpo/matrix.hpp"

namespace hdpo {

struct TabularPolicy {
    Matrix logits;  // rows = prompts, cols = completions, all finite
};

struct RewardTable {
    Matrix values;  // same shape as the policies, all finite
};

struct LossConfig {
    double alpha = 1.0;  // > 0
    double beta = 0.01;  // > 0
};

struct PreferencePair {
    std::size_t prompt = 0;
    std::size_t winner = 0;
    std::size_t loser = 0;  // != winner
};

// Either an explicit list of sampled pairs or exact population weights
// over ordered pairs. Population weights are stored dense with index
// (prompt * C + winner) * C + loser; they are >= 0, sum to 1, and the
// diagonal (winner == loser) is zero.
struct PreferenceDataset {
    enum class Mode { sampled, population };
    Mode mode = Mode::sampled;
    std::size_t n_prompts = 0;
    std::size_t n_completions = 0;
    std::vector<PreferencePair> pairs;  // sampled mode
    std::vector<double> weights;        // population mode
};

struct OraclePolicy {
    TabularPolicy policy;
    std::vector<double> log_z;  // per-prompt log partition of ref^(1/alpha) exp(r/(alpha beta))
};

void validate(const TabularPolicy& p);
void validate(const RewardTable& r);
void validate(const LossConfig& cfg);
void validate(const PreferenceDataset& ds);

Matrix log_softmax_rows(const Matrix& logits);
Matrix softmax_rows(const Matrix& logits);

// Max over prompts of the per-row total variation distance between the
// two policies' softmax rows.
double tv_distance(const TabularPolicy& a, const TabularPolicy& b);

// Bradley-Terry win probability sigmoid(r(x, y1) - r(x, y2)).
double bt_prob(const RewardTable& r, std::size_t x, std::size_t y1, std::size_t y2);

// alpha beta (ln pi(w|x) - ln pi(l|x)) - beta (ln ref(w|x) - ln ref(l|x)).
// The row normalisers cancel inside each difference. Throws SupportError
// if the reference probability underflows to zero at either completion.
double implicit_reward_margin(const TabularPolicy& policy, const TabularPolicy& ref,
                              const PreferencePair& pair, const LossConfig& cfg);

// Weighted mean of -ln sigmoid(margin): pair-count mean in sampled mode,
// weight-sum in population mode. Accumulation runs in fixed index order.
double hdpo_loss(const TabularPolicy& policy, const TabularPolicy& ref,
                 const PreferenceDataset& data, const LossConfig& cfg);

// Analytic gradient of hdpo_loss over the policy logits. Per pair the
// softmax terms cancel between winner and loser, leaving
//   -sigmoid(-margin) * alpha * beta * (e_winner - e_loser)
// on the pair's prompt row.
Matrix hdpo_loss_grad(const TabularPolicy& policy, const TabularPolicy& ref,
                      const PreferenceDataset& data, const LossConfig& cfg);

// Loss and gradient fused in one pass (the training loop uses this).
double hdpo_loss_with_grad(const TabularPolicy& policy, const TabularPolicy& ref,
                           const PreferenceDataset& data, const LossConfig& cfg, Matrix& grad);

// Closed form optimum: rows are temperature-alpha softmaxes of
// (ln ref + r / beta); log_z holds the per-prompt log partition.
OraclePolicy optimal_policy(const TabularPolicy& ref, const RewardTable& r,
                            const LossConfig& cfg);

// Prompt-weighted E[r] + alpha beta H(pi) - beta H(pi, ref). Maximised by
// optimal_policy. Throws SupportError on reference underflow where the
// policy has mass.
double hdpo_objective(const TabularPolicy& policy, const TabularPolicy& ref, const RewardTable& r,
                      const LossConfig& cfg, const std::vector<double>& prompt_weights);

}  // namespace hdpo
