#include "hdpo/preference.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hdpo/distributions.hpp"
#include "hdpo/numeric.hpp"

namespace hdpo {

namespace {

constexpr double kWeightSumTol = 1e-12;

void check_same_shape(const TabularPolicy& policy, const TabularPolicy& ref) {
    if (!same_shape(policy.logits, ref.logits))
        throw std::invalid_argument("policy and reference tables must have the same shape");
}

void check_dataset_fits(const PreferenceDataset& ds, const Matrix& logits) {
    if (ds.mode == PreferenceDataset::Mode::population) {
        if (ds.n_prompts != logits.rows || ds.n_completions != logits.cols)
            throw std::invalid_argument("population dataset dimensions do not match the policy");
    } else {
        for (const auto& p : ds.pairs)
            if (p.prompt >= logits.rows || p.winner >= logits.cols || p.loser >= logits.cols)
                throw std::invalid_argument("sampled pair indexes outside the policy table");
    }
}

// Iterate (prompt, winner, loser, weight) in fixed index order. Sampled
// pairs are first aggregated into a dense count table so repeated pairs
// cost one term, which keeps big sampled datasets cheap inside training
// loops and pins the summation order regardless of list order.
template <class Fn>
void for_each_weighted_pair(const PreferenceDataset& ds, std::size_t rows, std::size_t cols,
                            Fn&& fn) {
    if (ds.mode == PreferenceDataset::Mode::population) {
        for (std::size_t x = 0; x < ds.n_prompts; ++x)
            for (std::size_t w = 0; w < ds.n_completions; ++w)
                for (std::size_t l = 0; l < ds.n_completions; ++l) {
                    double wt = ds.weights[(x * ds.n_completions + w) * ds.n_completions + l];
                    if (wt > 0.0) fn(x, w, l, wt);
                }
        return;
    }
    std::vector<double> counts(rows * cols * cols, 0.0);
    for (const auto& p : ds.pairs) counts[(p.prompt * cols + p.winner) * cols + p.loser] += 1.0;
    double inv_n = 1.0 / static_cast<double>(ds.pairs.size());
    for (std::size_t x = 0; x < rows; ++x)
        for (std::size_t w = 0; w < cols; ++w)
            for (std::size_t l = 0; l < cols; ++l) {
                double c = counts[(x * cols + w) * cols + l];
                if (c > 0.0) fn(x, w, l, c * inv_n);
            }
}

double accumulate_loss(const TabularPolicy& policy, const TabularPolicy& ref,
                       const PreferenceDataset& data, const LossConfig& cfg, Matrix* grad) {
    validate(policy);
    validate(ref);
    validate(cfg);
    validate(data);
    check_same_shape(policy, ref);
    check_dataset_fits(data, policy.logits);

    const Matrix ref_lp = log_softmax_rows(ref.logits);
    const double ab = cfg.alpha * cfg.beta;
    if (grad) *grad = Matrix(policy.logits.rows, policy.logits.cols, 0.0);

    double loss = 0.0;
    for_each_weighted_pair(data, policy.logits.rows, policy.logits.cols,
                           [&](std::size_t x, std::size_t w, std::size_t l, double wt) {
                               double rw = ref_lp.at(x, w);
                               double rl = ref_lp.at(x, l);
                               if (!std::isfinite(rw) || !std::isfinite(rl))
                                   throw SupportError(
                                       "hdpo_loss: reference probability underflows to zero at "
                                       "prompt " +
                                       std::to_string(x));
                               double m = ab * (policy.logits.at(x, w) - policy.logits.at(x, l)) -
                                          cfg.beta * (rw - rl);
                               loss += wt * neg_log_sigmoid(m);
                               if (grad) {
                                   double s = wt * ab * sigmoid(-m);
                                   grad->at(x, w) -= s;
                                   grad->at(x, l) += s;
                               }
                           });
    return loss;
}

}  // namespace

void validate(const TabularPolicy& p) {
    if (p.logits.rows == 0 || p.logits.cols == 0)
        throw std::invalid_argument("TabularPolicy: table must be non-empty");
    if (!all_finite(p.logits))
        throw std::invalid_argument("TabularPolicy: logits must be finite");
}

void validate(const RewardTable& r) {
    if (r.values.rows == 0 || r.values.cols == 0)
        throw std::invalid_argument("RewardTable: table must be non-empty");
    if (!all_finite(r.values))
        throw std::invalid_argument("RewardTable: rewards must be finite");
}

void validate(const LossConfig& cfg) {
    if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha))
        throw std::invalid_argument("LossConfig: alpha must be positive and finite");
    if (!(cfg.beta > 0.0))
        throw std::invalid_argument("LossConfig: beta must be positive");
}

void validate(const PreferenceDataset& ds) {
    if (ds.mode == PreferenceDataset::Mode::sampled) {
        if (ds.pairs.empty())
            throw std::invalid_argument("PreferenceDataset: sampled mode needs at least one pair");
        for (const auto& p : ds.pairs)
            if (p.winner == p.loser)
                throw std::invalid_argument("PreferenceDataset: winner and loser must differ");
        return;
    }
    if (ds.n_prompts == 0 || ds.n_completions < 2)
        throw std::invalid_argument("PreferenceDataset: population mode needs >= 2 completions");
    if (ds.weights.size() != ds.n_prompts * ds.n_completions * ds.n_completions)
        throw std::invalid_argument("PreferenceDataset: weight table size mismatch");
    double total = 0.0;
    for (std::size_t x = 0; x < ds.n_prompts; ++x)
        for (std::size_t w = 0; w < ds.n_completions; ++w)
            for (std::size_t l = 0; l < ds.n_completions; ++l) {
                double wt = ds.weights[(x * ds.n_completions + w) * ds.n_completions + l];
                if (!(wt >= 0.0) || !std::isfinite(wt))
                    throw std::invalid_argument("PreferenceDataset: weights must be >= 0");
                if (w == l && wt != 0.0)
                    throw std::invalid_argument("PreferenceDataset: diagonal weights must be zero");
                total += wt;
            }
    if (std::abs(total - 1.0) > kWeightSumTol)
        throw std::invalid_argument("PreferenceDataset: weights must sum to 1 within 1e-12");
}

Matrix log_softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        double lse = logsumexp(logits.row(r), logits.cols);
        for (std::size_t c = 0; c < logits.cols; ++c)
            out.at(r, c) = logits.at(r, c) - lse;
    }
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r)
        softmax_stable(logits.row(r), logits.cols, out.row(r));
    return out;
}

double tv_distance(const TabularPolicy& a, const TabularPolicy& b) {
    validate(a);
    validate(b);
    if (!same_shape(a.logits, b.logits))
        throw std::invalid_argument("tv_distance: shape mismatch");
    Matrix pa = softmax_rows(a.logits);
    Matrix pb = softmax_rows(b.logits);
    double worst = 0.0;
    for (std::size_t r = 0; r < pa.rows; ++r) {
        double l1 = 0.0;
        for (std::size_t c = 0; c < pa.cols; ++c) l1 += std::abs(pa.at(r, c) - pb.at(r, c));
        worst = std::max(worst, 0.5 * l1);
    }
    return worst;
}

double bt_prob(const RewardTable& r, std::size_t x, std::size_t y1, std::size_t y2) {
    validate(r);
    if (x >= r.values.rows || y1 >= r.values.cols || y2 >= r.values.cols)
        throw std::invalid_argument("bt_prob: index outside the reward table");
    return sigmoid(r.values.at(x, y1) - r.values.at(x, y2));
}

double implicit_reward_margin(const TabularPolicy& policy, const TabularPolicy& ref,
                              const PreferencePair& pair, const LossConfig& cfg) {
    validate(policy);
    validate(ref);
    validate(cfg);
    check_same_shape(policy, ref);
    if (pair.prompt >= policy.logits.rows || pair.winner >= policy.logits.cols ||
        pair.loser >= policy.logits.cols)
        throw std::invalid_argument("implicit_reward_margin: pair indexes outside the table");
    if (pair.winner == pair.loser)
        throw std::invalid_argument("implicit_reward_margin: winner and loser must differ");

    const Matrix ref_lp = log_softmax_rows(ref.logits);
    double rw = ref_lp.at(pair.prompt, pair.winner);
    double rl = ref_lp.at(pair.prompt, pair.loser);
    if (!std::isfinite(rw) || !std::isfinite(rl))
        throw SupportError("implicit_reward_margin: reference probability underflows to zero at "
                           "prompt " +
                           std::to_string(pair.prompt));
    return cfg.alpha * cfg.beta *
               (policy.logits.at(pair.prompt, pair.winner) -
                policy.logits.at(pair.prompt, pair.loser)) -
           cfg.beta * (rw - rl);
}

double hdpo_loss(const TabularPolicy& policy, const TabularPolicy& ref,
                 const PreferenceDataset& data, const LossConfig& cfg) {
    return accumulate_loss(policy, ref, data, cfg, nullptr);
}

Matrix hdpo_loss_grad(const TabularPolicy& policy, const TabularPolicy& ref,
                      const PreferenceDataset& data, const LossConfig& cfg) {
    Matrix grad;
    accumulate_loss(policy, ref, data, cfg, &grad);
    return grad;
}

double hdpo_loss_with_grad(const TabularPolicy& policy, const TabularPolicy& ref,
                           const PreferenceDataset& data, const LossConfig& cfg, Matrix& grad) {
    return accumulate_loss(policy, ref, data, cfg, &grad);
}

OraclePolicy optimal_policy(const TabularPolicy& ref, const RewardTable& r,
                            const LossConfig& cfg) {
    validate(ref);
    validate(r);
    validate(cfg);
    if (!same_shape(ref.logits, r.values))
        throw std::invalid_argument("optimal_policy: reference and reward shapes differ");

    const Matrix ref_lp = log_softmax_rows(ref.logits);
    OraclePolicy out;
    out.policy.logits = Matrix(ref_lp.rows, ref_lp.cols);
    out.log_z.resize(ref_lp.rows);
    std::vector<double> scaled(ref_lp.cols);
    for (std::size_t x = 0; x < ref_lp.rows; ++x) {
        for (std::size_t y = 0; y < ref_lp.cols; ++y) {
            // Same per-entry expression apply_temperature uses: build the
            // score, then divide by alpha.
            double score = ref_lp.at(x, y) + r.values.at(x, y) / cfg.beta;
            scaled[y] = score / cfg.alpha;
            out.policy.logits.at(x, y) = scaled[y];
        }
        out.log_z[x] = logsumexp(scaled.data(), scaled.size());
    }
    return out;
}

double hdpo_objective(const TabularPolicy& policy, const TabularPolicy& ref, const RewardTable& r,
                      const LossConfig& cfg, const std::vector<double>& prompt_weights) {
    validate(policy);
    validate(ref);
    validate(r);
    validate(cfg);
    check_same_shape(policy, ref);
    if (!same_shape(policy.logits, r.values))
        throw std::invalid_argument("hdpo_objective: reward shape mismatch");
    if (prompt_weights.size() != policy.logits.rows)
        throw std::invalid_argument("hdpo_objective: prompt weight count mismatch");

    const Matrix probs = softmax_rows(policy.logits);
    const Matrix ref_lp = log_softmax_rows(ref.logits);
    double obj = 0.0;
    for (std::size_t x = 0; x < probs.rows; ++x) {
        if (!(prompt_weights[x] >= 0.0))
            throw std::invalid_argument("hdpo_objective: prompt weights must be >= 0");
        double expected_r = 0.0;
        double h = entropy(probs.row(x), probs.cols);
        double ce = 0.0;
        for (std::size_t y = 0; y < probs.cols; ++y) {
            double p = probs.at(x, y);
            if (p <= 0.0) continue;
            expected_r += p * r.values.at(x, y);
            if (!std::isfinite(ref_lp.at(x, y)))
                throw SupportError("hdpo_objective: reference probability underflows to zero at "
                                   "prompt " +
                                   std::to_string(x));
            ce -= p * ref_lp.at(x, y);
        }
        obj += prompt_weights[x] * (expected_r + cfg.alpha * cfg.beta * h - cfg.beta * ce);
    }
    return obj;
}

}  // namespace hdpo
