#include "hdpo/trainer.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hdpo/numeric.hpp"
#include "hdpo/rng.hpp"

namespace hdpo {

namespace {

constexpr double kWeightSumTol = 1e-12;

double grad_frobenius_norm(const Matrix& g) {
    double s = 0.0;
    for (double v : g.data) s += v * v;
    return std::sqrt(s);
}

// Locate the first pair whose loss term is non-finite, for diagnostics.
std::size_t offending_prompt(const TabularPolicy& policy, const TabularPolicy& ref,
                             const PreferenceDataset& data, const LossConfig& cfg) {
    const Matrix ref_lp = log_softmax_rows(ref.logits);
    double ab = cfg.alpha * cfg.beta;
    auto term = [&](std::size_t x, std::size_t w, std::size_t l) {
        double m = ab * (policy.logits.at(x, w) - policy.logits.at(x, l)) -
                   cfg.beta * (ref_lp.at(x, w) - ref_lp.at(x, l));
        return neg_log_sigmoid(m);
    };
    if (data.mode == PreferenceDataset::Mode::population) {
        for (std::size_t x = 0; x < data.n_prompts; ++x)
            for (std::size_t w = 0; w < data.n_completions; ++w)
                for (std::size_t l = 0; l < data.n_completions; ++l)
                    if (data.weights[(x * data.n_completions + w) * data.n_completions + l] > 0.0 &&
                        !std::isfinite(term(x, w, l)))
                        return x;
    } else {
        for (const auto& p : data.pairs)
            if (!std::isfinite(term(p.prompt, p.winner, p.loser))) return p.prompt;
    }
    return 0;
}

}  // namespace

void validate(const SyntheticTask& task) {
    if (task.n_prompts == 0 || task.n_completions < 2)
        throw std::invalid_argument("SyntheticTask: need >= 1 prompt and >= 2 completions");
    if (task.reward.values.rows != task.n_prompts || task.reward.values.cols != task.n_completions)
        throw std::invalid_argument("SyntheticTask: reward table shape mismatch");
    if (task.ref.logits.rows != task.n_prompts || task.ref.logits.cols != task.n_completions)
        throw std::invalid_argument("SyntheticTask: reference shape mismatch");
    validate(task.reward);
    validate(task.ref);
    if (task.prompt_weights.size() != task.n_prompts)
        throw std::invalid_argument("SyntheticTask: prompt weight count mismatch");
    double total = 0.0;
    for (double w : task.prompt_weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw std::invalid_argument("SyntheticTask: prompt weights must be >= 0");
        total += w;
    }
    if (std::abs(total - 1.0) > kWeightSumTol)
        throw std::invalid_argument("SyntheticTask: prompt weights must sum to 1 within 1e-12");
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
        throw std::invalid_argument("TrainConfig: learning_rate must be positive and finite");
    if (cfg.max_steps < 1) throw std::invalid_argument("TrainConfig: max_steps must be >= 1");
    if (!(cfg.grad_norm_tol > 0.0))
        throw std::invalid_argument("TrainConfig: grad_norm_tol must be positive");
}

SyntheticTask random_task(std::size_t n_prompts, std::size_t n_completions, std::uint64_t seed) {
    if (n_prompts == 0 || n_completions < 2)
        throw std::invalid_argument("random_task: need >= 1 prompt and >= 2 completions");
    Rng rng(seed);
    SyntheticTask task;
    task.n_prompts = n_prompts;
    task.n_completions = n_completions;
    task.reward.values = Matrix(n_prompts, n_completions);
    for (double& v : task.reward.values.data) v = rng.normal();
    task.ref.logits = Matrix(n_prompts, n_completions);
    for (double& v : task.ref.logits.data) v = rng.normal();
    task.prompt_weights.assign(n_prompts, 1.0 / static_cast<double>(n_prompts));
    return task;
}

SyntheticTask skewed_reference_task() {
    SyntheticTask task;
    task.n_prompts = 1;
    task.n_completions = 3;
    task.reward.values = Matrix(1, 3);
    task.reward.values.at(0, 0) = 0.0;
    task.reward.values.at(0, 1) = 0.007;
    task.reward.values.at(0, 2) = 0.0033;
    task.ref.logits = Matrix(1, 3);
    task.ref.logits.at(0, 0) = std::log(0.15);
    task.ref.logits.at(0, 1) = std::log(0.08);
    task.ref.logits.at(0, 2) = std::log(0.77);
    task.prompt_weights = {1.0};
    return task;
}

PreferenceDataset synthesize_dataset_population(const SyntheticTask& task) {
    validate(task);
    PreferenceDataset ds;
    ds.mode = PreferenceDataset::Mode::population;
    ds.n_prompts = task.n_prompts;
    ds.n_completions = task.n_completions;
    ds.weights.assign(task.n_prompts * task.n_completions * task.n_completions, 0.0);
    double total = 0.0;
    for (std::size_t x = 0; x < task.n_prompts; ++x)
        for (std::size_t w = 0; w < task.n_completions; ++w)
            for (std::size_t l = 0; l < task.n_completions; ++l) {
                if (w == l) continue;
                double wt = task.prompt_weights[x] * bt_prob(task.reward, x, w, l);
                ds.weights[(x * task.n_completions + w) * task.n_completions + l] = wt;
                total += wt;
            }
    for (double& wt : ds.weights) wt /= total;
    return ds;
}

PreferenceDataset synthesize_dataset_sampled(const SyntheticTask& task, std::size_t n_pairs,
                                             std::uint64_t seed) {
    validate(task);
    if (n_pairs == 0) throw std::invalid_argument("synthesize_dataset_sampled: n_pairs must be >= 1");
    Rng rng(seed);
    PreferenceDataset ds;
    ds.mode = PreferenceDataset::Mode::sampled;
    ds.n_prompts = task.n_prompts;
    ds.n_completions = task.n_completions;
    ds.pairs.reserve(n_pairs);
    const std::size_t c = task.n_completions;
    const std::size_t n_unordered = c * (c - 1) / 2;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        std::size_t x = rng.categorical(task.prompt_weights);
        // Uniform unordered pair: flat index over the upper triangle.
        std::size_t t = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n_unordered));
        if (t >= n_unordered) t = n_unordered - 1;
        std::size_t a = 0;
        std::size_t row_len = c - 1;
        while (t >= row_len) {
            t -= row_len;
            ++a;
            --row_len;
        }
        std::size_t b = a + 1 + t;
        double p_a_wins = bt_prob(task.reward, x, a, b);
        bool a_wins = rng.uniform() < p_a_wins;
        ds.pairs.push_back({x, a_wins ? a : b, a_wins ? b : a});
    }
    return ds;
}

TrainReport train(const SyntheticTask& task, const PreferenceDataset& data, const LossConfig& loss,
                  const TrainConfig& cfg) {
    validate(task);
    validate(cfg);
    TrainReport report;
    report.final_policy.logits = Matrix(task.n_prompts, task.n_completions, 0.0);
    report.loss_curve.reserve(256);

    Matrix grad;
    for (int step = 0;; ++step) {
        double value = hdpo_loss_with_grad(report.final_policy, task.ref, data, loss, grad);
        if (!std::isfinite(value)) {
            std::size_t x = offending_prompt(report.final_policy, task.ref, data, loss);
            std::ostringstream msg;
            msg << "train: non-finite loss at step " << step << " (prompt row " << x << ")";
            throw NumericError(msg.str());
        }
        report.loss_curve.push_back(value);
        double gnorm = grad_frobenius_norm(grad);
        if (gnorm < cfg.grad_norm_tol || step >= cfg.max_steps) {
            report.final_grad_norm = gnorm;
            report.steps_used = step;
            break;
        }
        for (std::size_t i = 0; i < grad.data.size(); ++i)
            report.final_policy.logits.data[i] -= cfg.learning_rate * grad.data[i];
    }
    return report;
}

std::vector<EntropySweepEntry> entropy_vs_alpha(const SyntheticTask& task,
                                                const std::vector<double>& alphas, double beta,
                                                const TrainConfig& cfg) {
    if (alphas.empty()) throw std::invalid_argument("entropy_vs_alpha: empty alpha list");
    validate(task);
    PreferenceDataset population = synthesize_dataset_population(task);
    std::vector<EntropySweepEntry> out(alphas.size());
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        out[i].alpha = alphas[i];
        try {
            TrainReport rep = train(task, population, {alphas[i], beta}, cfg);
            Matrix probs = softmax_rows(rep.final_policy.logits);
            double h = 0.0;
            for (std::size_t x = 0; x < probs.rows; ++x)
                h += task.prompt_weights[x] * entropy(probs.row(x), probs.cols);
            out[i].mean_entropy = h;
            out[i].ok = true;
        } catch (const std::exception& e) {
            out[i].ok = false;
            out[i].error = e.what();
        }
    }
    return out;
}

BetaScanResult beta_equivalence_scan(const SyntheticTask& task, double alpha, double beta,
                                     const std::vector<double>& beta_grid) {
    validate(task);
    if (alpha == 1.0)
        throw std::invalid_argument("beta_equivalence_scan: alpha must differ from 1");
    if (beta_grid.empty()) throw std::invalid_argument("beta_equivalence_scan: empty beta grid");
    for (double bp : beta_grid)
        if (!(bp > 0.0) || !std::isfinite(bp))
            throw std::invalid_argument("beta_equivalence_scan: beta' values must be positive");

    OraclePolicy target = optimal_policy(task.ref, task.reward, {alpha, beta});
    BetaScanResult out;
    out.per_beta.reserve(beta_grid.size());
    out.min_tv = std::numeric_limits<double>::infinity();
    for (double bp : beta_grid) {
        OraclePolicy plain = optimal_policy(task.ref, task.reward, {1.0, bp});
        double tv = tv_distance(target.policy, plain.policy);
        out.per_beta.push_back({bp, tv});
        // Strictly-less keeps the first beta' on ties, matching grid order.
        if (tv < out.min_tv) {
            out.min_tv = tv;
            out.argmin_beta = bp;
        }
    }
    return out;
}

}  // namespace hdpo
