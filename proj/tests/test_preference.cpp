#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "hdpo/distributions.hpp"
#include "hdpo/errors.hpp"
#include "hdpo/numeric.hpp"
#include "hdpo/preference.hpp"
#include "hdpo/rng.hpp"
#include "hdpo/trainer.hpp"

using namespace hdpo;

namespace {

TabularPolicy random_policy(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    TabularPolicy p{Matrix(rows, cols)};
    Rng rng(seed);
    for (double& v : p.logits.data) v = rng.normal();
    return p;
}

// Long double re-derivation of the loss straight from the definition,
// independent of the accumulation order tricks in the library.
long double loss_by_hand(const TabularPolicy& policy, const TabularPolicy& ref,
                         const PreferenceDataset& data, const LossConfig& cfg) {
    auto lp = [](const Matrix& z, std::size_t x, std::size_t y) {
        long double lse = 0.0L;
        long double mx = z.at(x, 0);
        for (std::size_t c = 1; c < z.cols; ++c) mx = std::max<long double>(mx, z.at(x, c));
        for (std::size_t c = 0; c < z.cols; ++c) lse += std::exp((long double)z.at(x, c) - mx);
        return (long double)z.at(x, y) - (mx + std::log(lse));
    };
    auto pair_loss = [&](std::size_t x, std::size_t w, std::size_t l) {
        long double m = (long double)cfg.alpha * cfg.beta *
                            (lp(policy.logits, x, w) - lp(policy.logits, x, l)) -
                        (long double)cfg.beta * (lp(ref.logits, x, w) - lp(ref.logits, x, l));
        // -ln sigmoid(m) = softplus(-m)
        return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    };
    if (data.mode == PreferenceDataset::Mode::sampled) {
        long double total = 0.0L;
        for (const auto& p : data.pairs) total += pair_loss(p.prompt, p.winner, p.loser);
        return total / (long double)data.pairs.size();
    }
    long double total = 0.0L;
    std::size_t C = data.n_completions;
    for (std::size_t x = 0; x < data.n_prompts; ++x)
        for (std::size_t w = 0; w < C; ++w)
            for (std::size_t l = 0; l < C; ++l) {
                double wt = data.weights[(x * C + w) * C + l];
                if (wt > 0.0) total += (long double)wt * pair_loss(x, w, l);
            }
    return total;
}

}  // namespace

TEST_SUITE("preference") {

TEST_CASE("softmax rows") {
    Matrix z(2, 3);
    z.at(0, 0) = 0.5;
    z.at(0, 1) = -1.0;
    z.at(0, 2) = 2.0;
    z.at(1, 0) = 1e4;
    z.at(1, 1) = -1e4;
    z.at(1, 2) = 0.0;
    Matrix p = softmax_rows(z);
    Matrix lp = log_softmax_rows(z);
    for (std::size_t r = 0; r < 2; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            sum += p.at(r, c);
            if (p.at(r, c) > 0.0)
                CHECK(lp.at(r, c) == doctest::Approx(std::log(p.at(r, c))).epsilon(1e-12));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("shift invariance") {
        Matrix shifted = z;
        for (std::size_t c = 0; c < 3; ++c) shifted.at(0, c) += 123.25;
        Matrix q = softmax_rows(shifted);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(q.at(0, c) == doctest::Approx(p.at(0, c)).epsilon(1e-14));
    }
}

TEST_CASE("tv distance") {
    TabularPolicy a{Matrix(1, 2)};
    TabularPolicy b{Matrix(1, 2)};
    b.logits.at(0, 0) = std::log(3.0);  // (0.75, 0.25) vs (0.5, 0.5)
    CHECK(tv_distance(a, b) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(tv_distance(a, a) == 0.0);
    TabularPolicy c{Matrix(2, 2)};
    CHECK_THROWS_AS(tv_distance(a, c), std::invalid_argument);
}

TEST_CASE("bt_prob") {
    RewardTable r{Matrix(1, 3)};
    r.values.at(0, 0) = 1.0;
    r.values.at(0, 1) = -0.5;
    r.values.at(0, 2) = 1.0;
    CHECK(bt_prob(r, 0, 0, 1) == doctest::Approx(sigmoid(1.5)).epsilon(1e-15));
    CHECK(bt_prob(r, 0, 0, 2) == 0.5);
    CHECK(bt_prob(r, 0, 0, 1) + bt_prob(r, 0, 1, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("implicit reward margin") {
    TabularPolicy pol = random_policy(2, 4, 7);
    TabularPolicy ref = random_policy(2, 4, 8);
    LossConfig cfg{0.9, 0.01};
    PreferencePair pair{1, 2, 0};
    Matrix plp = log_softmax_rows(pol.logits);
    Matrix rlp = log_softmax_rows(ref.logits);
    double want = cfg.alpha * cfg.beta * (plp.at(1, 2) - plp.at(1, 0)) -
                  cfg.beta * (rlp.at(1, 2) - rlp.at(1, 0));
    CHECK(implicit_reward_margin(pol, ref, pair, cfg) == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS_AS(implicit_reward_margin(pol, ref, PreferencePair{1, 2, 2}, cfg),
                    std::invalid_argument);
    CHECK_THROWS_AS(implicit_reward_margin(pol, ref, PreferencePair{5, 0, 1}, cfg),
                    std::invalid_argument);

    SUBCASE("reference underflow is a support error") {
        TabularPolicy bad{Matrix(1, 2)};
        bad.logits.at(0, 0) = 1e308;
        bad.logits.at(0, 1) = -1e308;  // log softmax underflows to -inf
        CHECK_THROWS_AS(implicit_reward_margin(random_policy(1, 2, 1), bad,
                                               PreferencePair{0, 0, 1}, cfg),
                        SupportError);
    }
}

TEST_CASE("loss matches a long double reimplementation") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        SyntheticTask task = random_task(2, 4, seed);
        TabularPolicy pol = random_policy(2, 4, seed + 100);
        LossConfig cfg{0.8 + 0.1 * seed, 0.5 + 0.3 * seed};
        PreferenceDataset pop = synthesize_dataset_population(task);
        PreferenceDataset smp = synthesize_dataset_sampled(task, 500, seed + 200);
        for (const auto* data : {&pop, &smp}) {
            double got = hdpo_loss(pol, task.ref, *data, cfg);
            double want = static_cast<double>(loss_by_hand(pol, task.ref, *data, cfg));
            CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("alpha 1 is the plain preference loss") {
    SyntheticTask task = random_task(2, 5, 42);
    TabularPolicy pol = random_policy(2, 5, 43);
    double beta = 1.7;
    PreferenceDataset data = synthesize_dataset_sampled(task, 400, 44);
    Matrix plp = log_softmax_rows(pol.logits);
    Matrix rlp = log_softmax_rows(task.ref.logits);
    double direct = 0.0;
    for (const auto& p : data.pairs) {
        double m = beta * ((plp.at(p.prompt, p.winner) - rlp.at(p.prompt, p.winner)) -
                           (plp.at(p.prompt, p.loser) - rlp.at(p.prompt, p.loser)));
        direct += neg_log_sigmoid(m);
    }
    direct /= static_cast<double>(data.pairs.size());
    CHECK(hdpo_loss(pol, task.ref, data, LossConfig{1.0, beta}) ==
          doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("policy equal to reference gives ln 2 loss") {
    SyntheticTask task = random_task(3, 4, 5);
    PreferenceDataset data = synthesize_dataset_population(task);
    double loss = hdpo_loss(task.ref, task.ref, data, LossConfig{1.0, 0.7});
    CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("gradient matches central differences") {
    for (std::uint64_t seed : {11u, 12u}) {
        SyntheticTask task = random_task(2, 4, seed);
        TabularPolicy pol = random_policy(2, 4, seed + 50);
        LossConfig cfg{0.9, 0.8};
        PreferenceDataset data = synthesize_dataset_population(task);
        Matrix grad = hdpo_loss_grad(pol, task.ref, data, cfg);
        const double h = 1e-6;
        for (std::size_t i = 0; i < pol.logits.data.size(); ++i) {
            TabularPolicy plus = pol;
            TabularPolicy minus = pol;
            plus.logits.data[i] += h;
            minus.logits.data[i] -= h;
            double fd = (hdpo_loss(plus, task.ref, data, cfg) -
                         hdpo_loss(minus, task.ref, data, cfg)) /
                        (2.0 * h);
            CHECK(grad.data[i] == doctest::Approx(fd).epsilon(5e-6));
        }
    }
}

TEST_CASE("fused loss and grad agree with the separate calls") {
    SyntheticTask task = random_task(2, 3, 21);
    TabularPolicy pol = random_policy(2, 3, 22);
    LossConfig cfg{1.1, 0.6};
    PreferenceDataset data = synthesize_dataset_population(task);
    Matrix g1;
    double l1 = hdpo_loss_with_grad(pol, task.ref, data, cfg, g1);
    double l2 = hdpo_loss(pol, task.ref, data, cfg);
    Matrix g2 = hdpo_loss_grad(pol, task.ref, data, cfg);
    CHECK(l1 == l2);
    REQUIRE(g1.data.size() == g2.data.size());
    for (std::size_t i = 0; i < g1.data.size(); ++i) CHECK(g1.data[i] == g2.data[i]);
}

TEST_CASE("optimal policy identities") {
    SyntheticTask task = random_task(3, 5, 77);
    LossConfig cfg{0.9, 0.5};
    OraclePolicy oracle = optimal_policy(task.ref, task.reward, cfg);

    SUBCASE("rows are temperature alpha softmaxes, bit for bit") {
        Matrix rlp = log_softmax_rows(task.ref.logits);
        Matrix probs = softmax_rows(oracle.policy.logits);
        for (std::size_t x = 0; x < 3; ++x) {
            std::vector<double> score(5);
            for (std::size_t y = 0; y < 5; ++y)
                score[y] = rlp.at(x, y) + task.reward.values.at(x, y) / cfg.beta;
            std::vector<double> want = apply_temperature(score, cfg.alpha);
            for (std::size_t y = 0; y < 5; ++y) CHECK(probs.at(x, y) == want[y]);
        }
    }

    SUBCASE("margin at the optimum recovers the reward gap") {
        for (std::size_t x = 0; x < 3; ++x)
            for (std::size_t w = 0; w < 5; ++w)
                for (std::size_t l = 0; l < 5; ++l) {
                    if (w == l) continue;
                    double m =
                        implicit_reward_margin(oracle.policy, task.ref, {x, w, l}, cfg);
                    double gap =
                        task.reward.values.at(x, w) - task.reward.values.at(x, l);
                    CHECK(std::abs(m - gap) < 1e-12);
                }
    }

    SUBCASE("population gradient vanishes at the optimum") {
        PreferenceDataset data = synthesize_dataset_population(task);
        Matrix grad = hdpo_loss_grad(oracle.policy, task.ref, data, cfg);
        double norm = 0.0;
        for (double g : grad.data) norm += g * g;
        CHECK(std::sqrt(norm) < 1e-10);
    }

    SUBCASE("objective is maximised at the optimum") {
        double best = hdpo_objective(oracle.policy, task.ref, task.reward, cfg,
                                     task.prompt_weights);
        Rng rng(123);
        for (int trial = 0; trial < 50; ++trial) {
            TabularPolicy other{Matrix(3, 5)};
            for (std::size_t x = 0; x < 3; ++x) {
                std::vector<double> p = rng.dirichlet(std::vector<double>(5, 0.5));
                for (std::size_t y = 0; y < 5; ++y)
                    other.logits.at(x, y) = std::log(p[y] + 1e-300);
            }
            double val = hdpo_objective(other, task.ref, task.reward, cfg,
                                        task.prompt_weights);
            CHECK(val <= best + 1e-12);
        }
    }

    SUBCASE("constant reward and alpha 1 reproduce the reference") {
        RewardTable flat{Matrix(3, 5, 0.25)};
        OraclePolicy o = optimal_policy(task.ref, flat, LossConfig{1.0, 0.5});
        CHECK(tv_distance(o.policy, task.ref) < 1e-12);
    }
}

TEST_CASE("validation rejects malformed inputs") {
    CHECK_THROWS_AS(validate(LossConfig{0.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate(LossConfig{1.0, 0.0}), std::invalid_argument);
    TabularPolicy empty;
    CHECK_THROWS_AS(validate(empty), std::invalid_argument);
    TabularPolicy nan_pol{Matrix(1, 2)};
    nan_pol.logits.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(validate(nan_pol), std::invalid_argument);

    PreferenceDataset ds;
    ds.mode = PreferenceDataset::Mode::sampled;
    CHECK_THROWS_AS(validate(ds), std::invalid_argument);  // no pairs
    ds.pairs.push_back({0, 1, 1});
    CHECK_THROWS_AS(validate(ds), std::invalid_argument);  // winner == loser

    PreferenceDataset pop;
    pop.mode = PreferenceDataset::Mode::population;
    pop.n_prompts = 1;
    pop.n_completions = 2;
    pop.weights = {0.0, 0.6, 0.3, 0.0};
    CHECK_THROWS_AS(validate(pop), std::invalid_argument);  // sums to 0.9
    pop.weights = {0.1, 0.6, 0.3, 0.0};
    CHECK_THROWS_AS(validate(pop), std::invalid_argument);  // diagonal mass
    pop.weights = {0.0, 0.7, 0.3, 0.0};
    CHECK_NOTHROW(validate(pop));
}

}  // TEST_SUITE
