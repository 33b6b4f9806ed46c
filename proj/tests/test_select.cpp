#include <gtest/gtest.h>

#include <random>
#include <set>

#include "kfwer/select.hpp"
#include "oracles.hpp"

using namespace kfwer;

namespace {

// Stats whose descending-W order is 0, 1, 2, ... with the given signs.
KnockoffStats ordered(const std::vector<int>& chi) {
    std::vector<double> w(chi.size());
    for (std::size_t i = 0; i < chi.size(); ++i) w[i] = static_cast<double>(chi.size() - i);
    return make_stats(w, chi);
}

std::vector<int> random_signs(std::size_t p, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    std::vector<int> chi(p);
    for (auto& c : chi) c = coin(rng) ? 1 : -1;
    return chi;
}

}  // namespace

TEST(ComputeStats, Examples) {
    VectorXd z(4);
    z << 3, 1, 1, 1;
    auto s = compute_stats(z);
    EXPECT_EQ(s.w, (std::vector<double>{3, 1}));
    EXPECT_EQ(s.chi, (std::vector<int>{1, 0}));

    s = compute_stats(VectorXd::Zero(6));
    EXPECT_EQ(s.w, (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(s.chi, (std::vector<int>{0, 0, 0}));

    VectorXd z3(6);
    z3 << 5, 2, 4, 1, 3, 4;
    s = compute_stats(z3);
    EXPECT_EQ(s.w, (std::vector<double>{5, 3, 4}));
    EXPECT_EQ(s.chi, (std::vector<int>{1, -1, 0}));
    EXPECT_EQ(s.order, (std::vector<std::size_t>{0, 2, 1}));
}

TEST(ComputeStats, TiesBrokenByIndex) {
    const auto s = make_stats({2, 5, 2, 5}, {1, 1, 1, 1});
    EXPECT_EQ(s.order, (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(ComputeStats, OddLengthRejected) { EXPECT_THROW(compute_stats(VectorXd::Zero(5)), Error); }

TEST(NbTail, Examples) {
    EXPECT_DOUBLE_EQ(nb_tail(1, 1), 0.5);
    for (long k = 1; k < 30; ++k) EXPECT_EQ(nb_tail(0, k), 0.0);
    EXPECT_LE(nb_tail(4, 10), 0.05);
    EXPECT_GT(nb_tail(5, 10), 0.05);
    EXPECT_DOUBLE_EQ(nb_tail(1, 5), 1.0 / 32.0);
    EXPECT_DOUBLE_EQ(nb_tail(2, 5), 7.0 / 64.0);
}

TEST(NbTail, MatchesOraclesExactRange) {
    for (long v = 1; v <= 40; ++v) {
        for (long k = 1; k + v <= 64; ++k) {
            const double got = nb_tail(v, k);
            EXPECT_NEAR(got, oracle::nb_tail_beta(v, k), 1e-13 + 1e-10 * got) << v << "," << k;
            // Complement check against the finite sum: tail + cdf = 1.
            EXPECT_NEAR(got, oracle::nb_tail_sum(v, k), 1e-12) << v << "," << k;
        }
    }
}

TEST(NbTail, MatchesOracleLogRange) {
    for (long v : {30L, 60L, 100L, 400L}) {
        for (long k : {40L, 80L, 150L, 500L}) {
            if (v + k <= 64) continue;
            const double got = nb_tail(v, k);
            const double want = oracle::nb_tail_beta(v, k);
            EXPECT_NEAR(got, want, 1e-12 + 1e-9 * want) << v << "," << k;
        }
    }
}

TEST(NbTail, Monotone) {
    for (long v = 1; v <= 30; ++v) {
        for (long k = 1; k <= 30; ++k) {
            EXPECT_LT(nb_tail(v, k + 1), nb_tail(v, k));
            EXPECT_GT(nb_tail(v + 1, k), nb_tail(v, k));
        }
    }
}

TEST(ChooseV, Examples) {
    EXPECT_EQ(choose_v(10, 0.05).v, 4);
    EXPECT_EQ(choose_v(1, 0.25).v, 0);
    EXPECT_EQ(choose_v(5, 0.05).v, 1);
    EXPECT_THROW(choose_v(0, 0.05), Error);
    EXPECT_THROW(choose_v(3, 1.0), Error);
}

TEST(ChooseV, MatchesBetaOracleAndMonotone) {
    const std::vector<double> alphas{0.01, 0.05, 0.1, 0.2, 0.5, 0.9};
    for (int k = 1; k <= 25; ++k) {
        int prev = -1;
        for (double a : alphas) {
            const int v = choose_v(k, a).v;
            EXPECT_EQ(v, oracle::choose_v_beta(k, a)) << k << "," << a;
            EXPECT_GE(v, prev);
            prev = v;
            if (k > 1) EXPECT_GE(v, choose_v(k - 1, a).v);
        }
    }
}

TEST(ChooseVRandomized, Examples) {
    auto c = calibrate_with_draw(1, 0.5, 0.3);
    EXPECT_EQ(c.v, 1);
    EXPECT_DOUBLE_EQ(c.omega, 1.0);
    EXPECT_EQ(c.v_used, 1);

    c = calibrate_with_draw(10, 0.05, 0.0);
    const double hi = oracle::nb_tail_beta(5, 10), lo = oracle::nb_tail_beta(4, 10);
    EXPECT_EQ(c.v, 4);
    EXPECT_NEAR(c.omega, (hi - 0.05) / (hi - lo), 1e-12);
    EXPECT_EQ(c.v_used, 4);
    EXPECT_EQ(calibrate_with_draw(10, 0.05, 0.999999).v_used, 5);

    c = calibrate_with_draw(1, 0.05, 0.95);
    EXPECT_EQ(c.v, 0);
    EXPECT_NEAR(c.omega, 0.9, 1e-15);
    EXPECT_EQ(c.v_used, 1);
    EXPECT_EQ(calibrate_with_draw(1, 0.05, 0.89).v_used, 0);
}

TEST(ChooseVRandomized, MixtureHasExactLevel) {
    for (int k = 1; k <= 12; ++k) {
        for (double a : {0.05, 0.1, 0.3}) {
            const auto c = calibrate_with_draw(k, a, 0.5);
            const double level = c.omega * nb_tail(c.v, k) + (1 - c.omega) * nb_tail(c.v + 1, k);
            EXPECT_NEAR(level, a, 1e-12);
        }
    }
}

TEST(ChooseVRandomized, ConsumesOneDraw) {
    Engine a(77), b(77);
    const auto c = choose_v_randomized(4, 0.1, a);
    const double u = uniform01(b);
    EXPECT_EQ(c.draw, u);
    EXPECT_EQ(a(), b());
}

TEST(Select, ScanExamples) {
    auto s = ordered({1, 1, -1, 1, -1});
    auto r = select(s, 2);
    EXPECT_EQ(r.cutoff_index, 5u);
    EXPECT_EQ(r.rejected, (std::vector<std::size_t>{0, 1, 3}));

    s = ordered({-1, -1, 1, 1});
    r = select(s, 1);
    EXPECT_EQ(r.cutoff_index, 1u);
    EXPECT_TRUE(r.rejected.empty());

    s = ordered({1, 1, 1, 1, 1, 1});
    r = select(s, 3);
    EXPECT_EQ(r.cutoff_index, 6u);
    EXPECT_EQ(r.rejected.size(), 6u);
    EXPECT_EQ(r.threshold, -std::numeric_limits<double>::infinity());

    r = select(s, 0);
    EXPECT_TRUE(r.rejected.empty());
    EXPECT_EQ(r.threshold, std::numeric_limits<double>::infinity());
}

TEST(Select, ZeroSignsSkipped) {
    const auto s = ordered({0, 1, 0, -1, 1});
    const auto r = select(s, 1);
    EXPECT_EQ(r.rejected, (std::vector<std::size_t>{1}));
    EXPECT_EQ(r.cutoff_index, 4u);
}

TEST(Select, NestingAndThresholdEquivalence) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(0.0, 10.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t p = 1 + trial % 40;
        std::vector<double> w(p);
        for (auto& x : w) x = unif(rng);
        std::vector<int> chi = random_signs(p, rng);
        const auto s = make_stats(w, chi);
        for (int v = 0; v <= 6; ++v) {
            const auto a = select(s, v);
            const auto b = select(s, v + 1);
            const std::set<std::size_t> sa(a.rejected.begin(), a.rejected.end());
            const std::set<std::size_t> sb(b.rejected.begin(), b.rejected.end());
            EXPECT_TRUE(std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()));
            auto thr = select_by_threshold(s, v);
            std::vector<std::size_t> scan(sa.begin(), sa.end());
            EXPECT_EQ(thr, scan);
            EXPECT_EQ(threshold_tv(s, v), a.threshold);
        }
    }
}

TEST(TopUp, Examples) {
    auto s = ordered({-1, 1, 1, -1, 1, 1, 1});
    SelectionResult empty;
    auto r = top_up(empty, s, 5);
    EXPECT_EQ(r.rejected, (std::vector<std::size_t>{1, 2, 4, 5}));
    EXPECT_EQ(r.topped_up, 4u);

    SelectionResult full;
    full.rejected = {1, 2, 4, 5};
    EXPECT_EQ(top_up(full, s, 5).rejected, full.rejected);
    EXPECT_EQ(top_up(full, s, 5).topped_up, 0u);

    EXPECT_TRUE(top_up(empty, s, 1).rejected.empty());

    // Runs out of positives.
    s = ordered({-1, 1, -1});
    EXPECT_EQ(top_up(empty, s, 5).rejected, (std::vector<std::size_t>{1}));
}

TEST(Chernoff, Theta) {
    EXPECT_NEAR(std::exp(chernoff_log_theta(1.0)), 27.0 / 32.0, 1e-15);
    EXPECT_NEAR(chernoff_bound(1, 1.0), 0.84375, 1e-15);
    EXPECT_NEAR(chernoff_bound(4, 1.0), std::pow(27.0 / 32.0, 4), 1e-15);
    // The bound dominates the exact tail.
    for (int v = 1; v <= 10; ++v) {
        for (double a : {0.5, 1.0, 2.0}) {
            const long m = static_cast<long>(std::ceil((1 + a) * v));
            EXPECT_LE(nb_tail(v, m), chernoff_bound(v, a));
        }
    }
}

// Coin-flip null: i.i.d. fair signs in a fixed order. V is the number of
// rejections, all of which are false.
class CoinFlip : public ::testing::TestWithParam<int> {};

TEST_P(CoinFlip, DominatedByNegativeBinomial) {
    const int v = GetParam();
    const int p = 200;
    const int draws = 100000;
    const auto base = ordered(std::vector<int>(p, 1));
    std::mt19937_64 rng(1000 + v);
    std::vector<long> count(p + 2, 0);
    double sum = 0.0;
    KnockoffStats s = base;
    for (int d = 0; d < draws; ++d) {
        s.chi = random_signs(p, rng);
        const auto n = select(s, v).rejected.size();
        ++count[n];
        sum += static_cast<double>(n);
    }
    long at_least = draws;
    for (int m = 1; m <= 30; ++m) {
        at_least -= count[static_cast<std::size_t>(m - 1)];
        const double emp = static_cast<double>(at_least) / draws;
        const double nb = nb_tail(v, m);
        EXPECT_LE(emp, nb + 3.0 * std::sqrt(nb * (1 - nb) / draws) + 1e-12) << "m=" << m;
    }
    EXPECT_LE(sum / draws, v + 3.0 * std::sqrt(2.0 * v / draws));
}

INSTANTIATE_TEST_SUITE_P(Levels, CoinFlip, ::testing::Values(1, 2, 4));

TEST(RunKfwer, TopUpAfterScan) {
    const auto s = ordered({-1, 1, -1, 1, 1});
    Calibration cal;
    cal.k = 4;
    cal.v_used = 1;
    const auto plain = run_kfwer(s, cal, false);
    EXPECT_TRUE(plain.rejected.empty());
    const auto topped = run_kfwer(s, cal, true);
    EXPECT_EQ(topped.rejected, (std::vector<std::size_t>{1, 3, 4}));
    EXPECT_EQ(topped.topped_up, 3u);
}
