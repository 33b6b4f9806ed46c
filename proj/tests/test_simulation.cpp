#include <gtest/gtest.h>

#include <sstream>

#include "kfwer/simulation.hpp"

using namespace kfwer;

namespace {

SimConfig small_config() {
    SimConfig c;
    c.n = 120;
    c.p = 30;
    c.nnz = 4;
    c.magnitude = 12.0;
    c.k = 2;
    c.alpha = 0.1;
    c.replicates = 12;
    c.stepdown_draws = 300;
    c.seed = 42;
    c.threads = 1;
    return c;
}

std::string tidy_bytes(const std::vector<SimReport>& reports) {
    std::ostringstream out;
    write_tidy_csv(out, reports);
    write_aggregate_csv(out, reports);
    return out.str();
}

double sample_corr(const VectorXd& a, const VectorXd& b) {
    const VectorXd ac = a.array() - a.mean();
    const VectorXd bc = b.array() - b.mean();
    return ac.dot(bc) / (ac.norm() * bc.norm());
}

}  // namespace

TEST(GenDesign, IndependentColumnsConcentrate) {
    int good = 0;
    const int draws = 40;
    for (int d = 0; d < draws; ++d) {
        Engine rng(derive_seed(5, static_cast<std::uint64_t>(d)));
        const auto x = gen_design(400, 50, 0.0, rng);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i)
            for (int j = i + 1; j < 50; ++j) worst = std::max(worst, std::abs(sample_corr(x.values().col(i), x.values().col(j))));
        good += worst <= 4.0 / std::sqrt(400.0) ? 1 : 0;
    }
    EXPECT_GE(good, static_cast<int>(0.95 * draws));
}

TEST(GenDesign, EquicorrelatedMean) {
    Engine rng(6);
    const auto x = gen_design(1000, 20, 0.5, rng);
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < 20; ++i)
        for (int j = i + 1; j < 20; ++j) {
            sum += sample_corr(x.values().col(i), x.values().col(j));
            ++count;
        }
    EXPECT_NEAR(sum / count, 0.5, 0.05);
}

TEST(GenDesign, SingleColumn) {
    Engine rng(7);
    const auto x = gen_design(10, 1, 0.7, rng);
    EXPECT_EQ(x.p(), 1);
    EXPECT_NEAR(x.values().col(0).norm(), 1.0, 1e-12);
}

TEST(GenSignal, Examples) {
    Engine rng(8);
    EXPECT_TRUE(gen_signal(20, 0, 10.0, rng).isZero(0.0));
    const VectorXd all = gen_signal(20, 20, 3.0, rng);
    EXPECT_TRUE((all.array() == 3.0).all());
    const VectorXd b = gen_signal(450, 10, 10.0, rng);
    EXPECT_DOUBLE_EQ(b.squaredNorm(), 1000.0);
    EXPECT_DOUBLE_EQ(b.squaredNorm() / 25.0, 40.0);
    const VectorXd mixed = gen_signal(200, 100, 1.0, rng, false);
    EXPECT_TRUE((mixed.array().abs() <= 1.0).all());
    EXPECT_LT(mixed.sum(), 100.0);
}

TEST(Score, CountsBySupport) {
    std::vector<bool> support{true, false, true, false};
    auto o = score(Procedure::holm, {0, 1, 3}, support);
    EXPECT_EQ(o.rejections, 3u);
    EXPECT_EQ(o.true_count, 1u);
    EXPECT_EQ(o.false_count, 2u);
    // Global null: every rejection is false.
    o = score(Procedure::holm, {0, 1}, std::vector<bool>(4, false));
    EXPECT_EQ(o.false_count, 2u);
}

TEST(Score, ZeroMagnitudeCountsOnlyOffSupport) {
    SimConfig c = small_config();
    c.magnitude = 0.0;
    c.procedures = {Procedure::holm};
    c.alpha = 0.5;
    c.replicates = 30;
    const auto reports = run_sweep(c, {SweepParam::magnitude, {0.0}});
    for (const auto& r : reports[0].records) EXPECT_EQ(r.false_count + r.true_count, r.rejections);
}

TEST(RunSweep, DeterministicAcrossThreadCounts) {
    SimConfig c = small_config();
    const Sweep sweep{SweepParam::rho, {0.0, 0.4}};
    const auto a = tidy_bytes(run_sweep(c, sweep));
    const auto b = tidy_bytes(run_sweep(c, sweep));
    c.threads = 3;
    const auto d = tidy_bytes(run_sweep(c, sweep));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, d);
}

TEST(RunSweep, ScoringIdentityAndShape) {
    SimConfig c = small_config();
    const auto reports = run_sweep(c, {SweepParam::nnz, {0, 3}});
    ASSERT_EQ(reports.size(), 2u);
    for (const auto& rep : reports) {
        EXPECT_EQ(rep.records.size(), static_cast<std::size_t>(c.replicates) * c.procedures.size());
        for (const auto& r : rep.records) EXPECT_EQ(r.false_count + r.true_count, r.rejections);
        EXPECT_EQ(rep.summaries.size(), c.procedures.size());
    }
    EXPECT_EQ(reports[0].config.nnz, 0);
    EXPECT_EQ(reports[1].config.nnz, 3);
}

TEST(RunSweep, SinglePointMatchesRunReplicate) {
    SimConfig c = small_config();
    c.replicates = 4;
    const auto reports = run_sweep(c, {SweepParam::magnitude, {c.magnitude}});
    std::size_t idx = 0;
    for (int r = 0; r < c.replicates; ++r) {
        Engine rng(derive_seed(c.seed, 0, static_cast<std::uint64_t>(r)));
        for (const auto& o : run_replicate(c, rng)) {
            const auto& rec = reports[0].records[idx++];
            EXPECT_EQ(rec.procedure, o.procedure);
            EXPECT_EQ(rec.rejections, o.rejections);
            EXPECT_EQ(rec.false_count, o.false_count);
        }
    }
    EXPECT_EQ(idx, reports[0].records.size());
}

TEST(RunSweep, FixedDesignMode) {
    SimConfig c = small_config();
    c.fixed_design = true;
    c.procedures = {Procedure::holm};
    const auto a = tidy_bytes(run_sweep(c, {SweepParam::rho, {0.2}}));
    const auto b = tidy_bytes(run_sweep(c, {SweepParam::rho, {0.2}}));
    EXPECT_EQ(a, b);
}

TEST(RunSweep, ConfigErrors) {
    SimConfig c = small_config();
    EXPECT_THROW(run_sweep(c, {SweepParam::rho, {1.0}}), Error);
    EXPECT_THROW(run_sweep(c, {SweepParam::nnz, {31}}), Error);
    EXPECT_THROW(parse_sweep_param("sigma"), Error);
    EXPECT_THROW(parse_procedure("bh"), Error);
}

TEST(RunKnockoffs, RejectionsArePositive) {
    SimConfig c = small_config();
    for (int r = 0; r < 10; ++r) {
        Engine rng(derive_seed(9, static_cast<std::uint64_t>(r)));
        const auto d = gen_design(c.n, c.p, 0.3, rng);
        const auto support = draw_support(c.p, c.nnz, rng);
        VectorXd y = d.values() * signal_on_support(support, c.magnitude, rng);
        std::normal_distribution<double> normal(0.0, 5.0);
        for (Index i = 0; i < y.size(); ++i) y(i) += normal(rng);
        KnockoffRunOptions o;
        o.k = 4;
        o.alpha = 0.1;
        const auto run = run_knockoffs(d, y, o, rng);
        for (std::size_t j : run.selection.rejected) EXPECT_EQ(run.stats.chi[j], 1);
        EXPECT_GE(run.selection.rejected.size(),
                  std::min<std::size_t>(3, static_cast<std::size_t>(std::count(run.stats.chi.begin(), run.stats.chi.end(), 1))));
    }
}

// Null-heavy configuration: every procedure keeps the k-FWER.
TEST(NullLevel, AllProcedures) {
    SimConfig c = small_config();
    c.n = 150;
    c.p = 40;
    c.nnz = 0;
    c.k = 3;
    c.alpha = 0.1;
    c.replicates = 300;
    c.stepdown_draws = 400;
    const auto reports = run_sweep(c, {SweepParam::nnz, {0}});
    for (const auto& s : reports[0].summaries) {
        EXPECT_LE(s.kfwer, c.alpha + 3 * std::sqrt(c.alpha * (1 - c.alpha) / c.replicates)) << to_string(s.procedure);
        EXPECT_EQ(s.power, 0.0);
    }
}

TEST(Presets, Values) {
    const auto d = desk_preset();
    EXPECT_EQ(d.n, 300);
    EXPECT_EQ(d.p, 90);
    EXPECT_EQ(d.nnz, 6);
    EXPECT_EQ(d.k, 5);
    EXPECT_DOUBLE_EQ(d.sigma_sq, 25.0);
    const auto p = full_preset();
    EXPECT_EQ(p.n, 1000);
    EXPECT_EQ(p.p, 450);
    EXPECT_EQ(std::count(p.procedures.begin(), p.procedures.end(), Procedure::stepup), 0);
}
