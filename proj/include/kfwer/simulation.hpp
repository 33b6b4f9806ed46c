#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "kfwer/baselines.hpp"
#include "kfwer/csv.hpp"
#include "kfwer/error.hpp"
#include "kfwer/knockoff.hpp"
#include "kfwer/lasso.hpp"
#include "kfwer/rng.hpp"
#include "kfwer/select.hpp"

namespace kfwer {

enum class Procedure { knockoffs, holm, stepdown, stepup };

inline const char* to_string(Procedure p) {
    switch (p) {
        case Procedure::knockoffs: return "knockoffs";
        case Procedure::holm: return "holm";
        case Procedure::stepdown: return "stepdown";
        case Procedure::stepup: return "stepup";
    }
    return "unknown";
}

inline Procedure parse_procedure(const std::string& s) {
    if (s == "knockoffs") return Procedure::knockoffs;
    if (s == "holm") return Procedure::holm;
    if (s == "stepdown") return Procedure::stepdown;
    if (s == "stepup") return Procedure::stepup;
    throw Error(ErrorKind::ConfigError, "sim_harness", "unknown procedure '" + s + "'");
}

enum class ScalePreset { desk, full };

struct SimConfig {
    int n = 300;
    int p = 90;
    double sigma_sq = 25.0;
    double rho = 0.0;
    int nnz = 6;
    double magnitude = 10.0;
    bool positive_signs = true;  // false: random ± signs
    int k = 5;
    double alpha = 0.05;
    int replicates = 500;
    std::uint64_t seed = 1;
    std::vector<Procedure> procedures{Procedure::knockoffs, Procedure::holm, Procedure::stepdown, Procedure::stepup};
    ScalePreset scale_preset = ScalePreset::desk;
    bool fixed_design = false;
    bool allow_row_augment = false;
    int stepdown_draws = 2000;
    std::vector<double> stepup_constants;  // empty: flat kα/p fallback
    PathSpec path{};
    int threads = 0;  // 0: hardware concurrency

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigError, "sim_harness", m); };
        if (n < 1 || p < 1) fail("n and p must be positive");
        if (nnz < 0 || nnz > p || p > n) fail("need 0 <= nnz <= p <= n");
        if (!(sigma_sq > 0.0)) fail("sigma_sq must be positive");
        if (!(rho >= 0.0 && rho < 1.0)) fail("rho must lie in [0, 1)");
        if (replicates < 1) fail("replicates must be >= 1");
        if (k < 1) fail("k must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
        path.validate();
    }
};

/// Desk preset: n = 300, p = 90, 6 signals of magnitude 10, σ² = 25, 5-FWER at 0.05.
inline SimConfig desk_preset() {
    SimConfig c;
    c.scale_preset = ScalePreset::desk;
    return c;
}

/// Full-size preset: n = 1000, p = 450, 10 signals, 2000 replicates; step-up
/// is left out because p > 100.
inline SimConfig full_preset() {
    SimConfig c;
    c.n = 1000;
    c.p = 450;
    c.nnz = 10;
    c.replicates = 2000;
    c.scale_preset = ScalePreset::full;
    c.procedures = {Procedure::knockoffs, Procedure::holm, Procedure::stepdown};
    return c;
}

/// Rows i.i.d. N(0, (1-ρ)I + ρ11ᵀ), columns then normalized. A rank-deficient
/// draw is retried once.
inline DesignMatrix gen_design(int n, int p, double rho, Engine& rng) {
    if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::ConfigError, "sim_harness", "rho must lie in [0, 1)");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double own = std::sqrt(1.0 - rho);
    const double shared = std::sqrt(rho);
    for (int attempt = 0;; ++attempt) {
        MatrixXd raw(n, p);
        for (Index i = 0; i < n; ++i) {
            const double common = normal(rng);
            for (Index j = 0; j < p; ++j) raw(i, j) = own * normal(rng) + shared * common;
        }
        try {
            return normalize_columns(raw);
        } catch (const Error& e) {
            if (attempt >= 1 || (e.kind() != ErrorKind::RankDeficient && e.kind() != ErrorKind::ZeroColumn)) throw;
        }
    }
}

/// Uniformly random support of size nnz (true entries).
inline std::vector<bool> draw_support(int p, int nnz, Engine& rng) {
    if (nnz < 0 || nnz > p) throw Error(ErrorKind::ConfigError, "sim_harness", "need 0 <= nnz <= p");
    std::vector<int> idx(static_cast<std::size_t>(p));
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher–Yates over the first nnz slots.
    for (int i = 0; i < nnz; ++i) {
        std::uniform_int_distribution<int> pick(i, p - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<bool> support(static_cast<std::size_t>(p), false);
    for (int i = 0; i < nnz; ++i) support[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = true;
    return support;
}

inline VectorXd signal_on_support(const std::vector<bool>& support, double magnitude, Engine& rng,
                                  bool positive_signs = true) {
    VectorXd beta = VectorXd::Zero(static_cast<Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) {
        if (!support[j]) continue;
        const double sign = positive_signs ? 1.0 : (uniform01(rng) < 0.5 ? -1.0 : 1.0);
        beta(static_cast<Index>(j)) = sign * magnitude;
    }
    return beta;
}

/// Coefficients with nnz entries equal to `magnitude` on a uniformly random
/// support (signs random when positive_signs is false).
inline VectorXd gen_signal(int p, int nnz, double magnitude, Engine& rng, bool positive_signs = true) {
    return signal_on_support(draw_support(p, nnz, rng), magnitude, rng, positive_signs);
}

/// Everything the knockoff procedure produced for one (X, y).
struct KnockoffRun {
    VectorXd s;
    EntryTimes entry;
    KnockoffStats stats;
    Calibration calibration;
    SelectionResult selection;
};

struct KnockoffRunOptions {
    int k = 1;
    double alpha = 0.05;
    bool randomize = true;
    bool top_up = true;
    bool allow_row_augment = false;
    PathSpec path{};
};

/// Knockoffs end to end: equicorrelated s, construction, Lasso entry times,
/// (W, χ), calibration of v, scan and top-up. Draws from `rng` only for row
/// augmentation (if needed) and then exactly one uniform for randomization.
inline KnockoffRun run_knockoffs(const DesignMatrix& design, const VectorXd& y, const KnockoffRunOptions& opts,
                                 Engine& rng) {
    KnockoffRun run;
    run.s = equicorrelated_s(design.gram());
    ConstructOptions copts;
    copts.allow_row_augment = opts.allow_row_augment;
    const KnockoffAugment aug = construct_knockoffs(design, run.s, copts);
    const VectorXd y_aug = aug.padded_rows > 0 ? augment_response(design, y, aug.padded_rows, rng) : y;
    run.entry = entry_times(aug, y_aug, opts.path);
    run.stats = compute_stats(run.entry);
    run.calibration = opts.randomize ? choose_v_randomized(opts.k, opts.alpha, rng) : choose_v(opts.k, opts.alpha);
    run.selection = run_kfwer(run.stats, run.calibration, opts.top_up);
    return run;
}

struct ProcedureOutcome {
    Procedure procedure = Procedure::knockoffs;
    std::vector<std::size_t> rejected;
    std::size_t rejections = 0;
    std::size_t false_count = 0;
    std::size_t true_count = 0;
};

struct SimRecord {
    std::size_t grid_index = 0;
    double grid_value = 0.0;
    int replicate = 0;
    Procedure procedure = Procedure::knockoffs;
    std::size_t rejections = 0;   // R
    std::size_t false_count = 0;  // V
    std::size_t true_count = 0;
    double power_contrib = 0.0;   // true_count / nnz (0 when nnz = 0)
};

struct ProcedureSummary {
    Procedure procedure = Procedure::knockoffs;
    int replicates = 0;
    double power = 0.0;
    double power_se = 0.0;
    double kfwer = 0.0;
    double kfwer_se = 0.0;
    double mean_rejections = 0.0;
    double mean_false = 0.0;
    double mean_false_se = 0.0;
};

struct SimReport {
    std::string grid_param;
    double grid_value = 0.0;
    SimConfig config;
    std::vector<SimRecord> records;
    std::vector<ProcedureSummary> summaries;

    const ProcedureSummary* summary(Procedure p) const {
        for (const auto& s : summaries) {
            if (s.procedure == p) return &s;
        }
        return nullptr;
    }
};

/// Rejections inside the drawn support count as true, all others as false,
/// whatever the coefficient magnitude.
inline ProcedureOutcome score(Procedure proc, std::vector<std::size_t> rejected, const std::vector<bool>& support) {
    ProcedureOutcome o;
    o.procedure = proc;
    o.rejections = rejected.size();
    for (std::size_t j : rejected) {
        if (support[j]) {
            ++o.true_count;
        } else {
            ++o.false_count;
        }
    }
    o.rejected = std::move(rejected);
    return o;
}

/// One simulated data set: draws X (unless `fixed` is given), β and noise,
/// forms y = Xβ + z and runs every configured procedure.
inline std::vector<ProcedureOutcome> run_replicate(const SimConfig& cfg, Engine& rng,
                                                   const DesignMatrix* fixed = nullptr) {
    const DesignMatrix design = fixed ? *fixed : gen_design(cfg.n, cfg.p, cfg.rho, rng);
    const std::vector<bool> support = draw_support(cfg.p, cfg.nnz, rng);
    const VectorXd beta = signal_on_support(support, cfg.magnitude, rng, cfg.positive_signs);
    std::normal_distribution<double> normal(0.0, std::sqrt(cfg.sigma_sq));
    VectorXd y = design.values() * beta;
    for (Index i = 0; i < y.size(); ++i) y(i) += normal(rng);

    std::vector<ProcedureOutcome> out;
    std::optional<PValueVector> pv;
    auto pvalues = [&]() -> const PValueVector& {
        if (!pv) pv = ols_pvalues(design, y);
        return *pv;
    };
    for (Procedure proc : cfg.procedures) {
        switch (proc) {
            case Procedure::knockoffs: {
                KnockoffRunOptions o;
                o.k = cfg.k;
                o.alpha = cfg.alpha;
                o.allow_row_augment = cfg.allow_row_augment;
                o.path = cfg.path;
                out.push_back(score(proc, run_knockoffs(design, y, o, rng).selection.rejected, support));
                break;
            }
            case Procedure::holm:
                out.push_back(score(proc, holm_kfwer(pvalues(), cfg.k, cfg.alpha), support));
                break;
            case Procedure::stepdown: {
                MvtNullSampler sampler(design, pvalues().dof);
                StepdownOptions so;
                so.draws = cfg.stepdown_draws;
                out.push_back(score(proc, stepdown_mvt(pvalues(), cfg.k, cfg.alpha, sampler, rng, so), support));
                break;
            }
            case Procedure::stepup: {
                CriticalValues c;
                if (cfg.stepup_constants.empty()) {
                    c = flat_stepup_constants(static_cast<std::size_t>(cfg.p), cfg.k, cfg.alpha);
                } else {
                    c.values = cfg.stepup_constants;
                }
                out.push_back(score(proc, stepup_kfwer(pvalues(), c), support));
                break;
            }
        }
    }
    return out;
}

enum class SweepParam { rho, nnz, magnitude };

inline const char* to_string(SweepParam s) {
    switch (s) {
        case SweepParam::rho: return "rho";
        case SweepParam::nnz: return "nnz";
        case SweepParam::magnitude: return "magnitude";
    }
    return "unknown";
}

inline SweepParam parse_sweep_param(const std::string& s) {
    if (s == "rho") return SweepParam::rho;
    if (s == "nnz") return SweepParam::nnz;
    if (s == "magnitude") return SweepParam::magnitude;
    throw Error(ErrorKind::ConfigError, "sim_harness", "sweep parameter must be rho, nnz or magnitude, got '" + s + "'");
}

struct Sweep {
    SweepParam param = SweepParam::rho;
    std::vector<double> values;
};

inline SimConfig apply_grid_value(SimConfig cfg, SweepParam param, double value) {
    switch (param) {
        case SweepParam::rho: cfg.rho = value; break;
        case SweepParam::nnz: cfg.nnz = static_cast<int>(std::lround(value)); break;
        case SweepParam::magnitude: cfg.magnitude = value; break;
    }
    return cfg;
}

inline std::vector<ProcedureSummary> summarize(const std::vector<SimRecord>& records, const SimConfig& cfg) {
    std::vector<ProcedureSummary> out;
    for (Procedure proc : cfg.procedures) {
        ProcedureSummary s;
        s.procedure = proc;
        double pw = 0, pw2 = 0, fw = 0, r = 0, v = 0, v2 = 0;
        for (const auto& rec : records) {
            if (rec.procedure != proc) continue;
            ++s.replicates;
            pw += rec.power_contrib;
            pw2 += rec.power_contrib * rec.power_contrib;
            fw += rec.false_count >= static_cast<std::size_t>(cfg.k) ? 1.0 : 0.0;
            r += static_cast<double>(rec.rejections);
            v += static_cast<double>(rec.false_count);
            v2 += static_cast<double>(rec.false_count) * static_cast<double>(rec.false_count);
        }
        if (s.replicates > 0) {
            const double m = s.replicates;
            s.power = pw / m;
            s.kfwer = fw / m;
            s.mean_rejections = r / m;
            s.mean_false = v / m;
            const double var_pw = m > 1 ? std::max(0.0, (pw2 - m * s.power * s.power) / (m - 1)) : 0.0;
            const double var_v = m > 1 ? std::max(0.0, (v2 - m * s.mean_false * s.mean_false) / (m - 1)) : 0.0;
            s.power_se = std::sqrt(var_pw / m);
            s.mean_false_se = std::sqrt(var_v / m);
            s.kfwer_se = std::sqrt(s.kfwer * (1.0 - s.kfwer) / m);
        }
        out.push_back(s);
    }
    return out;
}

/// Runs `sweep` over `base`. Replicate r at grid index g uses the stream
/// derive_seed(seed, g, r), so each record is reproducible on its own.
/// Replicates run on a worker pool; results are merged by index.
inline std::vector<SimReport> run_sweep(const SimConfig& base, const Sweep& sweep) {
    std::vector<SimConfig> configs;
    for (double v : sweep.values) {
        configs.push_back(apply_grid_value(base, sweep.param, v));
        configs.back().validate();
    }
    const std::size_t grid = configs.size();
    const auto reps = static_cast<std::size_t>(base.replicates);

    std::vector<std::optional<DesignMatrix>> fixed(grid);
    if (base.fixed_design) {
        for (std::size_t g = 0; g < grid; ++g) {
            Engine rng(derive_seed(base.seed, g, ~std::uint64_t{0}));
            fixed[g] = gen_design(configs[g].n, configs[g].p, configs[g].rho, rng);
        }
    }

    std::vector<std::vector<ProcedureOutcome>> outcomes(grid * reps);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        while (true) {
            const std::size_t task = next.fetch_add(1);
            if (task >= outcomes.size()) return;
            const std::size_t g = task / reps;
            const std::size_t r = task % reps;
            try {
                Engine rng(derive_seed(base.seed, g, r));
                outcomes[task] = run_replicate(configs[g], rng, fixed[g] ? &*fixed[g] : nullptr);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(outcomes.size());
                return;
            }
        }
    };
    unsigned threads = base.threads > 0 ? static_cast<unsigned>(base.threads) : std::thread::hardware_concurrency();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(outcomes.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<SimReport> reports;
    for (std::size_t g = 0; g < grid; ++g) {
        SimReport rep;
        rep.grid_param = to_string(sweep.param);
        rep.grid_value = sweep.values[g];
        rep.config = configs[g];
        for (std::size_t r = 0; r < reps; ++r) {
            for (const auto& o : outcomes[g * reps + r]) {
                SimRecord rec;
                rec.grid_index = g;
                rec.grid_value = sweep.values[g];
                rec.replicate = static_cast<int>(r);
                rec.procedure = o.procedure;
                rec.rejections = o.rejections;
                rec.false_count = o.false_count;
                rec.true_count = o.true_count;
                rec.power_contrib = configs[g].nnz > 0 ? static_cast<double>(o.true_count) / configs[g].nnz : 0.0;
                rep.records.push_back(rec);
            }
        }
        rep.summaries = summarize(rep.records, configs[g]);
        reports.push_back(std::move(rep));
    }
    return reports;
}

inline void write_tidy_csv(std::ostream& out, const std::vector<SimReport>& reports) {
    csv::write_row(out, {"grid_param", "grid_value", "replicate", "procedure", "R", "V", "true_count", "power_contrib"});
    for (const auto& rep : reports) {
        for (const auto& r : rep.records) {
            csv::write_row(out, {rep.grid_param, csv::format_real(r.grid_value), std::to_string(r.replicate),
                                 to_string(r.procedure), std::to_string(r.rejections), std::to_string(r.false_count),
                                 std::to_string(r.true_count), csv::format_real(r.power_contrib)});
        }
    }
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<SimReport>& reports) {
    csv::write_row(out, {"grid_param", "grid_value", "procedure", "replicates", "power", "power_se", "kfwer",
                         "kfwer_se", "mean_R", "mean_V", "mean_V_se", "snr"});
    for (const auto& rep : reports) {
        const auto& c = rep.config;
        const double snr = static_cast<double>(c.nnz) * c.magnitude * c.magnitude / c.sigma_sq;
        for (const auto& s : rep.summaries) {
            csv::write_row(out, {rep.grid_param, csv::format_real(rep.grid_value), to_string(s.procedure),
                                 std::to_string(s.replicates), csv::format_real(s.power), csv::format_real(s.power_se),
                                 csv::format_real(s.kfwer), csv::format_real(s.kfwer_se),
                                 csv::format_real(s.mean_rejections), csv::format_real(s.mean_false),
                                 csv::format_real(s.mean_false_se), csv::format_real(snr)});
        }
    }
}

}  // namespace kfwer
