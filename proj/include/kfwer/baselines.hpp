#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "kfwer/error.hpp"
#include "kfwer/knockoff.hpp"
#include "kfwer/rng.hpp"

namespace kfwer {

/// OLS two-sided p-values with their t statistics.
struct PValueVector {
    std::vector<double> p_values;
    std::vector<double> t_stats;
    double sigma_hat_sq = 0.0;
    int dof = 0;

    std::size_t size() const { return p_values.size(); }
};

enum class CriticalTag { holm_kfwer, stepdown_generic, stepup };

struct CriticalValues {
    std::vector<double> values;
    CriticalTag procedure_tag = CriticalTag::stepup;
};

inline double t_two_sided_pvalue(double t, int dof) {
    const boost::math::students_t dist(static_cast<double>(dof));
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

/// Least-squares t statistics β̂_j / (σ̂ √((XᵀX)⁻¹_jj)) with σ̂² = RSS/(n - p),
/// referred to Student t with n - p degrees of freedom.
inline PValueVector ols_pvalues(const DesignMatrix& design, const VectorXd& y) {
    const MatrixXd& x = design.values();
    const Index n = x.rows();
    const Index p = x.cols();
    if (n <= p) throw Error(ErrorKind::DimensionError, "baselines", "OLS p-values need n > p");
    if (y.size() != n) throw Error(ErrorKind::DimensionError, "baselines", "response length must equal n");

    Eigen::LLT<MatrixXd> llt(x.transpose() * x);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::RankDeficient, "baselines", "XᵀX is singular");
    const VectorXd beta = llt.solve(x.transpose() * y);
    const MatrixXd inv = llt.solve(MatrixXd::Identity(p, p));
    const double rss = (y - x * beta).squaredNorm();
    const double ysq = y.squaredNorm();
    if (!(rss > 1e-24 * std::max(ysq, 1e-300))) {
        throw Error(ErrorKind::DegenerateFit, "baselines", "residual sum of squares is zero; sigma cannot be estimated");
    }

    PValueVector out;
    out.dof = static_cast<int>(n - p);
    out.sigma_hat_sq = rss / static_cast<double>(out.dof);
    const double sigma = std::sqrt(out.sigma_hat_sq);
    out.t_stats.resize(static_cast<std::size_t>(p));
    out.p_values.resize(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        const double t = beta(j) / (sigma * std::sqrt(inv(j, j)));
        out.t_stats[static_cast<std::size_t>(j)] = t;
        out.p_values[static_cast<std::size_t>(j)] = t_two_sided_pvalue(t, out.dof);
    }
    return out;
}

/// Indices sorted by ascending p-value, ties by index.
inline std::vector<std::size_t> ascending_pvalue_order(const std::vector<double>& p) {
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    return order;
}

/// Generalized Holm constants: kα/p for i <= k, kα/(p + k - i) for i > k (1-based).
inline CriticalValues holm_kfwer_constants(std::size_t p, int k, double alpha) {
    CriticalValues c;
    c.procedure_tag = CriticalTag::holm_kfwer;
    c.values.resize(p);
    const double ka = static_cast<double>(k) * alpha;
    for (std::size_t i = 1; i <= p; ++i) {
        c.values[i - 1] = i <= static_cast<std::size_t>(k)
                              ? ka / static_cast<double>(p)
                              : ka / static_cast<double>(p + static_cast<std::size_t>(k) - i);
    }
    return c;
}

/// Step-down scan with the given constants: reject until the first p_(i) > c_i.
inline std::vector<std::size_t> stepdown_with_constants(const std::vector<double>& p, const std::vector<double>& c) {
    const auto order = ascending_pvalue_order(p);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (p[order[i]] > c[i]) break;
        out.push_back(order[i]);
    }
    return out;
}

inline std::vector<std::size_t> holm_kfwer(const PValueVector& pv, int k, double alpha) {
    if (k < 1) throw Error(ErrorKind::ConfigError, "baselines", "k must be >= 1");
    return stepdown_with_constants(pv.p_values, holm_kfwer_constants(pv.size(), k, alpha).values);
}

/// Flat kα/p constants: valid under any dependence but conservative.
inline CriticalValues flat_stepup_constants(std::size_t p, int k, double alpha) {
    CriticalValues c;
    c.procedure_tag = CriticalTag::stepup;
    c.values.assign(p, std::min(1.0, static_cast<double>(k) * alpha / static_cast<double>(p)));
    return c;
}

/// Step-up: reject H_(1..i*) for the largest i* with p_(i*) <= c_{i*}.
inline std::vector<std::size_t> stepup_kfwer(const PValueVector& pv, const CriticalValues& constants) {
    const std::size_t p = pv.size();
    if (constants.values.size() != p) {
        throw Error(ErrorKind::MissingConstants, "baselines",
                    "step-up needs " + std::to_string(p) + " critical values, got " +
                        std::to_string(constants.values.size()));
    }
    for (std::size_t i = 1; i < p; ++i) {
        if (constants.values[i] < constants.values[i - 1]) {
            throw Error(ErrorKind::ConfigError, "baselines", "step-up critical values must be non-decreasing");
        }
    }
    const auto order = ascending_pvalue_order(pv.p_values);
    std::size_t last = 0;
    for (std::size_t i = p; i > 0; --i) {
        if (pv.p_values[order[i - 1]] <= constants.values[i - 1]) {
            last = i;
            break;
        }
    }
    return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(last)};
}

/// Critical values from a plain-text column file, one real per line.
inline CriticalValues load_critical_values(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "baselines", "cannot open critical value file " + path);
    CriticalValues c;
    c.procedure_tag = CriticalTag::stepup;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(line.substr(first), &used);
            c.values.push_back(v);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, "baselines",
                        path + ": line " + std::to_string(lineno) + ": not a real number");
        }
    }
    if (c.values.empty()) throw Error(ErrorKind::MissingConstants, "baselines", path + " has no critical values");
    return c;
}

/// Joint null law of the OLS p-values given X: t = Z / sqrt(χ²_ν/ν) with
/// Z ~ N(0, R), R the unit-diagonal rescaling of (XᵀX)⁻¹ and ν = n - p.
class MvtNullSampler {
public:
    MvtNullSampler(const DesignMatrix& design, int dof) : dof_(dof), chi_sq_(static_cast<double>(dof)) {
        const Index p = design.p();
        Eigen::LLT<MatrixXd> llt(design.gram());
        if (llt.info() != Eigen::Success) throw Error(ErrorKind::RankDeficient, "baselines", "XᵀX is singular");
        MatrixXd inv = llt.solve(MatrixXd::Identity(p, p));
        const VectorXd d = inv.diagonal().cwiseSqrt().cwiseInverse();
        const MatrixXd corr = d.asDiagonal() * inv * d.asDiagonal();
        chol_ = corr.llt().matrixL();
        eps_.resize(p);
    }

    std::size_t size() const { return static_cast<std::size_t>(chol_.rows()); }
    int dof() const { return dof_; }

    std::vector<double> operator()(Engine& rng) {
        std::vector<double> out(size());
        draw_into(out, rng);
        return out;
    }

    /// One draw of the p-value vector.
    void draw_into(std::vector<double>& out, Engine& rng) {
        draw_t(out, rng);
        for (double& t : out) t = t_two_sided_pvalue(t, dof_);
    }

    /// Same draw as `draw_into` (same RNG consumption) reported as -|t|,
    /// which orders hypotheses exactly as the p-values do.
    void draw_scores_into(std::vector<double>& out, Engine& rng) {
        draw_t(out, rng);
        for (double& t : out) t = -std::abs(t);
    }

private:
    void draw_t(std::vector<double>& out, Engine& rng) {
        for (Index j = 0; j < eps_.size(); ++j) eps_(j) = normal_(rng);
        const VectorXd z = chol_.triangularView<Eigen::Lower>() * eps_;
        const double scale = std::sqrt(chi_sq_(rng) / static_cast<double>(dof_));
        out.resize(size());
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = z(static_cast<Index>(j)) / scale;
    }

    int dof_;
    MatrixXd chol_;
    VectorXd eps_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::chi_squared_distribution<double> chi_sq_;
};

struct StepdownOptions {
    int draws = 2000;
    int min_draws = 100;
    /// Above this many (k-1)-subsets of the rejected set, only the subset of
    /// the k-1 least significant rejections is used.
    std::size_t max_subsets = 5000;
};

namespace detail {

inline void for_each_combination(std::size_t n, std::size_t r,
                                 const std::function<void(const std::vector<std::size_t>&)>& fn) {
    std::vector<std::size_t> idx(r);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (r > n) return;
    while (true) {
        fn(idx);
        std::size_t i = r;
        while (i > 0 && idx[i - 1] == n - r + i - 1) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < r; ++j) idx[j] = idx[j - 1] + 1;
    }
}

inline double binomial_count(std::size_t n, std::size_t r) {
    double c = 1.0;
    for (std::size_t i = 1; i <= r; ++i) c = c * static_cast<double>(n - r + i) / static_cast<double>(i);
    return c;
}

// Step-down on scores where smaller means more significant (p-values, or any
// strictly increasing transform of them). `fill(row, rng)` writes one null draw.
template <class Fill>
std::vector<std::size_t> stepdown_scores(const std::vector<double>& observed, int k, double alpha, Fill&& fill,
                                         Engine& rng, const StepdownOptions& opts) {
    if (k < 1) throw Error(ErrorKind::ConfigError, "baselines", "k must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::ConfigError, "baselines", "alpha must lie in (0, 1)");
    const auto b_draws = static_cast<std::size_t>(std::max(opts.draws, 0));
    const double floor_draws = std::max(static_cast<double>(opts.min_draws), std::ceil(1.0 / alpha) - 1.0);
    if (static_cast<double>(b_draws) < floor_draws) {
        throw Error(ErrorKind::InsufficientDraws, "baselines",
                    "step-down needs at least " + std::to_string(static_cast<long>(floor_draws)) + " null draws");
    }
    const std::size_t p = observed.size();
    const auto kk = static_cast<std::size_t>(k);
    const auto m = static_cast<std::size_t>(std::floor(static_cast<double>(b_draws + 1) * alpha));
    if (m == 0 || p == 0) return {};

    std::vector<double> draws(b_draws * p);
    {
        std::vector<double> row(p);
        for (std::size_t b = 0; b < b_draws; ++b) {
            fill(row, rng);
            if (row.size() != p) throw Error(ErrorKind::DimensionError, "baselines", "null sampler returned wrong length");
            std::copy(row.begin(), row.end(), draws.begin() + static_cast<std::ptrdiff_t>(b * p));
        }
    }
    constexpr double kNone = std::numeric_limits<double>::infinity();

    const auto order = ascending_pvalue_order(observed);
    std::vector<char> rejected_flag(p, 0);
    std::vector<std::size_t> rejected;
    std::vector<double> kth(b_draws);
    std::vector<double> buf;
    std::vector<std::vector<double>> rem_small(b_draws);

    while (true) {
        // k smallest null scores over the remaining set, per draw.
        for (std::size_t b = 0; b < b_draws; ++b) {
            const double* row = draws.data() + b * p;
            buf.clear();
            for (std::size_t j = 0; j < p; ++j) {
                if (!rejected_flag[j]) buf.push_back(row[j]);
            }
            const std::size_t keep = std::min(kk, buf.size());
            std::partial_sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(keep), buf.end());
            rem_small[b].assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(keep));
        }

        auto critical_for = [&](const std::vector<std::size_t>& extra) {
            for (std::size_t b = 0; b < b_draws; ++b) {
                const double* row = draws.data() + b * p;
                buf.assign(rem_small[b].begin(), rem_small[b].end());
                for (std::size_t j : extra) buf.push_back(row[j]);
                if (buf.size() < kk) {
                    kth[b] = kNone;  // fewer than k hypotheses: no k-th false rejection possible
                    continue;
                }
                std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(kk - 1), buf.end());
                kth[b] = buf[kk - 1];
            }
            std::nth_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(m - 1), kth.end());
            return kth[m - 1];
        };

        const std::size_t subset_size = std::min(kk - 1, rejected.size());
        double crit = kNone;
        if (subset_size == 0) {
            crit = critical_for({});
        } else if (binomial_count(rejected.size(), subset_size) <= static_cast<double>(opts.max_subsets)) {
            std::vector<std::size_t> extra(subset_size);
            for_each_combination(rejected.size(), subset_size, [&](const std::vector<std::size_t>& idx) {
                for (std::size_t i = 0; i < subset_size; ++i) extra[i] = rejected[idx[i]];
                crit = std::min(crit, critical_for(extra));
            });
        } else {
            std::vector<std::size_t> by_score = rejected;
            std::sort(by_score.begin(), by_score.end(),
                      [&](std::size_t a, std::size_t b) { return observed[a] > observed[b]; });
            by_score.resize(subset_size);
            crit = critical_for(by_score);
        }

        std::vector<std::size_t> fresh;
        for (std::size_t j : order) {
            if (!rejected_flag[j] && observed[j] <= crit) fresh.push_back(j);
        }
        if (fresh.empty()) break;
        for (std::size_t j : fresh) {
            rejected_flag[j] = 1;
            rejected.push_back(j);
        }
        if (rejected.size() < kk || rejected.size() == p) break;
    }
    return rejected;
}

}  // namespace detail

/// Generic resampling step-down for the k-FWER.
///
/// Each stage's critical value is the m-th smallest, m = floor((B+1)α), of the
/// B null draws of the k-th smallest p-value over (not yet rejected ∪ K),
/// minimized over subsets K of k-1 already rejected hypotheses. A stage
/// rejects every remaining hypothesis with p <= critical value; the scan stops
/// when a stage adds nothing.
///
/// `null_sampler(rng)` returns one joint null draw of the p-value vector.
template <class Sampler>
std::vector<std::size_t> stepdown_generic(const PValueVector& pv, int k, double alpha, Sampler&& null_sampler,
                                          Engine& rng, const StepdownOptions& opts = {}) {
    auto fill = [&](std::vector<double>& row, Engine& r) { row = null_sampler(r); };
    return detail::stepdown_scores(pv.p_values, k, alpha, fill, rng, opts);
}

/// The same step-down with the multivariate-t null, run on -|t| instead of
/// p-values. Identical rejections to `stepdown_generic` with the same sampler
/// and seed, without evaluating the t distribution function per draw.
inline std::vector<std::size_t> stepdown_mvt(const PValueVector& pv, int k, double alpha, MvtNullSampler& sampler,
                                             Engine& rng, const StepdownOptions& opts = {}) {
    if (pv.t_stats.size() != pv.size() || sampler.size() != pv.size() || sampler.dof() != pv.dof) {
        throw Error(ErrorKind::DimensionError, "baselines", "sampler does not match the p-value vector");
    }
    std::vector<double> observed(pv.size());
    for (std::size_t j = 0; j < observed.size(); ++j) observed[j] = -std::abs(pv.t_stats[j]);
    auto fill = [&](std::vector<double>& row, Engine& r) { sampler.draw_scores_into(row, r); };
    return detail::stepdown_scores(observed, k, alpha, fill, rng, opts);
}

}  // namespace kfwer
