#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "kfwer/error.hpp"
#include "kfwer/lasso.hpp"
#include "kfwer/rng.hpp"

namespace kfwer {

/// Per-variable knockoff statistics. `order` lists variable indices by
/// descending w, ties broken by ascending index.
struct KnockoffStats {
    std::vector<double> w;
    std::vector<int> chi;  // -1, 0 or +1
    std::vector<std::size_t> order;

    std::size_t p() const { return w.size(); }
};

/// v calibrated from (k, α). In the randomized branch `v_used` is v with
/// probability omega and v + 1 otherwise; `draw` is the uniform that decided it.
struct Calibration {
    int k = 1;
    double alpha = 0.05;
    int v = 0;
    double omega = 1.0;
    bool randomized = false;
    int v_used = 0;
    double draw = 0.0;
};

/// Rejected variable indices (0-based, in rejection order) and scan metadata.
/// `cutoff_index` is j*, the number of ordered positions scanned (0 when v = 0).
/// `threshold` is T_v: +inf when v = 0, -inf when fewer than v negatives exist.
struct SelectionResult {
    std::vector<std::size_t> rejected;
    double threshold = -std::numeric_limits<double>::infinity();
    std::size_t cutoff_index = 0;
    int v_used = 0;
    std::size_t topped_up = 0;
    std::size_t augmented = 0;
};

inline std::vector<std::size_t> descending_order(const std::vector<double>& w) {
    std::vector<std::size_t> order(w.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    return order;
}

/// W_j = max(Z_j, Z̃_j), χ_j = sgn(Z_j - Z̃_j).
inline KnockoffStats compute_stats(const VectorXd& z) {
    if (z.size() % 2 != 0) {
        throw Error(ErrorKind::DimensionError, "kfwer_select", "entry times must have even length 2p");
    }
    const auto p = static_cast<std::size_t>(z.size() / 2);
    KnockoffStats s;
    s.w.resize(p);
    s.chi.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
        const double orig = z(static_cast<Index>(j));
        const double knock = z(static_cast<Index>(j + p));
        s.w[j] = std::max(orig, knock);
        s.chi[j] = orig > knock ? 1 : (orig < knock ? -1 : 0);
    }
    s.order = descending_order(s.w);
    return s;
}

inline KnockoffStats compute_stats(const EntryTimes& entry) { return compute_stats(entry.z); }

/// Builds stats directly from (w, chi); used by fixtures and the null model.
inline KnockoffStats make_stats(std::vector<double> w, std::vector<int> chi) {
    KnockoffStats s;
    s.order = descending_order(w);
    s.w = std::move(w);
    s.chi = std::move(chi);
    return s;
}

namespace detail {

inline double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log of C(i+v-1, i) 2^{-i-v}
inline double log_nb_term(long i, long v) {
    return std::lgamma(static_cast<double>(i + v)) - std::lgamma(static_cast<double>(i + 1)) -
           std::lgamma(static_cast<double>(v)) - static_cast<double>(i + v) * std::log(2.0);
}

}  // namespace detail

/// P(NB(v, 1/2) >= k): the probability of at least k successes before the
/// v-th failure in fair coin flips.
///
/// For v + k <= 64 this is computed exactly as the integer 2^N - S over 2^N
/// with N = k - 1 + v and S the scaled finite sum, so there is no cancellation.
/// Larger arguments use log-space sums, taking whichever of the lower sum and
/// the upper tail is below 1/2 directly.
inline double nb_tail(long v, long k) {
    if (v < 0 || k < 1) throw Error(ErrorKind::ConfigError, "kfwer_select", "nb_tail needs v >= 0, k >= 1");
    if (v == 0) return 0.0;
    if (v + k <= 64) {
        using u128 = unsigned __int128;
        const long n = k - 1 + v;
        // S = sum_{i<k} C(i+v-1, i) 2^{k-1-i}
        u128 sum = 0;
        u128 binom = 1;
        for (long i = 0; i < k; ++i) {
            if (i > 0) binom = binom * static_cast<u128>(i + v - 1) / static_cast<u128>(i);
            sum += binom << (k - 1 - i);
        }
        const u128 total = static_cast<u128>(1) << n;
        return std::ldexp(static_cast<double>(total - sum), static_cast<int>(-n));
    }
    double log_cdf = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < k; ++i) log_cdf = detail::log_sum_exp(log_cdf, detail::log_nb_term(i, v));
    if (log_cdf < std::log(0.5)) return -std::expm1(log_cdf);

    double log_tail = -std::numeric_limits<double>::infinity();
    for (long i = k;; ++i) {
        const double term = detail::log_nb_term(i, v);
        log_tail = detail::log_sum_exp(log_tail, term);
        // Terms decrease geometrically once i >= v - 1.
        if (i >= v && term < log_tail - 40.0) break;
    }
    return std::exp(log_tail);
}

/// Largest v with nb_tail(v, k) <= alpha; 0 when no positive v qualifies.
inline Calibration choose_v(int k, double alpha) {
    if (k < 1) throw Error(ErrorKind::ConfigError, "kfwer_select", "k must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::ConfigError, "kfwer_select", "alpha must lie in (0, 1)");
    Calibration cal;
    cal.k = k;
    cal.alpha = alpha;
    int v = 0;
    while (nb_tail(v + 1, k) <= alpha) ++v;
    cal.v = v;
    cal.v_used = v;
    cal.omega = 1.0;
    cal.randomized = false;
    return cal;
}

/// Randomized calibration for a given uniform draw u in [0, 1): mixes v
/// (probability ω) and v + 1 so the mixture has P(V >= k) = α under the
/// coin-flip bound.
inline Calibration calibrate_with_draw(int k, double alpha, double u) {
    Calibration cal = choose_v(k, alpha);
    const double lo = nb_tail(cal.v, k);
    const double hi = nb_tail(cal.v + 1, k);
    cal.randomized = true;
    cal.omega = (hi - alpha) / (hi - lo);
    cal.draw = u;
    cal.v_used = u < cal.omega ? cal.v : cal.v + 1;
    return cal;
}

/// Consumes exactly one uniform variate from `rng`.
inline Calibration choose_v_randomized(int k, double alpha, Engine& rng) {
    return calibrate_with_draw(k, alpha, uniform01(rng));
}

/// Ordered scan: walk variables by descending W, stop at the v-th χ = -1
/// (or the end), and reject every χ = +1 seen. χ = 0 is neither rejected nor
/// counted as a negative.
inline SelectionResult select(const KnockoffStats& stats, int v) {
    if (v < 0) throw Error(ErrorKind::ConfigError, "kfwer_select", "v must be >= 0");
    SelectionResult res;
    res.v_used = v;
    if (v == 0) {
        res.threshold = std::numeric_limits<double>::infinity();
        res.cutoff_index = 0;
        return res;
    }
    const std::size_t p = stats.p();
    int negatives = 0;
    std::size_t cutoff = p;
    for (std::size_t pos = 0; pos < p; ++pos) {
        const std::size_t j = stats.order[pos];
        if (stats.chi[j] == -1 && ++negatives == v) {
            cutoff = pos + 1;
            res.threshold = stats.w[j];
            break;
        }
    }
    res.cutoff_index = cutoff;
    for (std::size_t pos = 0; pos < cutoff; ++pos) {
        const std::size_t j = stats.order[pos];
        if (stats.chi[j] == 1) res.rejected.push_back(j);
    }
    return res;
}

/// T_v = sup{t > 0 : #{j : W_j >= t, χ_j = -1} = v}.
inline double threshold_tv(const KnockoffStats& stats, int v) {
    if (v == 0) return std::numeric_limits<double>::infinity();
    std::vector<double> neg;
    for (std::size_t j = 0; j < stats.p(); ++j) {
        if (stats.chi[j] == -1) neg.push_back(stats.w[j]);
    }
    if (neg.size() < static_cast<std::size_t>(v)) return -std::numeric_limits<double>::infinity();
    std::nth_element(neg.begin(), neg.begin() + (v - 1), neg.end(), std::greater<>());
    return neg[static_cast<std::size_t>(v - 1)];
}

/// Threshold form: {j : W_j >= T_v, χ_j = +1}, returned in ascending index order.
/// Agrees with `select` whenever all W_j are distinct.
inline std::vector<std::size_t> select_by_threshold(const KnockoffStats& stats, int v) {
    const double t = threshold_tv(stats, v);
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < stats.p(); ++j) {
        if (stats.chi[j] == 1 && stats.w[j] >= t) out.push_back(j);
    }
    return out;
}

/// Extends the rejection set with the largest-W positive-χ variables until it
/// has k - 1 members or positives run out. Never removes rejections.
inline SelectionResult top_up(SelectionResult result, const KnockoffStats& stats, int k) {
    const auto target = static_cast<std::size_t>(std::max(k - 1, 0));
    if (result.rejected.size() >= target) return result;
    std::vector<char> taken(stats.p(), 0);
    for (std::size_t j : result.rejected) taken[j] = 1;
    for (std::size_t j : stats.order) {
        if (result.rejected.size() >= target) break;
        if (stats.chi[j] == 1 && !taken[j]) {
            result.rejected.push_back(j);
            taken[j] = 1;
            ++result.topped_up;
        }
    }
    return result;
}

/// θ(a) = (a+2)^{a+2} / (2^{a+2} (a+1)^{a+1}), in log form.
inline double chernoff_log_theta(double a) {
    return (a + 2.0) * std::log(a + 2.0) - (a + 2.0) * std::log(2.0) - (a + 1.0) * std::log(a + 1.0);
}

/// Bound θ(a)^v on P(V >= (1+a)v).
inline double chernoff_bound(int v, double a) {
    if (v < 1 || !(a > 0.0)) throw Error(ErrorKind::ConfigError, "kfwer_select", "chernoff_bound needs v >= 1, a > 0");
    return std::exp(static_cast<double>(v) * chernoff_log_theta(a));
}

/// Scan with the calibrated v, then optionally top up to k - 1 rejections.
inline SelectionResult run_kfwer(const KnockoffStats& stats, const Calibration& cal, bool do_top_up) {
    SelectionResult res = select(stats, cal.v_used);
    if (do_top_up) res = top_up(std::move(res), stats, cal.k);
    return res;
}

}  // namespace kfwer
