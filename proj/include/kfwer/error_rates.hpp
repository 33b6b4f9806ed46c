#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "kfwer/error.hpp"
#include "kfwer/rng.hpp"
#include "kfwer/select.hpp"

namespace kfwer {

/// FDX target: P(FDP > gamma) <= alpha, with k for the augmentation route.
struct FdxConfig {
    double gamma = 0.1;
    double alpha = 0.05;
    int k = 1;

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorKind::ConfigError, "error_rates", "gamma must lie in (0, 1)");
        if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::ConfigError, "error_rates", "alpha must lie in (0, 1)");
        if (k < 1) throw Error(ErrorKind::ConfigError, "error_rates", "k must be >= 1");
    }
};

/// E(V) <= E NB(v, 1/2) = v, so the largest admissible v is floor(budget).
inline int pfer_budget_to_v(double budget) {
    if (!(budget > 0.0)) throw Error(ErrorKind::ConfigError, "error_rates", "PFER budget must be positive");
    return static_cast<int>(std::floor(budget));
}

/// (k - 1 + r) / (R + r) <= gamma
inline bool fdx_ratio_ok(std::size_t k, std::size_t big_r, std::size_t r, double gamma) {
    return static_cast<double>(k - 1 + r) / static_cast<double>(big_r + r) <= gamma;
}

/// Largest r with (k - 1 + r)/(R + r) <= gamma; requires R >= 1 and (k - 1)/R <= gamma.
inline std::size_t fdx_extra_rejections(std::size_t k, std::size_t big_r, double gamma) {
    const double guess =
        std::floor((gamma * static_cast<double>(big_r) - static_cast<double>(k - 1)) / (1.0 - gamma));
    auto r = static_cast<std::size_t>(std::max(0.0, guess));
    // The closed form can be off by one at exact boundaries.
    while (fdx_ratio_ok(k, big_r, r + 1, gamma)) ++r;
    while (r > 0 && !fdx_ratio_ok(k, big_r, r, gamma)) --r;
    return r;
}

/// Augments a k-FWER rejection set for FDX control. With R base rejections:
/// if R = 0 or (k - 1)/R > gamma nothing is rejected; otherwise the r largest-W
/// positive-χ variables not yet rejected are added.
inline SelectionResult fdx_augment(const SelectionResult& base, int k, double gamma, const KnockoffStats& stats) {
    if (k < 1) throw Error(ErrorKind::ConfigError, "error_rates", "k must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorKind::ConfigError, "error_rates", "gamma must lie in (0, 1)");
    const std::size_t big_r = base.rejected.size();
    const auto kk = static_cast<std::size_t>(k);
    if (big_r == 0 || static_cast<double>(kk - 1) / static_cast<double>(big_r) > gamma) {
        SelectionResult empty = base;
        empty.rejected.clear();
        empty.topped_up = 0;
        empty.augmented = 0;
        return empty;
    }
    const std::size_t r = fdx_extra_rejections(kk, big_r, gamma);
    SelectionResult out = base;
    std::vector<char> taken(stats.p(), 0);
    for (std::size_t j : out.rejected) taken[j] = 1;
    for (std::size_t j : stats.order) {
        if (out.augmented >= r) break;
        if (stats.chi[j] == 1 && !taken[j]) {
            out.rejected.push_back(j);
            taken[j] = 1;
            ++out.augmented;
        }
    }
    return out;
}

struct KhatSearch {
    int k_hat = 1;
    bool capped = false;
};

/// Smallest k in 1..k_cap with R_k < k/gamma - 1; k_cap when none qualifies.
inline KhatSearch romano_wolf_khat(const std::function<std::size_t(int)>& rejections_for_k, double gamma,
                                   int k_cap) {
    for (int k = 1; k <= k_cap; ++k) {
        const double r = static_cast<double>(rejections_for_k(k));
        if (r < static_cast<double>(k) / gamma - 1.0) return {k, false};
    }
    return {k_cap, true};
}

struct RomanoWolfResult {
    SelectionResult selection;
    Calibration calibration;
    int k_hat = 1;
    bool capped = false;
};

/// Romano–Wolf style FDX heuristic: run the randomized k-FWER procedure (with
/// top-up) for k = 1, 2, ... and keep the rejections at the first k where
/// R_k < k/gamma - 1. One uniform is drawn and shared by every k. The k search
/// is capped at p.
inline RomanoWolfResult romano_wolf_fdx(const KnockoffStats& stats, double gamma, double alpha, Engine& rng) {
    FdxConfig{gamma, alpha, 1}.validate();
    const double u = uniform01(rng);
    const int cap = std::max<int>(1, static_cast<int>(stats.p()));
    std::vector<SelectionResult> runs;
    std::vector<Calibration> cals;
    auto rejections = [&](int k) {
        cals.push_back(calibrate_with_draw(k, alpha, u));
        runs.push_back(run_kfwer(stats, cals.back(), true));
        return runs.back().rejected.size();
    };
    const KhatSearch search = romano_wolf_khat(rejections, gamma, cap);
    RomanoWolfResult out;
    out.k_hat = search.k_hat;
    out.capped = search.capped;
    out.selection = runs[static_cast<std::size_t>(search.k_hat - 1)];
    out.calibration = cals[static_cast<std::size_t>(search.k_hat - 1)];
    return out;
}

}  // namespace kfwer
