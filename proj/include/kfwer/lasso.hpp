#pragma once

#include <cassert>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kfwer/error.hpp"
#include "kfwer/knockoff.hpp"

namespace kfwer {

/// λ grid and solver controls for the Lasso path.
struct PathSpec {
    int grid_size = 200;
    double grid_ratio = 1e-3;  // λ_min / λ_max
    double cd_tol = 1e-7;      // max KKT violation
    int max_iters = 10000;     // coordinate sweeps per λ

    void validate() const {
        if (grid_size < 2) throw Error(ErrorKind::ConfigError, "lasso_path", "grid_size must be >= 2");
        if (!(grid_ratio > 0.0 && grid_ratio < 1.0))
            throw Error(ErrorKind::ConfigError, "lasso_path", "grid_ratio must lie in (0, 1)");
        if (!(cd_tol > 0.0)) throw Error(ErrorKind::ConfigError, "lasso_path", "cd_tol must be positive");
        if (max_iters < 1) throw Error(ErrorKind::ConfigError, "lasso_path", "max_iters must be positive");
    }

    /// λ_i = λ_max · ratio^{i/(G-1)}, i = 0..G-1.
    std::vector<double> grid(double lambda_max) const {
        std::vector<double> out(static_cast<std::size_t>(grid_size));
        for (int i = 0; i < grid_size; ++i) {
            out[static_cast<std::size_t>(i)] =
                lambda_max * std::pow(grid_ratio, static_cast<double>(i) / static_cast<double>(grid_size - 1));
        }
        return out;
    }
};

/// Entry times for the 2p columns of [X, X̃]: originals first, knockoffs second.
struct EntryTimes {
    VectorXd z;
    double lambda_max = 0.0;
};

/// Coordinate descent for (1/2)‖y - Ab‖² + λ‖b‖₁ using covariance updates:
/// the Gram matrix AᵀA and Aᵀy are formed once and reused along a path.
class CovarianceLasso {
public:
    CovarianceLasso(const MatrixXd& a, const VectorXd& y) : gram_(a.transpose() * a), aty_(a.transpose() * y) {
        if (a.rows() != y.size()) {
            throw Error(ErrorKind::DimensionError, "lasso_path", "design rows must match response length");
        }
    }

    Index dim() const { return gram_.rows(); }
    const VectorXd& aty() const { return aty_; }

    /// Max KKT violation of b at λ.
    double kkt_violation(const VectorXd& b, double lambda) const {
        return kkt_from_gradient(aty_ - gram_ * b, b, lambda);
    }

    VectorXd solve(double lambda, const VectorXd& warm_start, double tol, int max_iters) const {
        if (lambda < 0.0) throw Error(ErrorKind::ConfigError, "lasso_path", "lambda must be nonnegative");
        if (warm_start.size() != dim()) {
            throw Error(ErrorKind::DimensionError, "lasso_path", "warm start has wrong length");
        }
        VectorXd b = warm_start;
        VectorXd grad = aty_ - gram_ * b;
        const Index m = dim();
        std::vector<Index> active;
        active.reserve(static_cast<std::size_t>(m));

        int sweeps = 0;
        while (sweeps < max_iters) {
            sweep_all(b, grad, lambda);
            ++sweeps;
            active.clear();
            for (Index j = 0; j < m; ++j) {
                if (b(j) != 0.0) active.push_back(j);
            }
            // Iterate on the active set until its coefficients settle.
            for (int inner = 0; inner < kInnerSweeps && sweeps < max_iters; ++inner) {
                double change = 0.0;
                for (Index j : active) change = std::max(change, update(j, b, grad, lambda));
                ++sweeps;
                if (change <= 0.1 * tol) break;
            }
            grad = aty_ - gram_ * b;
            if (kkt_from_gradient(grad, b, lambda) <= tol) {
                assert(kkt_violation(b, lambda) <= tol);
                return b;
            }
            if (newton_step(b, grad, lambda, tol)) return b;
        }
        throw Error(ErrorKind::NoConvergence, "lasso_path",
                    "coordinate descent did not reach KKT tolerance within " + std::to_string(max_iters) +
                        " sweeps at lambda=" + std::to_string(lambda));
    }

private:
    static constexpr int kInnerSweeps = 50;

    // Objective up to the constant ½‖y‖².
    double objective(const VectorXd& b, const VectorXd& grad, double lambda) const {
        // ½bᵀGb - cᵀb = -½bᵀ(c + grad) since grad = c - Gb.
        return -0.5 * b.dot(aty_ + grad) + lambda * b.lpNorm<1>();
    }

    // Solves the stationarity equations on the active set with its signs held
    // fixed, then moves toward that point, stopping where the first active
    // coordinate reaches zero. When the active Gram block is singular the
    // objective is linear along its null direction, so the move follows that
    // direction downhill instead. A move is kept only if the objective drops.
    // Returns true when the new point passes the full KKT check.
    bool newton_step(VectorXd& b, VectorXd& grad, double lambda, double tol) const {
        std::vector<Index> act;
        for (Index j = 0; j < b.size(); ++j) {
            if (b(j) != 0.0) act.push_back(j);
        }
        if (act.empty()) return false;
        const auto na = static_cast<Index>(act.size());
        MatrixXd g(na, na);
        VectorXd rhs(na);
        VectorXd ba(na);
        for (Index r = 0; r < na; ++r) {
            const Index i = act[static_cast<std::size_t>(r)];
            for (Index c = 0; c < na; ++c) g(r, c) = gram_(i, act[static_cast<std::size_t>(c)]);
            rhs(r) = aty_(i) - (b(i) > 0.0 ? lambda : -lambda);
            ba(r) = b(i);
        }
        const Eigen::LDLT<MatrixXd> ldlt(g);
        if (ldlt.info() != Eigen::Success) return false;
        const VectorXd x = ldlt.solve(rhs);
        if (!x.allFinite()) return false;
        if (move_toward(b, grad, lambda, act, x - ba, 1.0)) return kkt_from_gradient(grad, b, lambda) <= tol;

        // One step of inverse iteration from the Newton point.
        VectorXd v = ldlt.solve(x.normalized());
        if (!v.allFinite() || v.norm() == 0.0) return false;
        v.normalize();
        if ((g * v).norm() > 1e-8 * g.diagonal().maxCoeff()) return false;
        if ((rhs - g * ba).dot(v) < 0.0) v = -v;
        if (move_toward(b, grad, lambda, act, v, std::numeric_limits<double>::infinity())) {
            return kkt_from_gradient(grad, b, lambda) <= tol;
        }
        return false;
    }

    // b_A + t·d for the largest t <= t_max keeping every active sign, with
    // the blocking coordinate set to zero. Applied only if the objective drops.
    bool move_toward(VectorXd& b, VectorXd& grad, double lambda, const std::vector<Index>& act, const VectorXd& d,
                     double t_max) const {
        double t = t_max;
        Index blocking = -1;
        for (std::size_t r = 0; r < act.size(); ++r) {
            const double bi = b(act[r]);
            const double dr = d(static_cast<Index>(r));
            if ((bi > 0.0 && dr < 0.0) || (bi < 0.0 && dr > 0.0)) {
                const double tr = -bi / dr;
                if (tr < t) {
                    t = tr;
                    blocking = static_cast<Index>(r);
                }
            }
        }
        if (!std::isfinite(t) || t <= 0.0) return false;
        VectorXd cand = b;
        for (std::size_t r = 0; r < act.size(); ++r) {
            const Index i = act[r];
            cand(i) = static_cast<Index>(r) == blocking ? 0.0 : b(i) + t * d(static_cast<Index>(r));
            if ((cand(i) > 0.0) != (b(i) > 0.0)) cand(i) = 0.0;
        }
        VectorXd cand_grad = aty_ - gram_ * cand;
        if (!(objective(cand, cand_grad, lambda) < objective(b, grad, lambda))) return false;
        b = std::move(cand);
        grad = std::move(cand_grad);
        return true;
    }

    static double kkt_from_gradient(const VectorXd& grad, const VectorXd& b, double lambda) {
        double worst = 0.0;
        for (Index j = 0; j < b.size(); ++j) {
            const double v = b(j) == 0.0 ? std::max(0.0, std::abs(grad(j)) - lambda)
                                         : std::abs(grad(j) - (b(j) > 0.0 ? lambda : -lambda));
            worst = std::max(worst, v);
        }
        return worst;
    }

    // Returns |Δb_j| scaled by ‖A_j‖ so changes are comparable to gradients.
    double update(Index j, VectorXd& b, VectorXd& grad, double lambda) const {
        const double gjj = gram_(j, j);
        if (gjj <= 0.0) return 0.0;
        const double zj = grad(j) + gjj * b(j);
        double next = 0.0;
        if (zj > lambda) {
            next = (zj - lambda) / gjj;
        } else if (zj < -lambda) {
            next = (zj + lambda) / gjj;
        }
        const double delta = next - b(j);
        if (delta == 0.0) return 0.0;
        grad.noalias() -= gram_.col(j) * delta;
        b(j) = next;
        return std::abs(delta) * gjj;
    }

    void sweep_all(VectorXd& b, VectorXd& grad, double lambda) const {
        for (Index j = 0; j < dim(); ++j) update(j, b, grad, lambda);
    }

    MatrixXd gram_;
    VectorXd aty_;
};

/// Lasso solution at a single λ; KKT-checked to within spec.cd_tol.
inline VectorXd lasso_solve(const MatrixXd& a, const VectorXd& y, double lambda, const VectorXd& warm_start,
                            const PathSpec& spec = {}) {
    spec.validate();
    CovarianceLasso problem(a, y);
    return problem.solve(lambda, warm_start, spec.cd_tol, spec.max_iters);
}

/// Z_j = largest grid λ at which coordinate j of the path on [X, X̃] is nonzero.
///
/// The path runs from λ_max = ‖[X, X̃]ᵀy‖_∞ down to grid_ratio·λ_max with warm
/// starts. The KKT tolerance is applied relative to λ_max, so the statistics
/// are equivariant under rescaling of y.
inline EntryTimes entry_times(const KnockoffAugment& aug, const VectorXd& y, const PathSpec& spec = {}) {
    spec.validate();
    const MatrixXd& a = aug.augmented;
    if (y.size() != a.rows()) {
        throw Error(ErrorKind::DimensionError, "lasso_path",
                    "response length " + std::to_string(y.size()) + " does not match design rows " +
                        std::to_string(a.rows()));
    }
    CovarianceLasso problem(a, y);
    EntryTimes out;
    out.z = VectorXd::Zero(a.cols());
    out.lambda_max = problem.aty().size() > 0 ? problem.aty().cwiseAbs().maxCoeff() : 0.0;
    if (out.lambda_max == 0.0) return out;

    const double tol = spec.cd_tol * out.lambda_max;
    const std::vector<double> grid = spec.grid(out.lambda_max);
    VectorXd b = VectorXd::Zero(a.cols());
    for (std::size_t i = 1; i < grid.size(); ++i) {
        b = problem.solve(grid[i], b, tol, spec.max_iters);
        for (Index j = 0; j < b.size(); ++j) {
            if (b(j) != 0.0 && out.z(j) == 0.0) out.z(j) = grid[i];
        }
    }
    return out;
}

}  // namespace kfwer
