#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "kfwer/error.hpp"
#include "kfwer/rng.hpp"

namespace kfwer {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Numerical tolerances shared by the construction routines.
struct Tolerances {
    double unit_norm = 1e-10;  // |‖X_j‖ - 1|
    double rank_rel = 1e-10;   // smallest singular value relative to largest
    double eig_clip = 1e-10;   // negative eigenvalues above -eig_clip are noise
    double unit_diag = 1e-8;   // Gram diagonal must be 1 within this
};

namespace detail {

inline void check_full_rank(const MatrixXd& m, double rank_rel, const char* module) {
    Eigen::BDCSVD<MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return;
    const double largest = sv(0);
    const double smallest = sv(sv.size() - 1);
    if (!(smallest > rank_rel * largest)) {
        throw Error(ErrorKind::RankDeficient, module,
                    "design is rank deficient: smallest singular value " + std::to_string(smallest) +
                        " <= " + std::to_string(rank_rel) + " * " + std::to_string(largest));
    }
}

}  // namespace detail

/// An n x p design with unit-norm columns, full column rank and n >= p.
/// Only obtainable through validation, so holders may rely on the invariants.
class DesignMatrix {
public:
    /// Wraps a matrix whose columns are already unit norm, checking every invariant.
    static DesignMatrix from_normalized(MatrixXd values, const Tolerances& tol = {}) {
        if (values.rows() < values.cols()) {
            throw Error(ErrorKind::DimensionError, "knockoff_construct",
                        "need n >= p, got n=" + std::to_string(values.rows()) +
                            " p=" + std::to_string(values.cols()));
        }
        for (Index j = 0; j < values.cols(); ++j) {
            const double norm = values.col(j).norm();
            if (norm == 0.0) {
                throw Error(ErrorKind::ZeroColumn, "knockoff_construct",
                            "column " + std::to_string(j) + " is all zero");
            }
            if (std::abs(norm - 1.0) > tol.unit_norm) {
                throw Error(ErrorKind::DimensionError, "knockoff_construct",
                            "column " + std::to_string(j) + " is not unit norm");
            }
        }
        detail::check_full_rank(values, tol.rank_rel, "knockoff_construct");
        return DesignMatrix(std::move(values));
    }

    Index n() const { return values_.rows(); }
    Index p() const { return values_.cols(); }
    const MatrixXd& values() const { return values_; }
    MatrixXd gram() const { return values_.transpose() * values_; }

    /// Same design with `rows` zero rows appended; norms and rank are unchanged.
    DesignMatrix with_zero_rows(Index rows) const {
        MatrixXd padded = MatrixXd::Zero(n() + rows, p());
        padded.topRows(n()) = values_;
        return DesignMatrix(std::move(padded));
    }

private:
    explicit DesignMatrix(MatrixXd values) : values_(std::move(values)) {}
    MatrixXd values_;
};

/// Scales every column of `raw` to unit ℓ2 norm and checks rank.
inline DesignMatrix normalize_columns(const MatrixXd& raw, const Tolerances& tol = {}) {
    if (raw.rows() < raw.cols()) {
        throw Error(ErrorKind::DimensionError, "knockoff_construct",
                    "need n >= p, got n=" + std::to_string(raw.rows()) + " p=" + std::to_string(raw.cols()));
    }
    MatrixXd scaled = raw;
    for (Index j = 0; j < raw.cols(); ++j) {
        const double norm = raw.col(j).norm();
        if (norm == 0.0) {
            throw Error(ErrorKind::ZeroColumn, "knockoff_construct",
                        "column " + std::to_string(j) + " is all zero");
        }
        scaled.col(j) /= norm;
    }
    return DesignMatrix::from_normalized(std::move(scaled), tol);
}

/// The pair (X, X̃) with its s vector. `augmented` is [X, X̃] (n x 2p).
/// `padded_rows` counts zero rows appended to X before construction.
struct KnockoffAugment {
    MatrixXd original;
    MatrixXd knockoff;
    VectorXd s;
    MatrixXd augmented;
    Index padded_rows = 0;

    Index n() const { return original.rows(); }
    Index p() const { return original.cols(); }
};

inline KnockoffAugment make_augment(MatrixXd original, MatrixXd knockoff, VectorXd s, Index padded_rows = 0) {
    KnockoffAugment aug;
    aug.augmented.resize(original.rows(), original.cols() + knockoff.cols());
    aug.augmented << original, knockoff;
    aug.original = std::move(original);
    aug.knockoff = std::move(knockoff);
    aug.s = std::move(s);
    aug.padded_rows = padded_rows;
    return aug;
}

/// Equicorrelated choice s_j = min(2 λ_min(Σ), 1) for a unit-diagonal Gram matrix Σ.
inline VectorXd equicorrelated_s(const MatrixXd& gram, const Tolerances& tol = {}) {
    if (gram.rows() != gram.cols()) {
        throw Error(ErrorKind::DimensionError, "knockoff_construct", "Gram matrix must be square");
    }
    const Index p = gram.rows();
    const double asym = (gram - gram.transpose()).cwiseAbs().maxCoeff();
    if (p > 0 && asym > tol.unit_diag) {
        throw Error(ErrorKind::NotPositiveDefinite, "knockoff_construct", "Gram matrix is not symmetric");
    }
    for (Index j = 0; j < p; ++j) {
        if (std::abs(gram(j, j) - 1.0) > tol.unit_diag) {
            throw Error(ErrorKind::NotPositiveDefinite, "knockoff_construct",
                        "Gram matrix diagonal must be 1 (normalize columns first)");
        }
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lambda_min = p > 0 ? eig.eigenvalues()(0) : 1.0;
    if (!(lambda_min > 0.0)) {
        throw Error(ErrorKind::NotPositiveDefinite, "knockoff_construct",
                    "Gram matrix has smallest eigenvalue " + std::to_string(lambda_min));
    }
    return VectorXd::Constant(p, std::min(2.0 * lambda_min, 1.0));
}

struct ConstructOptions {
    /// For p <= n < 2p, pad X with 2p - n zero rows instead of failing.
    bool allow_row_augment = false;
    Tolerances tol{};
};

/// Builds X̃ = X(I - Σ⁻¹D) + ŨC with D = Diag(s), CᵀC = 2D - DΣ⁻¹D and Ũ an
/// orthonormal basis of the complement of span(X) taken from the Householder
/// QR of X. The result depends only on (X, s).
inline KnockoffAugment construct_knockoffs(const DesignMatrix& design, const VectorXd& s,
                                           const ConstructOptions& opts = {}) {
    const Index p = design.p();
    if (s.size() != p) {
        throw Error(ErrorKind::DimensionError, "knockoff_construct", "s must have length p");
    }
    if ((s.array() < 0.0).any()) {
        throw Error(ErrorKind::InfeasibleS, "knockoff_construct", "s must be nonnegative");
    }

    Index padded = 0;
    const DesignMatrix* x = &design;
    DesignMatrix padded_design = design;
    if (design.n() < 2 * p) {
        if (!opts.allow_row_augment) {
            throw Error(ErrorKind::DimensionError, "knockoff_construct",
                        "need n >= 2p for knockoffs (n=" + std::to_string(design.n()) +
                            ", p=" + std::to_string(p) + "); enable row augmentation to pad");
        }
        padded = 2 * p - design.n();
        padded_design = design.with_zero_rows(padded);
        x = &padded_design;
    }
    const MatrixXd& xv = x->values();
    const Index n = xv.rows();

    const MatrixXd sigma = x->gram();
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::NotPositiveDefinite, "knockoff_construct", "XᵀX is not positive definite");
    }
    // Σ⁻¹D
    const MatrixXd sigma_inv_d = llt.solve(MatrixXd(s.asDiagonal()));
    MatrixXd a = -(s.asDiagonal() * sigma_inv_d);
    a.diagonal() += 2.0 * s;
    a = 0.5 * (a + a.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(a);
    VectorXd ev = eig.eigenvalues();
    if (p > 0 && ev(0) < -opts.tol.eig_clip) {
        throw Error(ErrorKind::InfeasibleS, "knockoff_construct",
                    "2Diag(s) - Diag(s)Σ⁻¹Diag(s) has eigenvalue " + std::to_string(ev(0)));
    }
    ev = ev.cwiseMax(0.0);
    const MatrixXd c = ev.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();

    Eigen::HouseholderQR<MatrixXd> qr(xv);
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, 2 * p);
    const MatrixXd u_perp = q.rightCols(p);

    MatrixXd knock = xv - xv * sigma_inv_d + u_perp * c;
    return make_augment(xv, std::move(knock), s, padded);
}

/// Response counterpart of row augmentation: appends `extra_rows` entries drawn
/// from N(0, σ̂²), with σ̂² the OLS residual variance of y on the unpadded X.
inline VectorXd augment_response(const DesignMatrix& design, const VectorXd& y, Index extra_rows, Engine& rng) {
    if (y.size() != design.n()) {
        throw Error(ErrorKind::DimensionError, "knockoff_construct", "response length must equal n");
    }
    if (extra_rows == 0) return y;
    const Index dof = design.n() - design.p();
    if (dof < 1) {
        throw Error(ErrorKind::DimensionError, "knockoff_construct",
                    "row augmentation needs n > p to estimate the noise variance");
    }
    const MatrixXd& x = design.values();
    const VectorXd beta = x.colPivHouseholderQr().solve(y);
    const double sigma = std::sqrt((y - x * beta).squaredNorm() / static_cast<double>(dof));
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd out(y.size() + extra_rows);
    out.head(y.size()) = y;
    for (Index i = 0; i < extra_rows; ++i) out(y.size() + i) = sigma * normal(rng);
    return out;
}

struct IdentityCheck {
    double gram_deviation = 0.0;   // ‖X̃ᵀX̃ - XᵀX‖_max
    double cross_deviation = 0.0;  // ‖XᵀX̃ - (XᵀX - Diag(s))‖_max
    bool pass = false;
};

inline IdentityCheck verify_identities(const KnockoffAugment& aug, double tol = 1e-8) {
    IdentityCheck out;
    if (aug.p() == 0) {
        out.pass = true;
        return out;
    }
    const MatrixXd g = aug.original.transpose() * aug.original;
    out.gram_deviation = (aug.knockoff.transpose() * aug.knockoff - g).cwiseAbs().maxCoeff();
    MatrixXd target = g;
    target.diagonal() -= aug.s;
    out.cross_deviation = (aug.original.transpose() * aug.knockoff - target).cwiseAbs().maxCoeff();
    out.pass = out.gram_deviation <= tol && out.cross_deviation <= tol;
    return out;
}

}  // namespace kfwer
