#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kfwer/csv.hpp"
#include "kfwer/error.hpp"
#include "kfwer/knockoff.hpp"
#include "kfwer/select.hpp"

namespace kfwer {

/// Raw regression data: design columns with labels, and a response whose
/// missing entries are flagged in `response_present`.
struct Dataset {
    MatrixXd design;
    std::vector<std::string> labels;
    VectorXd response;
    std::vector<bool> response_present;
    std::string response_label;

    Index rows() const { return design.rows(); }
    Index cols() const { return design.cols(); }
};

/// Reads a headered CSV. `response_column` names the response; columns in
/// `exclude` are ignored; every other column is part of the design. An empty
/// response cell marks a missing response; an empty design cell is an error.
inline Dataset dataset_from_table(const csv::Table& t, const std::string& response_column,
                                  const std::vector<std::string>& exclude = {}) {
    const auto resp = t.column(response_column);
    if (!resp) {
        throw Error(ErrorKind::ConfigError, "data_cli",
                    t.source + ": response column '" + response_column + "' not found");
    }
    std::vector<std::size_t> design_cols;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c == *resp) continue;
        if (std::find(exclude.begin(), exclude.end(), t.header[c]) != exclude.end()) continue;
        design_cols.push_back(c);
    }
    Dataset ds;
    ds.response_label = response_column;
    const auto n = static_cast<Index>(t.rows.size());
    ds.design.resize(n, static_cast<Index>(design_cols.size()));
    ds.response = VectorXd::Zero(n);
    ds.response_present.assign(t.rows.size(), false);
    for (std::size_t c : design_cols) ds.labels.push_back(t.header[c]);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (const auto y = csv::parse_cell(t, r, *resp)) {
            ds.response(static_cast<Index>(r)) = *y;
            ds.response_present[r] = true;
        }
        for (std::size_t i = 0; i < design_cols.size(); ++i) {
            const auto v = csv::parse_cell(t, r, design_cols[i]);
            if (!v) {
                throw Error(ErrorKind::ParseError, "data_cli",
                            t.source + ": line " + std::to_string(t.line_numbers[r]) + ", column " +
                                std::to_string(design_cols[i] + 1) + " (" + t.header[design_cols[i]] +
                                "): missing design value; impute before analysis");
            }
            ds.design(static_cast<Index>(r), static_cast<Index>(i)) = *v;
        }
    }
    return ds;
}

inline Dataset read_dataset(const std::string& path, const std::string& response_column,
                            const std::vector<std::string>& exclude = {}) {
    return dataset_from_table(csv::read_table(path), response_column, exclude);
}

/// Drops rows with a missing response, then design columns with fewer than
/// `min_mutations` nonzero entries among the remaining rows, then checks that
/// the result has full column rank. Rank deficiency is an error listing the
/// dependent columns; nothing is dropped silently.
inline Dataset clean_dataset(const Dataset& ds, int min_mutations) {
    if (min_mutations < 1) throw Error(ErrorKind::ConfigError, "data_cli", "min_mutations must be >= 1");
    std::vector<Index> keep_rows;
    for (Index r = 0; r < ds.rows(); ++r) {
        if (ds.response_present[static_cast<std::size_t>(r)]) keep_rows.push_back(r);
    }
    std::vector<Index> keep_cols;
    for (Index c = 0; c < ds.cols(); ++c) {
        int count = 0;
        for (Index r : keep_rows) count += ds.design(r, c) != 0.0 ? 1 : 0;
        if (count >= min_mutations) keep_cols.push_back(c);
    }
    if (keep_rows.empty() || keep_cols.empty()) {
        throw Error(ErrorKind::EmptyDataset, "data_cli",
                    "cleaning left " + std::to_string(keep_rows.size()) + " rows and " +
                        std::to_string(keep_cols.size()) + " columns");
    }

    Dataset out;
    out.response_label = ds.response_label;
    out.design.resize(static_cast<Index>(keep_rows.size()), static_cast<Index>(keep_cols.size()));
    out.response.resize(static_cast<Index>(keep_rows.size()));
    out.response_present.assign(keep_rows.size(), true);
    for (std::size_t i = 0; i < keep_rows.size(); ++i) {
        out.response(static_cast<Index>(i)) = ds.response(keep_rows[i]);
        for (std::size_t j = 0; j < keep_cols.size(); ++j) {
            out.design(static_cast<Index>(i), static_cast<Index>(j)) = ds.design(keep_rows[i], keep_cols[j]);
        }
    }
    for (Index c : keep_cols) out.labels.push_back(ds.labels[static_cast<std::size_t>(c)]);

    Eigen::ColPivHouseholderQR<MatrixXd> qr(out.design);
    qr.setThreshold(1e-10);
    if (qr.rank() < out.design.cols()) {
        std::string cols;
        for (Index i = qr.rank(); i < out.design.cols(); ++i) {
            if (!cols.empty()) cols += ", ";
            cols += out.labels[static_cast<std::size_t>(qr.colsPermutation().indices()(i))];
        }
        throw Error(ErrorKind::RankDeficientAfterCleaning, "data_cli",
                    "design is rank deficient after cleaning (rank " + std::to_string(qr.rank()) + " of " +
                        std::to_string(out.design.cols()) + "); dependent columns: " + cols);
    }
    return out;
}

/// Column labels treated as true signals.
struct TruthPanel {
    std::set<std::string> labels;
};

/// One label per line; blank lines and '#' comments are skipped.
inline TruthPanel read_panel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "data_cli", "cannot open panel file " + path);
    TruthPanel panel;
    std::string line;
    while (std::getline(in, line)) {
        const std::string s = csv::trim(line);
        if (!s.empty() && s[0] != '#') panel.labels.insert(s);
    }
    return panel;
}

/// Panel labels that do not name any column (reported as warnings).
inline std::vector<std::string> unknown_panel_labels(const TruthPanel& panel, const std::vector<std::string>& labels) {
    const std::set<std::string> universe(labels.begin(), labels.end());
    std::vector<std::string> out;
    for (const auto& l : panel.labels) {
        if (!universe.count(l)) out.push_back(l);
    }
    return out;
}

struct PanelScore {
    std::size_t true_count = 0;
    std::size_t total_count = 0;
};

inline PanelScore score_against_panel(const std::vector<std::size_t>& rejected, const std::vector<std::string>& labels,
                                      const TruthPanel& panel) {
    PanelScore s;
    for (std::size_t j : rejected) {
        if (j >= labels.size()) {
            throw Error(ErrorKind::UnknownLabel, "data_cli", "rejected index " + std::to_string(j) + " has no label");
        }
        ++s.total_count;
        if (panel.labels.count(labels[j])) ++s.true_count;
    }
    return s;
}

inline PanelScore score_against_panel(const SelectionResult& result, const std::vector<std::string>& labels,
                                      const TruthPanel& panel) {
    return score_against_panel(result.rejected, labels, panel);
}

/// FDR-mode comparator on the same (W, χ): the knockoff+ threshold
/// T = min{t : (1 + #{χ=-1, W>=t}) / max(1, #{χ=+1, W>=t}) <= q} over t in {W_j > 0};
/// rejects {χ = +1, W >= T}.
inline SelectionResult fdr_knockoff_select(const KnockoffStats& stats, double q) {
    if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::ConfigError, "data_cli", "FDR level q must lie in (0, 1)");
    SelectionResult res;
    res.threshold = std::numeric_limits<double>::infinity();
    std::vector<double> ts;
    for (double w : stats.w) {
        if (w > 0.0) ts.push_back(w);
    }
    std::sort(ts.begin(), ts.end());
    for (double t : ts) {
        std::size_t pos = 0, neg = 0;
        for (std::size_t j = 0; j < stats.p(); ++j) {
            if (stats.w[j] >= t) {
                pos += stats.chi[j] == 1;
                neg += stats.chi[j] == -1;
            }
        }
        if ((1.0 + static_cast<double>(neg)) / static_cast<double>(std::max<std::size_t>(1, pos)) <= q) {
            res.threshold = t;
            break;
        }
    }
    for (std::size_t j : stats.order) {
        if (stats.chi[j] == 1 && stats.w[j] >= res.threshold) res.rejected.push_back(j);
    }
    return res;
}

}  // namespace kfwer
