#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kfwer/kfwer.hpp"

namespace kfwer::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Options shared by `select` and `analyze`.
struct DataOptions {
    std::string input;
    std::string response;
    std::vector<std::string> exclude;
    int min_mutations = 5;
    std::string panel;
    std::uint64_t seed = 0;
    std::string out;
    bool allow_row_augment = false;
    PathSpec path{};
};

struct SelectOptions {
    DataOptions data;
    int k = 1;
    double alpha = 0.05;
    bool no_randomize = false;
    bool no_topup = false;
    std::optional<double> fdr_q;
    bool baselines = false;
    int stepdown_draws = 2000;
    std::string stepup_constants;
};

struct AnalyzeOptions {
    DataOptions data;
    std::optional<double> pfer;
    std::optional<double> fdx_gamma;
    std::optional<double> rw_gamma;
    std::optional<int> k;
    double alpha = 0.05;
    bool no_randomize = false;
};

struct ConstructCliOptions {
    std::string input;
    std::string output;
    bool allow_row_augment = false;
};

struct SimulateOptions {
    std::string preset = "desk";
    std::string sweep = "rho";
    std::vector<double> grid;
    std::optional<int> replicates;
    std::uint64_t seed = 1;
    std::string out;
    int threads = 0;
    bool include_stepup = false;
    bool fixed_design = false;
    std::vector<std::string> procedures;
    std::string stepup_constants;
    std::optional<int> stepdown_draws;
};

inline std::string sibling(const std::string& path, const std::string& suffix) {
    fs::path p(path);
    fs::path stem = p.parent_path() / p.stem();
    return stem.string() + suffix;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "data_cli", "cannot write " + path);
    f << text;
}

inline json path_json(const PathSpec& p) {
    return json{{"grid_size", p.grid_size}, {"grid_ratio", p.grid_ratio}, {"cd_tol", p.cd_tol}, {"max_iters", p.max_iters}};
}

inline json manifest_base(const std::string& command, const std::vector<std::string>& argv) {
    return json{{"tool", "kfwer"},
                {"version", version},
                {"command", command},
                {"argv", argv},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"boost", BOOST_LIB_VERSION}};
}

inline json real_or_null(double x) {
    if (std::isfinite(x)) return csv::format_real(x);
    return x > 0 ? "inf" : "-inf";
}

struct LoadedData {
    Dataset cleaned;
    DesignMatrix design;
    std::size_t raw_rows = 0;
    std::size_t raw_cols = 0;
};

inline LoadedData load_data(const DataOptions& o) {
    const Dataset raw = read_dataset(o.input, o.response, o.exclude);
    Dataset cleaned = clean_dataset(raw, o.min_mutations);
    DesignMatrix design = normalize_columns(cleaned.design);
    return LoadedData{std::move(cleaned), std::move(design), static_cast<std::size_t>(raw.rows()),
                      static_cast<std::size_t>(raw.cols())};
}

inline json labels_of(const std::vector<std::size_t>& idx, const std::vector<std::string>& labels) {
    json arr = json::array();
    for (std::size_t j : idx) arr.push_back(labels[j]);
    return arr;
}

inline json calibration_json(const Calibration& c) {
    return json{{"k", c.k},
                {"alpha", csv::format_real(c.alpha)},
                {"v", c.v},
                {"omega", csv::format_real(c.omega)},
                {"branch", c.randomized ? "randomized" : "deterministic"},
                {"draw", csv::format_real(c.draw)},
                {"v_used", c.v_used}};
}

inline json selection_json(const SelectionResult& r, const std::vector<std::string>& labels) {
    return json{{"rejected", labels_of(r.rejected, labels)},
                {"count", r.rejected.size()},
                {"threshold_tv", real_or_null(r.threshold)},
                {"cutoff_index", r.cutoff_index},
                {"v_used", r.v_used},
                {"topped_up", r.topped_up},
                {"augmented", r.augmented}};
}

// Per-variable report: one row per design column.
inline void write_variable_report(const std::string& path, const KnockoffStats& stats,
                                  const std::vector<std::string>& labels, const SelectionResult& sel) {
    std::vector<std::size_t> rank(stats.p());
    for (std::size_t pos = 0; pos < stats.order.size(); ++pos) rank[stats.order[pos]] = pos + 1;
    std::vector<std::string> how(stats.p(), "");
    const std::size_t base = sel.rejected.size() - sel.topped_up - sel.augmented;
    for (std::size_t i = 0; i < sel.rejected.size(); ++i) {
        how[sel.rejected[i]] = i < base ? "scan" : (i < base + sel.topped_up ? "topup" : "augment");
    }
    std::ostringstream out;
    csv::write_row(out, {"label", "index", "W", "chi", "rank", "rejected", "reason"});
    for (std::size_t j = 0; j < stats.p(); ++j) {
        csv::write_row(out, {labels[j], std::to_string(j + 1), csv::format_real(stats.w[j]), std::to_string(stats.chi[j]),
                             std::to_string(rank[j]), how[j].empty() ? "0" : "1", how[j]});
    }
    write_text(path, out.str());
}

inline std::string table_cell(const std::vector<std::size_t>& rejected, const std::vector<std::string>& labels,
                              const std::optional<TruthPanel>& panel) {
    if (!panel) return std::to_string(rejected.size());
    const PanelScore s = score_against_panel(rejected, labels, *panel);
    return std::to_string(s.true_count) + "/" + std::to_string(s.total_count);
}

inline std::optional<TruthPanel> load_panel(const std::string& path, const std::vector<std::string>& labels,
                                            std::ostream& err) {
    if (path.empty()) return std::nullopt;
    TruthPanel panel = read_panel(path);
    const auto unknown = unknown_panel_labels(panel, labels);
    if (!unknown.empty()) {
        err << "warning: " << unknown.size() << " panel label(s) do not name a retained column (e.g. '"
            << unknown.front() << "')\n";
    }
    return panel;
}

inline int cmd_construct(const ConstructCliOptions& o, const std::vector<std::string>& argv, std::ostream& out) {
    const csv::Table t = csv::read_table(o.input);
    MatrixXd raw(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < t.header.size(); ++c) {
            const auto v = csv::parse_cell(t, r, c);
            if (!v) {
                throw Error(ErrorKind::ParseError, "data_cli",
                            t.source + ": line " + std::to_string(t.line_numbers[r]) + ", column " +
                                std::to_string(c + 1) + ": missing value");
            }
            raw(static_cast<Index>(r), static_cast<Index>(c)) = *v;
        }
    }
    const DesignMatrix design = normalize_columns(raw);
    const VectorXd s = equicorrelated_s(design.gram());
    ConstructOptions copts;
    copts.allow_row_augment = o.allow_row_augment;
    const KnockoffAugment aug = construct_knockoffs(design, s, copts);
    const IdentityCheck check = verify_identities(aug);

    std::ostringstream body;
    std::vector<std::string> header;
    for (const auto& h : t.header) header.push_back("ko_" + h);
    csv::write_row(body, header);
    std::vector<std::string> row(t.header.size());
    for (Index i = 0; i < aug.knockoff.rows(); ++i) {
        for (Index j = 0; j < aug.knockoff.cols(); ++j) row[static_cast<std::size_t>(j)] = csv::format_real(aug.knockoff(i, j));
        csv::write_row(body, row);
    }
    write_text(o.output, body.str());

    json m = manifest_base("construct", argv);
    json svec = json::array();
    for (Index j = 0; j < s.size(); ++j) svec.push_back(csv::format_real(s(j)));
    m["config"] = {{"input", o.input}, {"output", o.output}, {"allow_row_augment", o.allow_row_augment}};
    m["n"] = design.n();
    m["p"] = design.p();
    m["padded_rows"] = aug.padded_rows;
    m["s"] = svec;
    m["gram_deviation"] = csv::format_real(check.gram_deviation);
    m["cross_deviation"] = csv::format_real(check.cross_deviation);
    write_text(sibling(o.output, ".manifest.json"), m.dump(2) + "\n");
    out << "wrote " << o.output << " (" << aug.knockoff.rows() << " x " << aug.knockoff.cols() << ")"
        << (check.pass ? "" : " WARNING: identities exceed 1e-8") << "\n";
    return check.pass ? 0 : 3;
}

inline json data_config_json(const DataOptions& d) {
    return json{{"input", d.input},
                {"response", d.response},
                {"exclude", d.exclude},
                {"min_mutations", d.min_mutations},
                {"panel", d.panel},
                {"seed", d.seed},
                {"out", d.out},
                {"allow_row_augment", d.allow_row_augment},
                {"path", path_json(d.path)}};
}

inline int cmd_select(const SelectOptions& o, const std::vector<std::string>& argv, std::ostream& out,
                      std::ostream& err) {
    if (o.k < 1) throw Error(ErrorKind::ConfigError, "data_cli", "--k must be >= 1");
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw Error(ErrorKind::ConfigError, "data_cli", "--alpha must lie in (0, 1)");
    const LoadedData data = load_data(o.data);
    const auto& labels = data.cleaned.labels;
    const auto panel = load_panel(o.data.panel, labels, err);

    Engine rng(o.data.seed);
    KnockoffRunOptions ko;
    ko.k = o.k;
    ko.alpha = o.alpha;
    ko.randomize = !o.no_randomize;
    ko.top_up = !o.no_topup;
    ko.allow_row_augment = o.data.allow_row_augment;
    ko.path = o.data.path;
    const KnockoffRun run = run_knockoffs(data.design, data.cleaned.response, ko, rng);

    json result;
    result["n"] = data.design.n();
    result["p"] = data.design.p();
    result["raw_rows"] = data.raw_rows;
    result["raw_columns"] = data.raw_cols;
    result["lambda_max"] = csv::format_real(run.entry.lambda_max);
    result["calibration"] = calibration_json(run.calibration);
    result["kfwer_knockoffs"] = selection_json(run.selection, labels);

    std::vector<std::pair<std::string, std::string>> cells;
    cells.emplace_back("k-FWER ko", table_cell(run.selection.rejected, labels, panel));
    if (o.fdr_q) {
        const SelectionResult fdr = fdr_knockoff_select(run.stats, *o.fdr_q);
        result["fdr_knockoffs"] = selection_json(fdr, labels);
        cells.insert(cells.begin(), {"FDR ko", table_cell(fdr.rejected, labels, panel)});
    }
    if (o.baselines) {
        const PValueVector pv = ols_pvalues(data.design, data.cleaned.response);
        MvtNullSampler sampler(data.design, pv.dof);
        StepdownOptions so;
        so.draws = o.stepdown_draws;
        const auto sd = stepdown_mvt(pv, o.k, o.alpha, sampler, rng, so);
        CriticalValues cv;
        if (o.stepup_constants.empty()) {
            err << "warning: step-up is using flat k*alpha/p critical values (valid, but low power); "
                   "pass --stepup-constants for the sharper constants\n";
            cv = flat_stepup_constants(pv.size(), o.k, o.alpha);
        } else {
            cv = load_critical_values(o.stepup_constants);
        }
        const auto su = stepup_kfwer(pv, cv);
        const auto hm = holm_kfwer(pv, o.k, o.alpha);
        result["stepdown"] = json{{"rejected", labels_of(sd, labels)}, {"count", sd.size()}};
        result["stepup"] = json{{"rejected", labels_of(su, labels)}, {"count", su.size()}};
        result["holm"] = json{{"rejected", labels_of(hm, labels)}, {"count", hm.size()}};
        cells.emplace_back("Step-down", table_cell(sd, labels, panel));
        cells.emplace_back("Step-up", table_cell(su, labels, panel));
        cells.emplace_back("Holm", table_cell(hm, labels, panel));
    }
    if (panel) {
        const PanelScore ps = score_against_panel(run.selection, labels, *panel);
        result["panel_score"] = json{{"true_count", ps.true_count}, {"total_count", ps.total_count}};
    }

    write_variable_report(o.data.out, run.stats, labels, run.selection);
    write_text(sibling(o.data.out, ".result.json"), result.dump(2) + "\n");
    json m = manifest_base("select", argv);
    m["config"] = data_config_json(o.data);
    m["config"]["k"] = o.k;
    m["config"]["alpha"] = csv::format_real(o.alpha);
    m["config"]["randomize"] = !o.no_randomize;
    m["config"]["top_up"] = !o.no_topup;
    m["config"]["fdr_q"] = o.fdr_q ? json(csv::format_real(*o.fdr_q)) : json(nullptr);
    m["config"]["baselines"] = o.baselines;
    m["config"]["stepdown_draws"] = o.stepdown_draws;
    m["config"]["stepup_constants"] = o.stepup_constants;
    write_text(sibling(o.data.out, ".manifest.json"), m.dump(2) + "\n");

    out << o.data.response << " samples=" << data.design.n() << " snps=" << data.design.p() << " v=" << run.calibration.v
        << " v_used=" << run.calibration.v_used << " omega=" << csv::format_real(run.calibration.omega) << "\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out << (i ? "  " : "") << cells[i].first << ": " << cells[i].second;
    }
    out << "\n";
    return 0;
}

inline int cmd_analyze(const AnalyzeOptions& o, const std::vector<std::string>& argv, std::ostream& out,
                       std::ostream& err) {
    const int targets = (o.pfer ? 1 : 0) + (o.fdx_gamma ? 1 : 0) + (o.rw_gamma ? 1 : 0);
    if (targets != 1) {
        throw Error(ErrorKind::ConfigError, "data_cli", "analyze needs exactly one of --pfer, --fdx-gamma, --rw-gamma");
    }
    if (o.fdx_gamma && !o.k) throw Error(ErrorKind::ConfigError, "data_cli", "--fdx-gamma requires --k");
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw Error(ErrorKind::ConfigError, "data_cli", "--alpha must lie in (0, 1)");
    if (o.fdx_gamma) FdxConfig{*o.fdx_gamma, o.alpha, *o.k}.validate();
    if (o.rw_gamma) FdxConfig{*o.rw_gamma, o.alpha, 1}.validate();
    if (o.pfer) pfer_budget_to_v(*o.pfer);

    const LoadedData data = load_data(o.data);
    const auto& labels = data.cleaned.labels;
    const auto panel = load_panel(o.data.panel, labels, err);

    Engine rng(o.data.seed);
    KnockoffRunOptions ko;
    ko.k = o.k.value_or(1);
    ko.alpha = o.alpha;
    ko.randomize = !o.no_randomize;
    ko.allow_row_augment = o.data.allow_row_augment;
    ko.path = o.data.path;
    KnockoffRun run = run_knockoffs(data.design, data.cleaned.response, ko, rng);

    json result;
    result["n"] = data.design.n();
    result["p"] = data.design.p();
    SelectionResult final_sel;
    std::string mode;
    if (o.pfer) {
        mode = "pfer";
        const int v = pfer_budget_to_v(*o.pfer);
        final_sel = select(run.stats, v);
        result["pfer_budget"] = csv::format_real(*o.pfer);
        result["v"] = v;
    } else if (o.fdx_gamma) {
        mode = "fdx_augment";
        final_sel = fdx_augment(run.selection, *o.k, *o.fdx_gamma, run.stats);
        result["calibration"] = calibration_json(run.calibration);
        result["base"] = selection_json(run.selection, labels);
        result["gamma"] = csv::format_real(*o.fdx_gamma);
    } else {
        mode = "romano_wolf";
        Engine rw_rng(derive_seed(o.data.seed, 1));
        const RomanoWolfResult rw = romano_wolf_fdx(run.stats, *o.rw_gamma, o.alpha, rw_rng);
        final_sel = rw.selection;
        result["calibration"] = calibration_json(rw.calibration);
        result["k_hat"] = rw.k_hat;
        result["capped"] = rw.capped;
        result["gamma"] = csv::format_real(*o.rw_gamma);
    }
    result["mode"] = mode;
    result["selection"] = selection_json(final_sel, labels);
    if (panel) {
        const PanelScore ps = score_against_panel(final_sel, labels, *panel);
        result["panel_score"] = json{{"true_count", ps.true_count}, {"total_count", ps.total_count}};
    }

    write_variable_report(o.data.out, run.stats, labels, final_sel);
    write_text(sibling(o.data.out, ".result.json"), result.dump(2) + "\n");
    json m = manifest_base("analyze", argv);
    m["config"] = data_config_json(o.data);
    m["config"]["mode"] = mode;
    m["config"]["alpha"] = csv::format_real(o.alpha);
    m["config"]["k"] = o.k ? json(*o.k) : json(nullptr);
    m["config"]["randomize"] = !o.no_randomize;
    write_text(sibling(o.data.out, ".manifest.json"), m.dump(2) + "\n");

    out << mode << ": " << table_cell(final_sel.rejected, labels, panel) << "\n";
    return 0;
}

inline int cmd_simulate(const SimulateOptions& o, const std::vector<std::string>& argv, std::ostream& out,
                        std::ostream& err) {
    SimConfig cfg;
    if (o.preset == "desk") {
        cfg = desk_preset();
    } else if (o.preset == "full") {
        cfg = full_preset();
    } else {
        throw Error(ErrorKind::ConfigError, "sim_harness", "--preset must be desk or full");
    }
    const Sweep sweep{parse_sweep_param(o.sweep), o.grid};
    if (sweep.values.empty()) throw Error(ErrorKind::ConfigError, "sim_harness", "--grid must list at least one value");
    if (o.replicates) cfg.replicates = *o.replicates;
    if (o.stepdown_draws) cfg.stepdown_draws = *o.stepdown_draws;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    cfg.fixed_design = o.fixed_design;
    if (sweep.param != SweepParam::rho) cfg.rho = 0.0;
    if (!o.procedures.empty()) {
        cfg.procedures.clear();
        for (const auto& s : o.procedures) cfg.procedures.push_back(parse_procedure(s));
    } else if (cfg.p > 100 && !o.include_stepup) {
        cfg.procedures = {Procedure::knockoffs, Procedure::holm, Procedure::stepdown};
    } else if (o.include_stepup &&
               std::find(cfg.procedures.begin(), cfg.procedures.end(), Procedure::stepup) == cfg.procedures.end()) {
        cfg.procedures.push_back(Procedure::stepup);
    }
    const bool has_stepup =
        std::find(cfg.procedures.begin(), cfg.procedures.end(), Procedure::stepup) != cfg.procedures.end();
    if (!o.stepup_constants.empty()) {
        cfg.stepup_constants = load_critical_values(o.stepup_constants).values;
    } else if (has_stepup) {
        err << "warning: step-up is using flat k*alpha/p critical values (valid, but low power); "
               "pass --stepup-constants for the sharper constants\n";
    }
    cfg.validate();

    const auto reports = run_sweep(cfg, sweep);
    fs::create_directories(o.out);
    std::ostringstream tidy, agg;
    write_tidy_csv(tidy, reports);
    write_aggregate_csv(agg, reports);
    write_text((fs::path(o.out) / "tidy.csv").string(), tidy.str());
    write_text((fs::path(o.out) / "aggregate.csv").string(), agg.str());

    json m = manifest_base("simulate", argv);
    json procs = json::array();
    for (Procedure p : cfg.procedures) procs.push_back(to_string(p));
    json grid = json::array();
    for (double v : sweep.values) grid.push_back(csv::format_real(v));
    m["config"] = {{"preset", o.preset},
                   {"n", cfg.n},
                   {"p", cfg.p},
                   {"sigma_sq", csv::format_real(cfg.sigma_sq)},
                   {"rho", csv::format_real(cfg.rho)},
                   {"nnz", cfg.nnz},
                   {"magnitude", csv::format_real(cfg.magnitude)},
                   {"positive_signs", cfg.positive_signs},
                   {"k", cfg.k},
                   {"alpha", csv::format_real(cfg.alpha)},
                   {"replicates", cfg.replicates},
                   {"seed", cfg.seed},
                   {"procedures", procs},
                   {"fixed_design", cfg.fixed_design},
                   {"stepdown_draws", cfg.stepdown_draws},
                   {"stepup_constants", o.stepup_constants.empty() ? "flat" : o.stepup_constants},
                   {"sweep", to_string(sweep.param)},
                   {"grid", grid},
                   {"path", path_json(cfg.path)}};
    write_text((fs::path(o.out) / "manifest.json").string(), m.dump(2) + "\n");

    for (const auto& rep : reports) {
        out << rep.grid_param << "=" << csv::format_real(rep.grid_value);
        for (const auto& s : rep.summaries) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "  %s power=%.3f kfwer=%.3f", to_string(s.procedure), s.power, s.kfwer);
            out << buf;
        }
        out << "\n";
    }
    return 0;
}

inline void add_data_options(CLI::App* sub, DataOptions& d) {
    sub->add_option("--input", d.input, "Headered CSV with design columns and the response")->required();
    sub->add_option("--response", d.response, "Name of the response column")->required();
    sub->add_option("--exclude", d.exclude, "Columns to ignore (comma separated)")->delimiter(',');
    sub->add_option("--min-mutations", d.min_mutations, "Drop design columns with fewer nonzero entries");
    sub->add_option("--panel", d.panel, "Truth panel: one column label per line");
    sub->add_option("--seed", d.seed, "Random seed")->required();
    sub->add_option("--out", d.out, "Per-variable report CSV; result/manifest JSON are written beside it")->required();
    sub->add_flag("--allow-row-augment", d.allow_row_augment, "Pad rows when p <= n < 2p");
    sub->add_option("--grid-size", d.path.grid_size, "Number of lambda values on the path");
    sub->add_option("--grid-ratio", d.path.grid_ratio, "lambda_min / lambda_max");
}

/// Parses and runs one command. Returns the process exit code:
/// 0 success, 2 input error, 3 numerical failure, 4 config error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"k-FWER control with knockoffs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(version));

    ConstructCliOptions construct;
    auto* c = app.add_subcommand("construct", "Build the knockoff design for a numeric CSV matrix");
    c->add_option("--input", construct.input, "Headered CSV, every column a design variable")->required();
    c->add_option("--output", construct.output, "Knockoff matrix CSV")->required();
    c->add_flag("--allow-row-augment", construct.allow_row_augment, "Pad rows when p <= n < 2p");

    SelectOptions sel;
    auto* s = app.add_subcommand("select", "Run the k-FWER knockoff procedure on a data set");
    add_data_options(s, sel.data);
    s->add_option("--k", sel.k, "k of the k-FWER")->required();
    s->add_option("--alpha", sel.alpha, "Level")->required();
    s->add_flag("--no-randomize", sel.no_randomize, "Use the deterministic v");
    s->add_flag("--no-topup", sel.no_topup, "Do not top up to k-1 rejections");
    s->add_option("--fdr-q", sel.fdr_q, "Also report the FDR knockoff+ selection at level q");
    s->add_flag("--baselines", sel.baselines, "Also run Holm, generic step-down and step-up");
    s->add_option("--stepdown-draws", sel.stepdown_draws, "Null draws for the generic step-down");
    s->add_option("--stepup-constants", sel.stepup_constants, "Step-up critical values, one per line");

    AnalyzeOptions an;
    auto* a = app.add_subcommand("analyze", "PFER or FDX control built on the knockoff statistics");
    add_data_options(a, an.data);
    a->add_option("--pfer", an.pfer, "PFER budget");
    a->add_option("--fdx-gamma", an.fdx_gamma, "FDX bound gamma via augmentation (needs --k)");
    a->add_option("--rw-gamma", an.rw_gamma, "FDX bound gamma via the Romano-Wolf heuristic");
    a->add_option("--k", an.k, "k for the augmentation route");
    a->add_option("--alpha", an.alpha, "Level");
    a->add_flag("--no-randomize", an.no_randomize, "Use the deterministic v");

    SimulateOptions sim;
    auto* m = app.add_subcommand("simulate", "Monte Carlo power / k-FWER sweep");
    m->add_option("--preset", sim.preset, "desk or full")->required();
    m->add_option("--sweep", sim.sweep, "rho, nnz or magnitude")->required();
    m->add_option("--grid", sim.grid, "Comma separated grid values")->delimiter(',')->required();
    m->add_option("--replicates", sim.replicates, "Replicates per grid point");
    m->add_option("--seed", sim.seed, "Random seed")->required();
    m->add_option("--out", sim.out, "Output directory")->required();
    m->add_option("--threads", sim.threads, "Worker threads (0: all cores)");
    m->add_flag("--include-stepup", sim.include_stepup, "Keep step-up even when p > 100");
    m->add_flag("--fixed-design", sim.fixed_design, "Draw X once per grid point");
    m->add_option("--procedures", sim.procedures, "Subset of knockoffs,holm,stepdown,stepup")->delimiter(',');
    m->add_option("--stepup-constants", sim.stepup_constants, "Step-up critical values, one per line");
    m->add_option("--stepdown-draws", sim.stepdown_draws, "Null draws for the generic step-down");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 4;
    }

    try {
        if (c->parsed()) return cmd_construct(construct, args, out);
        if (s->parsed()) return cmd_select(sel, args, out, err);
        if (a->parsed()) return cmd_analyze(an, args, out, err);
        if (m->parsed()) return cmd_simulate(sim, args, out, err);
    } catch (const Error& e) {
        err << "error [" << e.module() << "] " << to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 4;
}

}  // namespace kfwer::cli
