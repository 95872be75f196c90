// Batch command-line surface for the penalized Weibull mixture cure frailty
// model: simulate / fit / cv / bench / metrics / prs.
//
// Exit codes: 0 success, 1 input or solver error, 2 non-convergence.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "penmcfm/io_json.hpp"

namespace fs = std::filesystem;
using namespace penmcfm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoConvergence = 2;

struct SharedOpts {
    std::string data_path, roles_path, out_dir = ".";
    std::uint64_t seed = 1;
    int threads = 1;
    std::string frailty = "on";
    std::string method = "em";
    double alpha_enet = 1.0;
    std::string lambda = "auto";
    int k_stages = 2;
    double tol = 1e-5;
    int max_iter = 500;

    bool frailty_on() const
    {
        if (frailty == "on") return true;
        if (frailty == "off") return false;
        throw Error("--frailty must be 'on' or 'off'");
    }

    FitOptions fit_options() const
    {
        FitOptions f;
        f.tol = tol;
        f.max_iter = max_iter;
        return f;
    }
};

void add_shared(CLI::App* cmd, SharedOpts& o, bool needs_data)
{
    if (needs_data) {
        cmd->add_option("--data", o.data_path, "input CSV")->required();
        cmd->add_option("--roles", o.roles_path, "column-roles JSON")->required();
    }
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "master seed; all randomness derives from it");
    cmd->add_option("--threads", o.threads, "worker threads (outputs identical for any value)");
    cmd->add_option("--frailty", o.frailty, "frailty mode: on|off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--method", o.method, "fitting method: em|gmifs")
        ->check(CLI::IsMember({"em", "gmifs"}));
    cmd->add_option("--alpha-enet", o.alpha_enet, "elastic-net mixing in [0,1]");
    cmd->add_option("--lambda", o.lambda, "penalty level: auto|path|<value>");
    cmd->add_option("--k-stages", o.k_stages, "adaptive stages: 1|2")
        ->check(CLI::IsMember({1, 2}));
    cmd->add_option("--tol", o.tol, "EM convergence tolerance per component");
    cmd->add_option("--max-iter", o.max_iter, "EM iteration cap");
}

SurvivalDataset load_dataset(const SharedOpts& o, ColumnRoles* roles_out = nullptr)
{
    const RawTable table = read_csv(o.data_path);
    const ColumnRoles roles = roles_from_json(read_json(o.roles_path));
    if (roles_out) *roles_out = roles;
    std::vector<std::string> constants;
    SurvivalDataset ds = validate_dataset(table, roles, &constants);
    for (const auto& msg : constants) std::cerr << "note: " << msg << "\n";
    return ds;
}

void ensure_out_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory: " + dir);
}

// Back-transform coefficients fitted on standardized penalized columns to the
// original column scale; the removed means fold into the incidence intercept
// and the Weibull scale.
ParamSet unstandardize(const ParamSet& fitted, const ScalingInfo& scaling)
{
    ParamSet out = fitted;
    double zb_shift = 0.0;
    for (Eigen::Index j = 0; j < fitted.b_p.size(); ++j) {
        out.b_p[j] = fitted.b_p[j] / scaling.z_std[j];
        zb_shift += fitted.b_p[j] * scaling.z_mean[j] / scaling.z_std[j];
    }
    out.b0 = fitted.b0 - zb_shift;
    double xb_shift = 0.0;
    for (Eigen::Index j = 0; j < fitted.beta_p.size(); ++j) {
        out.beta_p[j] = fitted.beta_p[j] / scaling.x_std[j];
        xb_shift += fitted.beta_p[j] * scaling.x_mean[j] / scaling.x_std[j];
    }
    out.alpha = fitted.alpha * std::exp(-xb_shift);
    return out;
}

int cmd_simulate(const SharedOpts& o, const std::string& scenario_path)
{
    SimulationScenario sc = scenario_from_json(read_json(scenario_path));
    sc.seed = o.seed != 1 ? o.seed : sc.seed;  // CLI flag wins when given
    ensure_out_dir(o.out_dir);
    const GeneratedTruth truth = generate_dataset(sc);
    const ColumnRoles roles = simulated_roles(sc);
    write_dataset_csv(truth.data, roles, o.out_dir + "/data.csv");
    write_json(roles_to_json(roles), o.out_dir + "/roles.json");
    json t = truth_to_json(truth);
    t["scenario"] = scenario_to_json(sc);
    write_json(t, o.out_dir + "/truth.json");
    return kExitOk;
}

int cmd_fit(const SharedOpts& o)
{
    const bool frailty = o.frailty_on();
    SurvivalDataset raw = load_dataset(o);
    auto [ds, scaling] = standardize_penalized(raw);
    ensure_out_dir(o.out_dir);
    const FitOptions opts = o.fit_options();

    if (o.method == "gmifs") {
        GmifsOptions go;
        go.frailty_enabled = frailty;
        const GmifsResult r = gmifs_fit(ds, go);
        write_gmifs_path_csv(r.state, o.out_dir + "/path.csv");
        json j;
        j["params"] = params_to_json(unstandardize(r.selected, scaling));
        j["selected_step"] = r.selected_step;
        j["loglik"] = r.selected_loglik;
        j["steps"] = r.state.steps;
        j["selected_support_b"] = nonzero_support(r.selected.b_p);
        j["selected_support_beta"] = nonzero_support(r.selected.beta_p);
        write_json(j, o.out_dir + "/fit.json");
        return kExitOk;
    }

    const ParamSet init = initialize(ds, frailty);
    bool all_converged = true;
    if (o.lambda == "auto" || o.lambda == "path") {
        PenaltyConfig cfg;
        cfg.alpha_enet = o.alpha_enet;
        cfg.stages = o.k_stages;
        const PathResult path = fit_path(ds, cfg, init, opts);
        json j = path_result_to_json(path);
        for (auto& entry : j["entries"]) {
            const ParamSet std_params = params_from_json(entry["fit"]["params"]);
            ParamSet with_mode = std_params;
            with_mode.frailty_enabled = frailty;
            entry["fit"]["params_original_scale"] =
                params_to_json(unstandardize(with_mode, scaling));
        }
        write_json(j, o.out_dir + "/fit.json");
        for (const auto& e : path.entries) all_converged &= e.fit.converged;
    } else {
        const double lambda = std::strtod(o.lambda.c_str(), nullptr);
        if (!(lambda >= 0.0) || (lambda == 0.0 && o.lambda != "0")) {
            throw Error("--lambda must be auto, path, or a nonnegative number");
        }
        FitResult fit;
        if (lambda == 0.0) {
            const PenaltySpec pen =
                PenaltySpec::unpenalized(ds.z_pen.cols(), ds.x_pen.cols());
            fit = fit_em(ds, pen, init, opts);
        } else {
            fit = fit_at(ds, lambda, o.alpha_enet, o.k_stages, opts, frailty);
        }
        json j = fit_result_to_json(fit);
        j["params_original_scale"] = params_to_json(unstandardize(fit.params, scaling));
        write_json(j, o.out_dir + "/fit.json");
        all_converged = fit.converged;
    }
    return all_converged ? kExitOk : kExitNoConvergence;
}

int cmd_cv(const SharedOpts& o, std::vector<double> alpha_grid, int k_folds,
           int n_lambda, double min_ratio, int max_support)
{
    SurvivalDataset raw = load_dataset(o);
    auto [ds, scaling] = standardize_penalized(raw);
    (void)scaling;
    ensure_out_dir(o.out_dir);
    CvConfig cfg;
    if (!alpha_grid.empty()) cfg.alpha_grid = std::move(alpha_grid);
    cfg.k_folds = k_folds;
    cfg.stages = o.k_stages;
    cfg.frailty = o.frailty_on();
    cfg.fit = o.fit_options();
    cfg.n_lambda = n_lambda;
    cfg.min_ratio = min_ratio;
    cfg.max_support = max_support;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    const CvTable table = cross_validate(ds, cfg);
    write_cv_table_csv(table, o.out_dir + "/cv_cells.csv");
    write_cv_summary_csv(table, o.out_dir + "/cv_summary.csv");
    json best;
    best["lambda"] = table.best_lambda;
    best["alpha_enet"] = table.best_alpha;
    best["failures"] = table.failures;
    write_json(best, o.out_dir + "/cv_best.json");
    return kExitOk;
}

int cmd_bench(const SharedOpts& o, const std::string& scenario_path, int replications,
              std::vector<std::string> methods, std::vector<double> alpha_grid,
              int k_folds, int n_lambda, int max_support, int gmifs_max_steps)
{
    const json sj = read_json(scenario_path);
    SimulationScenario sc = scenario_from_json(sj);
    sc.seed = o.seed != 1 ? o.seed : sc.seed;
    ensure_out_dir(o.out_dir);

    BenchConfig cfg;
    cfg.replications = replications;
    cfg.threads = o.threads;
    if (!methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : methods) cfg.methods.push_back(method_from_name(m));
    }
    if (!alpha_grid.empty()) cfg.tuner.alpha_grid = std::move(alpha_grid);
    cfg.tuner.k_folds = k_folds;
    cfg.tuner.stages = o.k_stages;
    cfg.tuner.frailty = o.frailty_on();
    cfg.tuner.fit = o.fit_options();
    cfg.tuner.n_lambda = n_lambda;
    cfg.tuner.max_support = max_support;
    cfg.gmifs.max_steps = gmifs_max_steps;

    const std::string name =
        fs::path(scenario_path).stem().string();
    const BenchReport report = run_monte_carlo(sc, name, cfg);
    write_bench_csv(report, o.out_dir + "/bench.csv");

    json manifest;
    manifest["scenario"] = scenario_to_json(sc);
    manifest["scenario_name"] = name;
    manifest["replications"] = replications;
    json mnames = json::array();
    for (const Method m : cfg.methods) mnames.push_back(method_name(m));
    manifest["methods"] = mnames;
    manifest["seed"] = o.seed;
    manifest["failures"] = report.failures;
    manifest["generated_at"] = static_cast<std::uint64_t>(std::time(nullptr));
    write_json(manifest, o.out_dir + "/manifest.json");
    return kExitOk;
}

int cmd_metrics(const SharedOpts& o, const std::string& truth_path,
                const std::string& fit_path_arg)
{
    const json tj = read_json(truth_path);
    const json fj = read_json(fit_path_arg);
    const ParamSet truth = params_from_json(tj.at("params"));
    const json fit_params_json = fj.contains("params")
                                     ? fj.at("params")
                                     : fj.at("entries").back().at("fit").at("params");
    const ParamSet fitted = params_from_json(fit_params_json);
    ensure_out_dir(o.out_dir);

    json out;
    const SelectionMetrics sel_beta = selection_metrics(truth.beta_p, fitted.beta_p);
    const SelectionMetrics sel_b = selection_metrics(truth.b_p, fitted.b_p);
    out["sensitivity_beta"] = sel_beta.sensitivity;
    out["specificity_beta"] = sel_beta.specificity;
    out["fpr_beta"] = sel_beta.fpr;
    out["sensitivity_b"] = sel_b.sensitivity;
    out["specificity_b"] = sel_b.specificity;
    out["fpr_b"] = sel_b.fpr;

    if (!o.data_path.empty()) {
        SurvivalDataset ds = load_dataset(o);
        if (tj.contains("pi_true")) ds.pi_true = vec_from_json(tj["pi_true"]);
        const SigmaSpec sigma{tj.value("rho", 0.0), tj.value("block_size", 0)};
        std::vector<int> support_b = tj.at("support_b""").get<std::vector<int>>();
        std::vector<int> support_beta = tj.at("support_beta").get<std::vector<int>>();
        const FitResult oracle =
            fit_oracle(ds, support_b, support_beta, o.fit_options(), o.frailty_on());
        const ErrorMetrics err_beta =
            rme_err(fitted.beta_p, truth.beta_p, sigma, oracle.params.beta_p);
        const ErrorMetrics err_b =
            rme_err(fitted.b_p, truth.b_p, sigma, oracle.params.b_p);
        out["rme_beta"] = err_beta.rme;
        out["err_beta"] = err_beta.err;
        out["rme_b"] = err_b.rme;
        out["err_b"] = err_b.err;
        if (ds.pi_true.size() == ds.n()) {
            const Eigen::VectorXd zb = incidence_predictor(fitted, ds);
            Eigen::VectorXd pi_hat(ds.n());
            for (Eigen::Index i = 0; i < ds.n(); ++i) pi_hat[i] = sigmoid(zb[i]);
            const auto [bias, mse] = uncured_bias_mse({{pi_hat, ds.pi_true}});
            out["bias_pi"] = bias;
            out["mse_pi"] = mse;
        }
        const Eigen::VectorXd scores = latency_predictor(fitted, ds);
        out["c"] = c_statistic(scores, ds.time, ds.status);
        const Eigen::VectorXd zb = incidence_predictor(fitted, ds);
        Eigen::VectorXd pi_hat(ds.n());
        for (Eigen::Index i = 0; i < ds.n(); ++i) pi_hat[i] = sigmoid(zb[i]);
        out["c_cure"] = c_statistic_cure(scores, pi_hat, ds.time, ds.status);
    }
    write_json(out, o.out_dir + "/metrics.json");

    CsvWriter w(o.out_dir + "/metrics.csv");
    std::vector<std::string> names;
    std::vector<double> values;
    for (const auto& [key, val] : out.items()) {
        names.push_back(key);
        values.push_back(val.get<double>());
    }
    w.header(names);
    w.row(values);
    return kExitOk;
}

int cmd_prs(const SharedOpts& o, const std::string& coefs_path)
{
    SurvivalDataset ds = load_dataset(o);
    const json cj = read_json(coefs_path);
    const std::vector<int> genes = cj.at("genes").get<std::vector<int>>();
    const Eigen::VectorXd coefs = vec_from_json(cj.at("coefs"));
    if (genes.empty()) throw Error("empty selection");
    if (static_cast<Eigen::Index>(genes.size()) != coefs.size()) {
        throw Error("genes/coefs length mismatch");
    }
    Eigen::MatrixXd expr(ds.n(), static_cast<Eigen::Index>(genes.size()));
    for (std::size_t k = 0; k < genes.size(); ++k) {
        if (genes[k] < 0 || genes[k] >= ds.x_pen.cols()) {
            throw Error("gene index out of range: " + std::to_string(genes[k]));
        }
        expr.col(static_cast<Eigen::Index>(k)) = ds.x_pen.col(genes[k]);
    }
    ensure_out_dir(o.out_dir);

    const PrsResult prs = prognostic_risk_score(coefs, expr);
    json out;
    out["median"] = prs.median;
    out["degenerate"] = prs.degenerate;
    if (!prs.degenerate) {
        const LogrankResult lr = logrank_test(prs.group, ds.time, ds.status);
        out["prs_logrank_stat"] = lr.statistic;
        out["prs_logrank_p"] = lr.p_value;
    }
    write_json(out, o.out_dir + "/prs.json");

    CsvWriter w(o.out_dir + "/prs_groups.csv");
    w.header({"row", "score", "group"});
    for (Eigen::Index i = 0; i < prs.scores.size(); ++i) {
        w.row({static_cast<double>(i), prs.scores[i],
               static_cast<double>(prs.group[i])});
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Penalized Weibull mixture cure frailty model toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "config file with long-option defaults");

    SharedOpts o;

    auto* simulate = app.add_subcommand("simulate", "generate a dataset from a scenario");
    std::string scenario_path;
    simulate->add_option("--scenario", scenario_path, "scenario JSON")->required();
    add_shared(simulate, o, false);

    auto* fit = app.add_subcommand("fit", "fit the model to a dataset");
    add_shared(fit, o, true);

    auto* cv = app.add_subcommand("cv", "cross-validate (lambda, alpha_enet)");
    add_shared(cv, o, true);
    std::vector<double> alpha_grid;
    int k_folds = 4, n_lambda = 50, max_support = 0, gmifs_max_steps = 5000;
    double min_ratio = 0.01;
    int replications = 10;
    std::vector<std::string> methods;
    cv->add_option("--alpha-grid", alpha_grid, "alpha_enet grid");
    cv->add_option("--k-folds", k_folds, "fold count");
    cv->add_option("--n-lambda", n_lambda, "lambda grid size");
    cv->add_option("--min-ratio", min_ratio, "lambda_min / lambda_max");
    cv->add_option("--max-support", max_support, "path truncation cap (0 = none)");

    auto* bench = app.add_subcommand("bench", "Monte Carlo benchmark on a scenario");
    std::string bench_scenario;
    bench->add_option("--scenario", bench_scenario, "scenario JSON")->required();
    add_shared(bench, o, false);
    bench->add_option("-M,--replications", replications, "Monte Carlo replications");
    bench->add_option("--methods", methods, "methods (penMCFM-EM penMCFM-GMIFS MCM-GMIFS)");
    bench->add_option("--alpha-grid", alpha_grid, "alpha_enet grid for the EM tuner");
    bench->add_option("--k-folds", k_folds, "fold count for the EM tuner");
    bench->add_option("--n-lambda", n_lambda, "lambda grid size");
    bench->add_option("--max-support", max_support, "path truncation cap (0 = none)");
    bench->add_option("--gmifs-max-steps", gmifs_max_steps, "stagewise step cap");

    auto* metrics = app.add_subcommand("metrics", "evaluate a fit against simulation truth");
    std::string truth_path, fit_json_path;
    metrics->add_option("--truth", truth_path, "truth JSON from simulate")->required();
    metrics->add_option("--fit", fit_json_path, "fit JSON from fit")->required();
    add_shared(metrics, o, false);
    metrics->add_option("--data", o.data_path, "dataset CSV (enables RME/C metrics)");
    metrics->add_option("--roles", o.roles_path, "column-roles JSON");

    auto* prs = app.add_subcommand("prs", "prognostic risk score + log-rank split");
    add_shared(prs, o, true);
    std::string coefs_path;
    prs->add_option("--coefs", coefs_path, "JSON with gene indices and averaged coefficients")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(o, scenario_path);
        if (fit->parsed()) return cmd_fit(o);
        if (cv->parsed()) {
            return cmd_cv(o, alpha_grid, k_folds, n_lambda, min_ratio, max_support);
        }
        if (bench->parsed()) {
            return cmd_bench(o, bench_scenario, replications, methods, alpha_grid,
                             k_folds, n_lambda, max_support, gmifs_max_steps);
        }
        if (metrics->parsed()) return cmd_metrics(o, truth_path, fit_json_path);
        if (prs->parsed()) return cmd_prs(o, coefs_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
