#pragma once

#include <map>
#include <set>

#include "penmcfm/gmifs.hpp"
#include "penmcfm/metrics.hpp"
#include "penmcfm/simulate.hpp"

namespace penmcfm {

// ---------------------------------------------------------------------------
// Cross-validated selection of (lambda, alpha_enet), scored by the held-out
// cure-weighted concordance.
// ---------------------------------------------------------------------------

struct CvConfig {
    Eigen::VectorXd lambda_grid;  // empty: generated per alpha from the data
    std::vector<double> alpha_grid{0.1, 0.5, 0.9, 1.0};
    int k_folds = 4;
    int stages = 2;
    bool frailty = true;
    bool cure_weighting = true;  // false scores with the plain C statistic
    FitOptions fit;
    int n_lambda = 50;
    double min_ratio = 0.01;
    int max_support = 0;
    double weight_cap = 1e6;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct CvTable {
    struct Cell {
        double lambda, alpha;
        int fold;
        double score;
        bool ok;
    };
    struct Agg {
        double lambda, alpha;
        double mean = 0.0, sd = 0.0;
        int n_ok = 0;
    };
    std::vector<Cell> cells;
    std::vector<Agg> aggregated;
    double best_lambda = 0.0;
    double best_alpha = 1.0;
    int failures = 0;
};

inline double held_out_score(const ParamSet& params, const SurvivalDataset& test,
                             bool cure_weighting)
{
    const Eigen::VectorXd scores = latency_predictor(params, test);
    if (!cure_weighting) return c_statistic(scores, test.time, test.status);
    const Eigen::VectorXd zb = incidence_predictor(params, test);
    Eigen::VectorXd pi_hat(test.n());
    for (Eigen::Index i = 0; i < test.n(); ++i) pi_hat[i] = sigmoid(zb[i]);
    return c_statistic_cure(scores, pi_hat, test.time, test.status);
}

// Final-stage fit at a single (lambda, alpha); stage-2 weights come from the
// stage-1 fit at the same lambda, exactly as inside the path.
inline FitResult fit_at(const SurvivalDataset& ds, double lambda, double alpha_enet,
                        int stages, const FitOptions& opts = {},
                        bool frailty = true, double weight_cap = 1e6)
{
    PenaltyConfig cfg;
    cfg.lambda_grid = Eigen::VectorXd::Constant(1, lambda);
    cfg.alpha_enet = alpha_enet;
    cfg.stages = stages;
    cfg.weight_cap = weight_cap;
    const ParamSet init = initialize(ds, frailty);
    const PathResult path = fit_path(ds, cfg, init, opts);
    return path.entries.back().fit;
}

inline CvTable cross_validate(const SurvivalDataset& ds, const CvConfig& cfg)
{
    if (cfg.k_folds < 2) throw Error("cross_validate: need k >= 2");
    if (cfg.alpha_grid.empty()) throw Error("cross_validate: empty alpha grid");
    const auto folds = kfold_partition(ds.n(), cfg.k_folds, cfg.seed);

    // per-alpha lambda grid, shared across folds
    std::vector<Eigen::VectorXd> grids(cfg.alpha_grid.size());
    for (std::size_t ai = 0; ai < cfg.alpha_grid.size(); ++ai) {
        if (cfg.lambda_grid.size() > 0) {
            grids[ai] = cfg.lambda_grid;
        } else {
            PenaltySpec null_pen =
                PenaltySpec::unpenalized(ds.z_pen.cols(), ds.x_pen.cols());
            null_pen.freeze_penalized = true;
            const FitResult null_fit =
                fit_em(ds, null_pen, initialize(ds, cfg.frailty), cfg.fit);
            grids[ai] = lambda_path(ds, null_fit.estep, null_fit.params,
                                    cfg.alpha_grid[ai], cfg.n_lambda, cfg.min_ratio);
        }
    }

    // train-row lists per fold
    std::vector<std::vector<int>> train_rows(folds.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::set<int> held(folds[f].begin(), folds[f].end());
        for (int i = 0; i < static_cast<int>(ds.n()); ++i) {
            if (!held.count(i)) train_rows[f].push_back(i);
        }
    }

    const std::size_t n_tasks = cfg.alpha_grid.size() * folds.size();
    std::vector<std::vector<CvTable::Cell>> task_cells(n_tasks);
    parallel_for(n_tasks, cfg.threads, [&](std::size_t task) {
        const std::size_t ai = task / folds.size();
        const std::size_t f = task % folds.size();
        const double alpha = cfg.alpha_grid[ai];
        const Eigen::VectorXd& grid = grids[ai];

        const SurvivalDataset train = ds.subset(train_rows[f]);
        const SurvivalDataset held = ds.subset(folds[f]);
        std::vector<CvTable::Cell> cells;
        try {
            PenaltyConfig pcfg;
            pcfg.lambda_grid = grid;
            pcfg.alpha_enet = alpha;
            pcfg.stages = cfg.stages;
            pcfg.weight_cap = cfg.weight_cap;
            pcfg.max_support = cfg.max_support;
            const ParamSet init = initialize(train, cfg.frailty);
            const PathResult path = fit_path(train, pcfg, init, cfg.fit);
            for (const auto& entry : path.entries) {
                if (entry.stage != cfg.stages) continue;
                CvTable::Cell cell{entry.lambda, alpha, static_cast<int>(f), 0.0, false};
                try {
                    cell.score = held_out_score(entry.fit.params, held, cfg.cure_weighting);
                    cell.ok = true;
                } catch (const Error&) {
                }
                cells.push_back(cell);
            }
        } catch (const Error&) {
            // whole-fold failure: recorded via missing cells
        }
        task_cells[task] = std::move(cells);
    });

    CvTable table;
    for (const auto& cells : task_cells) {
        for (const auto& c : cells) {
            table.cells.push_back(c);
            if (!c.ok) ++table.failures;
        }
    }

    // aggregate over folds; cells missing due to path truncation count as
    // absent, not zero
    std::map<std::pair<double, double>, std::vector<double>> by_cell;
    for (const auto& c : table.cells) {
        if (c.ok) by_cell[{c.alpha, c.lambda}].push_back(c.score);
    }
    for (const auto& [key, scores] : by_cell) {
        CvTable::Agg agg;
        agg.alpha = key.first;
        agg.lambda = key.second;
        agg.n_ok = static_cast<int>(scores.size());
        double m = 0.0;
        for (const double s : scores) m += s;
        m /= scores.size();
        double v = 0.0;
        for (const double s : scores) v += sqr(s - m);
        agg.mean = m;
        agg.sd = scores.size() > 1 ? std::sqrt(v / (scores.size() - 1)) : 0.0;
        table.aggregated.push_back(agg);
    }

    // best cell: highest mean score; ties toward larger lambda (sparser),
    // then larger alpha
    double best_mean = -kInf;
    table.best_lambda = -kInf;
    table.best_alpha = -kInf;
    for (const auto& agg : table.aggregated) {
        if (agg.n_ok == 0) continue;
        bool better = false;
        if (agg.mean > best_mean) {
            better = true;
        } else if (agg.mean == best_mean) {
            better = agg.lambda > table.best_lambda ||
                     (agg.lambda == table.best_lambda && agg.alpha > table.best_alpha);
        }
        if (better) {
            best_mean = agg.mean;
            table.best_lambda = agg.lambda;
            table.best_alpha = agg.alpha;
        }
    }
    if (best_mean == -kInf) throw Error("cross_validate: every cell failed");
    return table;
}

// ---------------------------------------------------------------------------
// Repeated-split stability selection (the application workflow): R random
// splits, per-split tuning and fit, selection frequencies and split-averaged
// coefficients for the downstream risk score.
// ---------------------------------------------------------------------------

struct StabilityConfig {
    int repeats = 20;
    double test_fraction = 0.2;
    CvConfig tuner;
    // tune alpha by test-set score, as in the application workflow; the
    // default tunes everything on training folds
    bool alpha_on_test = false;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct StabilityReport {
    Eigen::VectorXi freq_b, freq_beta;        // selection counts over repeats
    std::vector<int> union_support_b, union_support_beta;
    Eigen::VectorXd avg_coef_b, avg_coef_beta;  // means over repeats, zeros kept
    std::vector<double> test_scores;            // per-repeat held-out C
    std::vector<double> best_lambda, best_alpha;
    int failures = 0;
};

inline StabilityReport repeated_split_selection(const SurvivalDataset& ds,
                                                const StabilityConfig& cfg)
{
    if (cfg.repeats < 1) throw Error("repeated_split_selection: need R >= 1");
    const Eigen::Index p1p = ds.z_pen.cols(), p2p = ds.x_pen.cols();

    struct RepOut {
        bool ok = false;
        Eigen::VectorXd b_p, beta_p;
        double score = kNaN;
        double lambda = kNaN, alpha = kNaN;
    };
    std::vector<RepOut> reps(cfg.repeats);

    parallel_for(cfg.repeats, cfg.threads, [&](std::size_t r) {
        RepOut out;
        try {
            const std::uint64_t rep_seed =
                Rng(cfg.seed).split("stability-rep", r).state();
            const auto [train, test] =
                split_train_test(ds, cfg.test_fraction, rep_seed);
            CvConfig tuner = cfg.tuner;
            tuner.seed = rep_seed;
            tuner.threads = 1;

            double best_lambda = 0.0, best_alpha = 1.0;
            if (cfg.alpha_on_test) {
                // per-alpha lambda from training folds, alpha by test score
                double best_score = -kInf;
                for (const double alpha : tuner.alpha_grid) {
                    CvConfig one = tuner;
                    one.alpha_grid = {alpha};
                    const CvTable t = cross_validate(train, one);
                    const FitResult fit =
                        fit_at(train, t.best_lambda, alpha, tuner.stages, tuner.fit,
                               tuner.frailty, tuner.weight_cap);
                    const double sc =
                        held_out_score(fit.params, test, tuner.cure_weighting);
                    if (sc > best_score) {
                        best_score = sc;
                        best_lambda = t.best_lambda;
                        best_alpha = alpha;
                    }
                }
            } else {
                const CvTable t = cross_validate(train, tuner);
                best_lambda = t.best_lambda;
                best_alpha = t.best_alpha;
            }

            const FitResult fit = fit_at(train, best_lambda, best_alpha,
                                         tuner.stages, tuner.fit, tuner.frailty,
                                         tuner.weight_cap);
            out.b_p = fit.params.b_p;
            out.beta_p = fit.params.beta_p;
            out.score = held_out_score(fit.params, test, tuner.cure_weighting);
            out.lambda = best_lambda;
            out.alpha = best_alpha;
            out.ok = true;
        } catch (const Error&) {
        }
        reps[r] = std::move(out);
    });

    StabilityReport rep;
    rep.freq_b = Eigen::VectorXi::Zero(p1p);
    rep.freq_beta = Eigen::VectorXi::Zero(p2p);
    rep.avg_coef_b = Eigen::VectorXd::Zero(p1p);
    rep.avg_coef_beta = Eigen::VectorXd::Zero(p2p);
    int ok_count = 0;
    for (const auto& r : reps) {
        if (!r.ok) {
            ++rep.failures;
            continue;
        }
        ++ok_count;
        for (Eigen::Index j = 0; j < p1p; ++j) {
            if (std::abs(r.b_p[j]) > kSupportEps) ++rep.freq_b[j];
        }
        for (Eigen::Index j = 0; j < p2p; ++j) {
            if (std::abs(r.beta_p[j]) > kSupportEps) ++rep.freq_beta[j];
        }
        rep.avg_coef_b += r.b_p;
        rep.avg_coef_beta += r.beta_p;
        rep.test_scores.push_back(r.score);
        rep.best_lambda.push_back(r.lambda);
        rep.best_alpha.push_back(r.alpha);
    }
    if (ok_count > 0) {
        rep.avg_coef_b /= static_cast<double>(ok_count);
        rep.avg_coef_beta /= static_cast<double>(ok_count);
    }
    for (Eigen::Index j = 0; j < p1p; ++j) {
        if (rep.freq_b[j] > 0) rep.union_support_b.push_back(static_cast<int>(j));
    }
    for (Eigen::Index j = 0; j < p2p; ++j) {
        if (rep.freq_beta[j] > 0) rep.union_support_beta.push_back(static_cast<int>(j));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo benchmark over simulation scenarios.
// ---------------------------------------------------------------------------

enum class Method { PenMcfmEm, PenMcfmGmifs, McmGmifs };

inline const char* method_name(Method m)
{
    switch (m) {
        case Method::PenMcfmEm: return "penMCFM-EM";
        case Method::PenMcfmGmifs: return "penMCFM-GMIFS";
        case Method::McmGmifs: return "MCM-GMIFS";
    }
    return "?";
}

inline Method method_from_name(const std::string& name)
{
    if (name == "penMCFM-EM" || name == "em") return Method::PenMcfmEm;
    if (name == "penMCFM-GMIFS" || name == "gmifs") return Method::PenMcfmGmifs;
    if (name == "MCM-GMIFS" || name == "mcm-gmifs") return Method::McmGmifs;
    throw Error("unknown method: " + name);
}

struct BenchConfig {
    int replications = 10;
    double test_fraction = 0.2;
    std::vector<Method> methods{Method::PenMcfmEm, Method::PenMcfmGmifs,
                                Method::McmGmifs};
    CvConfig tuner;           // used by the EM method
    GmifsOptions gmifs;       // used by the stagewise methods
    FitOptions oracle_fit;
    int threads = 1;
};

// Everything one replication produces for one method.
struct RepMetrics {
    bool ok = false;
    std::string error;
    SelectionMetrics sel_beta, sel_b;
    ErrorMetrics err_beta, err_b;
    double bias_pi = kNaN, mse_pi = kNaN;  // per-rep means over subjects
    double c_train = kNaN, c_test = kNaN;
    double c_cure_train = kNaN, c_cure_test = kNaN;
    int support_beta = 0, support_b = 0;
};

struct BenchRow {
    std::string scenario;
    double v = 0.0, rho = 0.0;
    std::string method;
    std::string metric;
    double mean = kNaN, sd = kNaN;
    int n_ok = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    int failures = 0;
};

namespace detail {

inline RepMetrics evaluate_fit(const ParamSet& fit, const GeneratedTruth& truth,
                               const SurvivalDataset& train,
                               const SurvivalDataset& test,
                               const Eigen::VectorXd& oracle_beta,
                               const Eigen::VectorXd& oracle_b)
{
    RepMetrics m;
    m.sel_beta = selection_metrics(truth.params.beta_p, fit.beta_p);
    m.sel_b = selection_metrics(truth.params.b_p, fit.b_p);
    const SigmaSpec sigma{truth.rho, truth.block_size};
    m.err_beta = rme_err(fit.beta_p, truth.params.beta_p, sigma, oracle_beta);
    m.err_b = rme_err(fit.b_p, truth.params.b_p, sigma, oracle_b);

    // uncured-probability accuracy over the whole generated sample
    const Eigen::VectorXd zb_all = incidence_predictor(fit, truth.data);
    double bias = 0.0, mse = 0.0;
    for (Eigen::Index i = 0; i < truth.data.n(); ++i) {
        const double d = sigmoid(zb_all[i]) - truth.data.pi_true[i];
        bias += d;
        mse += d * d;
    }
    m.bias_pi = bias / static_cast<double>(truth.data.n());
    m.mse_pi = mse / static_cast<double>(truth.data.n());

    const auto score_c = [&](const SurvivalDataset& part, bool cure) {
        return held_out_score(fit, part, cure);
    };
    try {
        m.c_train = score_c(train, false);
        m.c_test = score_c(test, false);
        m.c_cure_train = score_c(train, true);
        m.c_cure_test = score_c(test, true);
    } catch (const Error&) {
        // degenerate concordance (no comparable pairs) stays NaN
    }
    m.support_beta = static_cast<int>(nonzero_support(fit.beta_p).size());
    m.support_b = static_cast<int>(nonzero_support(fit.b_p).size());
    m.ok = true;
    return m;
}

}  // namespace detail

inline std::vector<RepMetrics> run_replication(const SimulationScenario& base,
                                               int rep, const BenchConfig& cfg)
{
    const SimulationScenario sc = replication_scenario(base, rep);
    const GeneratedTruth truth = generate_dataset(sc);
    const std::uint64_t rep_seed = Rng(sc.seed).split("bench-split").state();
    const auto [train, test] = split_train_test(truth.data, cfg.test_fraction, rep_seed);

    // oracle fits once per replication (RME denominators)
    Eigen::VectorXd oracle_beta, oracle_b;
    {
        const FitResult oracle = fit_oracle(train, truth.support, truth.support,
                                            cfg.oracle_fit, cfg.tuner.frailty);
        oracle_beta = oracle.params.beta_p;
        oracle_b = oracle.params.b_p;
    }

    std::vector<RepMetrics> out(cfg.methods.size());
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        RepMetrics m;
        try {
            ParamSet fitted;
            switch (cfg.methods[mi]) {
                case Method::PenMcfmEm: {
                    CvConfig tuner = cfg.tuner;
                    tuner.seed = rep_seed;
                    tuner.threads = 1;
                    const CvTable t = cross_validate(train, tuner);
                    fitted = fit_at(train, t.best_lambda, t.best_alpha, tuner.stages,
                                    tuner.fit, tuner.frailty, tuner.weight_cap)
                                 .params;
                    break;
                }
                case Method::PenMcfmGmifs: {
                    GmifsOptions go = cfg.gmifs;
                    go.frailty_enabled = true;
                    fitted = gmifs_fit(train, go).selected;
                    break;
                }
                case Method::McmGmifs: {
                    GmifsOptions go = cfg.gmifs;
                    go.frailty_enabled = false;
                    fitted = gmifs_fit(train, go).selected;
                    break;
                }
            }
            m = detail::evaluate_fit(fitted, truth, train, test, oracle_beta, oracle_b);
        } catch (const Error& e) {
            m.ok = false;
            m.error = e.what();
        }
        out[mi] = std::move(m);
    }
    return out;
}

// Mean/SD aggregation into the long-format report: one row per method-metric.
inline BenchReport run_monte_carlo(const SimulationScenario& scenario,
                                   const std::string& scenario_name,
                                   const BenchConfig& cfg)
{
    if (cfg.replications < 1) throw Error("run_monte_carlo: need M >= 1");
    std::vector<std::vector<RepMetrics>> reps(cfg.replications);
    parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
        reps[r] = run_replication(scenario, static_cast<int>(r), cfg);
    });

    BenchReport report;
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        const std::string mname = method_name(cfg.methods[mi]);
        const auto add_metric = [&](const std::string& metric,
                                    const std::function<double(const RepMetrics&)>& get) {
            std::vector<double> vals;
            for (int r = 0; r < cfg.replications; ++r) {
                const RepMetrics& m = reps[r][mi];
                if (!m.ok) continue;
                const double x = get(m);
                if (std::isfinite(x)) vals.push_back(x);
            }
            BenchRow row;
            row.scenario = scenario_name;
            row.v = scenario.v;
            row.rho = scenario.rho;
            row.method = mname;
            row.metric = metric;
            row.n_ok = static_cast<int>(vals.size());
            if (!vals.empty()) {
                double s = 0.0;
                for (const double x : vals) s += x;
                row.mean = s / vals.size();
                double ss = 0.0;
                for (const double x : vals) ss += sqr(x - row.mean);
                row.sd = vals.size() > 1 ? std::sqrt(ss / (vals.size() - 1)) : 0.0;
            }
            report.rows.push_back(std::move(row));
        };
        add_metric("sensitivity_beta", [](const RepMetrics& m) { return m.sel_beta.sensitivity; });
        add_metric("specificity_beta", [](const RepMetrics& m) { return m.sel_beta.specificity; });
        add_metric("fpr_beta", [](const RepMetrics& m) { return m.sel_beta.fpr; });
        add_metric("support_beta", [](const RepMetrics& m) { return double(m.support_beta); });
        add_metric("sensitivity_b", [](const RepMetrics& m) { return m.sel_b.sensitivity; });
        add_metric("specificity_b", [](const RepMetrics& m) { return m.sel_b.specificity; });
        add_metric("fpr_b", [](const RepMetrics& m) { return m.sel_b.fpr; });
        add_metric("support_b", [](const RepMetrics& m) { return double(m.support_b); });
        add_metric("rme_beta", [](const RepMetrics& m) { return m.err_beta.rme; });
        add_metric("err_beta", [](const RepMetrics& m) { return m.err_beta.err; });
        add_metric("rme_b", [](const RepMetrics& m) { return m.err_b.rme; });
        add_metric("err_b", [](const RepMetrics& m) { return m.err_b.err; });
        add_metric("bias_pi", [](const RepMetrics& m) { return m.bias_pi; });
        add_metric("mse_pi", [](const RepMetrics& m) { return m.mse_pi; });
        add_metric("c_train", [](const RepMetrics& m) { return m.c_train; });
        add_metric("c_test", [](const RepMetrics& m) { return m.c_test; });
        add_metric("c_cure_train", [](const RepMetrics& m) { return m.c_cure_train; });
        add_metric("c_cure_test", [](const RepMetrics& m) { return m.c_cure_test; });
        for (int r = 0; r < cfg.replications; ++r) {
            if (!reps[r][mi].ok) ++report.failures;
        }
    }
    return report;
}

inline BenchReport benchmark(const std::vector<SimulationScenario>& scenarios,
                             const std::vector<std::string>& names,
                             const BenchConfig& cfg)
{
    if (scenarios.size() != names.size()) {
        throw Error("benchmark: scenario/name count mismatch");
    }
    BenchReport all;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const BenchReport one = run_monte_carlo(scenarios[i], names[i], cfg);
        all.rows.insert(all.rows.end(), one.rows.begin(), one.rows.end());
        all.failures += one.failures;
    }
    return all;
}

}  // namespace penmcfm
