#pragma once

#include <fstream>

#include <json.hpp>

#include "penmcfm/csv.hpp"
#include "penmcfm/tuning.hpp"

namespace penmcfm {

using json = nlohmann::json;

inline json to_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline json to_json(const Eigen::VectorXi& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Eigen::VectorXd vec_from_json(const json& a)
{
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
    return v;
}

// theta is omitted when the frailty is disabled
inline json params_to_json(const ParamSet& p)
{
    json j;
    j["alpha"] = p.alpha;
    j["gamma"] = p.gamma;
    if (p.frailty_enabled) j["theta"] = p.theta;
    j["beta_u"] = to_json(p.beta_u);
    j["beta_p"] = to_json(p.beta_p);
    j["b0"] = p.b0;
    j["b_u"] = to_json(p.b_u);
    j["b_p"] = to_json(p.b_p);
    j["frailty_enabled"] = p.frailty_enabled;
    return j;
}

inline ParamSet params_from_json(const json& j)
{
    ParamSet p;
    p.alpha = j.at("alpha");
    p.gamma = j.at("gamma");
    p.frailty_enabled = j.at("frailty_enabled");
    p.theta = p.frailty_enabled ? double(j.at("theta")) : 1.0;
    p.beta_u = vec_from_json(j.at("beta_u"));
    p.beta_p = vec_from_json(j.at("beta_p"));
    p.b0 = j.at("b0");
    p.b_u = vec_from_json(j.at("b_u"));
    p.b_p = vec_from_json(j.at("b_p"));
    return p;
}

inline json fit_result_to_json(const FitResult& f)
{
    json j;
    j["params"] = params_to_json(f.params);
    j["estep"] = {{"p", to_json(f.estep.p)},
                  {"a", to_json(f.estep.a)},
                  {"b", to_json(f.estep.b)},
                  {"c", to_json(f.estep.c)}};
    j["iterations"] = f.iterations;
    json trace = json::array();
    for (const auto& t : f.objective_trace) trace.push_back({t[0], t[1], t[2]});
    j["objective_trace"] = trace;
    j["converged"] = f.converged;
    j["theta_at_bound"] = f.theta_at_bound;
    j["selected_support_beta"] = f.selected_support_beta;
    j["selected_support_b"] = f.selected_support_b;
    return j;
}

inline json path_result_to_json(const PathResult& path)
{
    json j;
    j["lambda_grid"] = to_json(path.config.lambda_grid);
    j["alpha_enet"] = path.config.alpha_enet;
    j["stages"] = path.config.stages;
    j["weight_cap"] = path.config.weight_cap;
    json entries = json::array();
    for (const auto& e : path.entries) {
        entries.push_back({{"lambda", e.lambda},
                           {"stage", e.stage},
                           {"fit", fit_result_to_json(e.fit)}});
    }
    j["entries"] = entries;
    return j;
}

inline json scenario_to_json(const SimulationScenario& sc)
{
    json j;
    j["n"] = sc.n;
    j["P"] = sc.P;
    j["s"] = sc.s;
    j["v"] = sc.v;
    j["rho"] = sc.rho;
    j["block_size"] = sc.block_size;
    j["alpha"] = sc.alpha;
    j["gamma"] = sc.gamma;
    j["theta"] = sc.theta;
    j["b0"] = sc.b0;
    j["b_u"] = to_json(sc.b_u);
    j["beta_u_range"] = sc.beta_u_range;
    j["lambda_c"] = sc.lambda_c;
    j["categorical_weights"] = to_json(sc.categorical_weights);
    j["P2u"] = sc.P2u;
    j["seed"] = sc.seed;
    return j;
}

inline SimulationScenario scenario_from_json(const json& j)
{
    SimulationScenario sc;
    sc.n = j.value("n", sc.n);
    sc.P = j.value("P", sc.P);
    sc.s = j.value("s", sc.s);
    sc.v = j.value("v", sc.v);
    sc.rho = j.value("rho", sc.rho);
    sc.block_size = j.value("block_size", sc.block_size);
    sc.alpha = j.value("alpha", sc.alpha);
    sc.gamma = j.value("gamma", sc.gamma);
    sc.theta = j.value("theta", sc.theta);
    sc.b0 = j.value("b0", sc.b0);
    if (j.contains("b_u")) sc.b_u = vec_from_json(j["b_u"]);
    sc.beta_u_range = j.value("beta_u_range", sc.beta_u_range);
    sc.lambda_c = j.value("lambda_c", sc.lambda_c);
    if (j.contains("categorical_weights")) {
        sc.categorical_weights = vec_from_json(j["categorical_weights"]);
    }
    sc.P2u = j.value("P2u", sc.P2u);
    sc.seed = j.value("seed", sc.seed);
    sc.validate();
    return sc;
}

inline json roles_to_json(const ColumnRoles& roles)
{
    json j;
    j["time"] = roles.time;
    j["status"] = roles.status;
    j["z_unpen"] = roles.z_unpen;
    j["z_pen"] = roles.z_pen;
    j["x_unpen"] = roles.x_unpen;
    j["x_pen"] = roles.x_pen;
    j["shared_penalized"] = roles.shared_penalized;
    return j;
}

inline ColumnRoles roles_from_json(const json& j)
{
    ColumnRoles roles;
    roles.time = j.at("time");
    roles.status = j.at("status");
    const auto names = [](const json& a) {
        return std::vector<std::string>(a.begin(), a.end());
    };
    if (j.contains("z_unpen")) roles.z_unpen = names(j["z_unpen"]);
    if (j.contains("z_pen")) roles.z_pen = names(j["z_pen"]);
    if (j.contains("x_unpen")) roles.x_unpen = names(j["x_unpen"]);
    if (j.contains("x_pen")) roles.x_pen = names(j["x_pen"]);
    roles.shared_penalized = j.value("shared_penalized", false);
    return roles;
}

inline json truth_to_json(const GeneratedTruth& truth)
{
    json j;
    j["params"] = params_to_json(truth.params);
    j["support_b"] = truth.support;
    j["support_beta"] = truth.support;
    j["y_true"] = to_json(truth.data.y_true);
    j["pi_true"] = to_json(truth.data.pi_true);
    j["rho"] = truth.rho;
    j["block_size"] = truth.block_size;
    return j;
}

inline void write_json(const json& j, const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

inline json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error("cannot parse JSON " + path + ": " + e.what());
    }
    return j;
}

inline void write_cv_table_csv(const CvTable& table, const std::string& path)
{
    CsvWriter w(path);
    w.header({"alpha_enet", "lambda", "fold", "score", "ok"});
    for (const auto& c : table.cells) {
        w.row({c.alpha, c.lambda, static_cast<double>(c.fold), c.score,
               static_cast<double>(c.ok)});
    }
}

inline void write_cv_summary_csv(const CvTable& table, const std::string& path)
{
    CsvWriter w(path);
    w.header({"alpha_enet", "lambda", "mean_score", "sd_score", "n_folds"});
    for (const auto& a : table.aggregated) {
        w.row({a.alpha, a.lambda, a.mean, a.sd, static_cast<double>(a.n_ok)});
    }
}

inline void write_bench_csv(const BenchReport& report, const std::string& path)
{
    CsvWriter w(path);
    w.header({"scenario", "v", "rho", "method", "metric", "mean", "sd", "n_ok"});
    for (const auto& r : report.rows) {
        w.row_of_strings({r.scenario, format_double(r.v), format_double(r.rho),
                          r.method, r.metric, format_double(r.mean),
                          format_double(r.sd), std::to_string(r.n_ok)});
    }
}

inline void write_dataset_csv(const SurvivalDataset& ds, const ColumnRoles& roles,
                              const std::string& path)
{
    CsvWriter w(path);
    std::vector<std::string> head{roles.time, roles.status};
    head.insert(head.end(), roles.z_unpen.begin(), roles.z_unpen.end());
    head.insert(head.end(), roles.x_unpen.begin(), roles.x_unpen.end());
    head.insert(head.end(), roles.z_pen.begin(), roles.z_pen.end());
    if (!roles.shared_penalized) {
        head.insert(head.end(), roles.x_pen.begin(), roles.x_pen.end());
    }
    w.header(head);
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        std::vector<double> cells{ds.time[i], static_cast<double>(ds.status[i])};
        for (Eigen::Index j = 0; j < ds.z_unpen.cols(); ++j) cells.push_back(ds.z_unpen(i, j));
        for (Eigen::Index j = 0; j < ds.x_unpen.cols(); ++j) cells.push_back(ds.x_unpen(i, j));
        for (Eigen::Index j = 0; j < ds.z_pen.cols(); ++j) cells.push_back(ds.z_pen(i, j));
        if (!roles.shared_penalized) {
            for (Eigen::Index j = 0; j < ds.x_pen.cols(); ++j) cells.push_back(ds.x_pen(i, j));
        }
        w.row(cells);
    }
}

// Column naming used by cmd_simulate; fit consumes the same roles file.
inline ColumnRoles simulated_roles(const SimulationScenario& sc)
{
    ColumnRoles roles;
    roles.time = "time";
    roles.status = "status";
    for (Eigen::Index j = 0; j + 1 < sc.categorical_weights.size(); ++j) {
        roles.z_unpen.push_back("zu_" + std::to_string(j));
    }
    for (int j = 0; j < sc.P2u; ++j) roles.x_unpen.push_back("xu_" + std::to_string(j));
    for (int j = 0; j < sc.P; ++j) roles.z_pen.push_back("p_" + std::to_string(j));
    roles.x_pen = roles.z_pen;
    roles.shared_penalized = true;
    return roles;
}

}  // namespace penmcfm
