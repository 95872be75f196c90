#pragma once

#include <vector>

#include "penmcfm/csv.hpp"
#include "penmcfm/em.hpp"

namespace penmcfm {

// Monotone incremental forward stagewise fitting of the observed likelihood.
// Every penalized coordinate is expanded into a nonnegative (pos, neg) pair;
// each step increments the single expanded coordinate whose gradient of the
// negative observed log-likelihood is most negative.
struct StagewiseState {
    Eigen::VectorXd pos_b, neg_b;        // expanded b_p
    Eigen::VectorXd pos_beta, neg_beta;  // expanded beta_p
    struct Increment {
        int block;  // 0 = b_p, 1 = beta_p
        int index;
        int sign;  // +1 hits pos, -1 hits neg
    };
    std::vector<Increment> increments;  // increments[s] produced step s+1
    struct TraceRow {
        int step;
        double loglik;
        double aic;
        int df;
    };
    std::vector<TraceRow> trace;  // one row per step, starting at step 0
    // unpenalized parameters in effect from a given step onward
    struct UnpenSnapshot {
        int from_step;
        double alpha, gamma, theta, b0;
        Eigen::VectorXd b_u, beta_u;
    };
    std::vector<UnpenSnapshot> snapshots;
    int steps = 0;
    double epsilon = 1e-3;

    Eigen::VectorXd effective_b() const { return pos_b - neg_b; }
    Eigen::VectorXd effective_beta() const { return pos_beta - neg_beta; }
};

struct GmifsOptions {
    double epsilon = 1e-3;
    int max_steps = 5000;
    int refresh_every = 10;
    double cycle_tol = 1e-8;  // minimum improvement per refresh cycle
    bool frailty_enabled = true;
};

struct GmifsResult {
    StagewiseState state;
    ParamSet selected;  // AIC-minimizing step along the path
    int selected_step = 0;
    double selected_loglik = 0.0;
};

// Effective penalized coefficients after the first `step` increments.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gmifs_path_coefficients(
    const StagewiseState& state, int step)
{
    if (step < 0 || step > state.steps) {
        throw Error("gmifs_path_coefficients: step out of range");
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(state.pos_b.size());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(state.pos_beta.size());
    for (int s = 0; s < step; ++s) {
        const auto& inc = state.increments[s];
        auto& target = inc.block == 0 ? b : beta;
        target[inc.index] += inc.sign * state.epsilon;
    }
    return {b, beta};
}

namespace detail {

// Observed negative log-likelihood (1/n scale) over the unpenalized
// coordinates [log alpha, log gamma, (log theta), b0, b_u, beta_u], with the
// penalized blocks held fixed.
inline SmoothObjective unpenalized_observed_objective(const SurvivalDataset& ds,
                                                      const ParamSet& fixed)
{
    const Eigen::Index p1u = ds.z_unpen.cols();
    const Eigen::Index p2u = ds.x_unpen.cols();
    const bool frailty = fixed.frailty_enabled;
    const Eigen::Index dim = 2 + (frailty ? 1 : 0) + 1 + p1u + p2u;
    const double inv_n = 1.0 / static_cast<double>(ds.n());
    auto base = std::make_shared<ParamSet>(fixed);

    const auto unpack = [base, p1u, p2u, frailty](const Eigen::VectorXd& x) {
        ParamSet p = *base;
        Eigen::Index k = 0;
        p.alpha = std::exp(x[k++]);
        p.gamma = std::exp(x[k++]);
        if (frailty) p.theta = std::exp(x[k++]);
        p.b0 = x[k++];
        p.b_u = x.segment(k, p1u);
        k += p1u;
        p.beta_u = x.segment(k, p2u);
        return p;
    };

    SmoothObjective obj;
    obj.dim = dim;
    obj.value_grad = [&ds, unpack, inv_n, p1u, p2u, frailty](
                         const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        if (frailty && (x[2] < std::log(1e-4) - 2.0 || x[2] > std::log(1e4) + 2.0)) {
            g.setZero(x.size());
            return kInf;
        }
        const ParamSet p = unpack(x);
        const ObservedGrad og = observed_loglik_grad(p, ds);
        g.resize(x.size());
        Eigen::Index k = 0;
        g[k++] = -inv_n * og.d_log_alpha;
        g[k++] = -inv_n * og.d_log_gamma;
        if (frailty) g[k++] = -inv_n * og.d_log_theta;
        g[k++] = -inv_n * og.d_b0;
        g.segment(k, p1u) = -inv_n * og.d_b_u;
        k += p1u;
        g.segment(k, p2u) = -inv_n * og.d_beta_u;
        return -inv_n * og.loglik;
    };
    obj.value = [obj_vg = obj.value_grad](const Eigen::VectorXd& x) {
        Eigen::VectorXd g;
        return obj_vg(x, g);
    };
    return obj;
}

inline Eigen::VectorXd pack_unpenalized(const ParamSet& p)
{
    const bool frailty = p.frailty_enabled;
    Eigen::VectorXd x(2 + (frailty ? 1 : 0) + 1 + p.b_u.size() + p.beta_u.size());
    Eigen::Index k = 0;
    x[k++] = std::log(p.alpha);
    x[k++] = std::log(p.gamma);
    if (frailty) x[k++] = std::log(p.theta);
    x[k++] = p.b0;
    x.segment(k, p.b_u.size()) = p.b_u;
    k += p.b_u.size();
    x.segment(k, p.beta_u.size()) = p.beta_u;
    return x;
}

inline void refresh_unpenalized(const SurvivalDataset& ds, ParamSet& params)
{
    const SmoothObjective obj = unpenalized_observed_objective(ds, params);
    SolveOptions sopts;
    sopts.tol = 1e-7;
    sopts.max_iter = 400;
    const double before = observed_log_likelihood(params, ds);
    const SolveResult r = smooth_minimize(obj, pack_unpenalized(params), sopts);
    ParamSet cand = params;
    Eigen::Index k = 0;
    cand.alpha = std::exp(r.x[k++]);
    cand.gamma = std::exp(r.x[k++]);
    if (params.frailty_enabled) {
        cand.theta = std::clamp(std::exp(r.x[k++]), 1e-4, 1e4);
    }
    cand.b0 = r.x[k++];
    cand.b_u = r.x.segment(k, params.b_u.size());
    k += params.b_u.size();
    cand.beta_u = r.x.segment(k, params.beta_u.size());
    if (observed_log_likelihood(cand, ds) >= before) params = cand;
}

}  // namespace detail

inline GmifsResult gmifs_fit(const SurvivalDataset& ds, const GmifsOptions& opts = {})
{
    if (!(opts.epsilon > 0.0)) throw Error("gmifs_fit: epsilon must be positive");
    const Eigen::Index p1p = ds.z_pen.cols(), p2p = ds.x_pen.cols();

    ParamSet params = initialize(ds, opts.frailty_enabled);
    params.theta = 1.0;
    detail::refresh_unpenalized(ds, params);

    StagewiseState state;
    state.epsilon = opts.epsilon;
    state.pos_b = Eigen::VectorXd::Zero(p1p);
    state.neg_b = Eigen::VectorXd::Zero(p1p);
    state.pos_beta = Eigen::VectorXd::Zero(p2p);
    state.neg_beta = Eigen::VectorXd::Zero(p2p);

    const int n_unpen_params = 2 + (opts.frailty_enabled ? 1 : 0) + 1 +
                               static_cast<int>(ds.z_unpen.cols()) +
                               static_cast<int>(ds.x_unpen.cols());
    const auto push_trace = [&](int step, double ll) {
        int df = n_unpen_params;
        df += static_cast<int>(nonzero_support(state.effective_b()).size());
        df += static_cast<int>(nonzero_support(state.effective_beta()).size());
        const double aic = -2.0 * ll + 2.0 * df;
        state.trace.push_back({step, ll, aic, df});
    };
    const auto snapshot = [&](int from_step) {
        state.snapshots.push_back({from_step, params.alpha, params.gamma,
                                   params.theta, params.b0, params.b_u,
                                   params.beta_u});
    };

    double loglik = observed_log_likelihood(params, ds);
    if (!std::isfinite(loglik)) throw Error("gmifs_fit: non-finite likelihood at step 0");
    snapshot(0);
    push_trace(0, loglik);

    double cycle_ref = loglik;
    for (int step = 1; step <= opts.max_steps; ++step) {
        params.b_p = state.effective_b();
        params.beta_p = state.effective_beta();
        const ObservedGrad og = observed_loglik_grad(params, ds);

        // most negative expanded-coordinate gradient of -loglik = largest |g|
        int best_block = -1, best_index = -1, best_sign = 0;
        double best_mag = 0.0;
        for (Eigen::Index j = 0; j < p1p; ++j) {
            const double g = og.d_b_p[j];
            if (std::abs(g) > best_mag) {
                best_mag = std::abs(g);
                best_block = 0;
                best_index = static_cast<int>(j);
                best_sign = g > 0.0 ? 1 : -1;
            }
        }
        for (Eigen::Index j = 0; j < p2p; ++j) {
            const double g = og.d_beta_p[j];
            if (std::abs(g) > best_mag) {
                best_mag = std::abs(g);
                best_block = 1;
                best_index = static_cast<int>(j);
                best_sign = g > 0.0 ? 1 : -1;
            }
        }
        if (best_block < 0) break;  // exact stationarity over the expanded set

        if (best_block == 0) {
            (best_sign > 0 ? state.pos_b : state.neg_b)[best_index] += opts.epsilon;
        } else {
            (best_sign > 0 ? state.pos_beta : state.neg_beta)[best_index] += opts.epsilon;
        }
        state.increments.push_back({best_block, best_index, best_sign});
        state.steps = step;

        params.b_p = state.effective_b();
        params.beta_p = state.effective_beta();

        const bool refresh = (step % opts.refresh_every) == 0;
        if (refresh) detail::refresh_unpenalized(ds, params);
        loglik = observed_log_likelihood(params, ds);
        if (!std::isfinite(loglik)) {
            throw Error("gmifs_fit: non-finite likelihood at step " + std::to_string(step));
        }
        if (refresh) snapshot(step);
        push_trace(step, loglik);
        if (refresh) {
            if (loglik - cycle_ref < opts.cycle_tol) break;
            cycle_ref = loglik;
        }
    }

    GmifsResult out;
    // AIC-minimizing step; ties resolve to the earlier (sparser) step
    int best_step = 0;
    for (const auto& row : state.trace) {
        if (row.aic < state.trace[best_step].aic) best_step = row.step;
    }
    const auto [b_sel, beta_sel] = gmifs_path_coefficients(state, best_step);
    ParamSet sel = params;
    for (const auto& snap : state.snapshots) {
        if (snap.from_step <= best_step) {
            sel.alpha = snap.alpha;
            sel.gamma = snap.gamma;
            sel.theta = snap.theta;
            sel.b0 = snap.b0;
            sel.b_u = snap.b_u;
            sel.beta_u = snap.beta_u;
        }
    }
    sel.b_p = b_sel;
    sel.beta_p = beta_sel;
    out.selected = sel;
    out.selected_step = best_step;
    out.selected_loglik = state.trace[best_step].loglik;
    out.state = std::move(state);
    return out;
}

// step, loglik, aic, then the effective coefficient values at that step
inline void write_gmifs_path_csv(const StagewiseState& state, const std::string& path)
{
    CsvWriter w(path);
    std::vector<std::string> head{"step", "loglik", "aic"};
    for (Eigen::Index j = 0; j < state.pos_b.size(); ++j) {
        head.push_back("b_p_" + std::to_string(j));
    }
    for (Eigen::Index j = 0; j < state.pos_beta.size(); ++j) {
        head.push_back("beta_p_" + std::to_string(j));
    }
    w.header(head);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(state.pos_b.size());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(state.pos_beta.size());
    for (const auto& row : state.trace) {
        if (row.step > 0) {
            const auto& inc = state.increments[row.step - 1];
            (inc.block == 0 ? b : beta)[inc.index] += inc.sign * state.epsilon;
        }
        std::vector<double> cells{static_cast<double>(row.step), row.loglik, row.aic};
        for (Eigen::Index j = 0; j < b.size(); ++j) cells.push_back(b[j]);
        for (Eigen::Index j = 0; j < beta.size(); ++j) cells.push_back(beta[j]);
        w.row(cells);
    }
}

}  // namespace penmcfm
