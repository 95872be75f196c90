#pragma once

#include <array>
#include <optional>
#include <vector>

#include "penmcfm/solver.hpp"

namespace penmcfm {

// Elastic-net configuration shared by the whole lambda path. Adaptive weights
// live here as well: unit weights give the plain elastic net (stage 1),
// weights 1/|coef| from a previous stage give the adaptive variant (stage 2).
struct PenaltyConfig {
    Eigen::VectorXd lambda_grid;  // strictly descending, positive
    double alpha_enet = 1.0;      // 1 = lasso, 0 = ridge
    int stages = 2;               // 1 or 2
    double weight_cap = 1e6;
    // optional multipliers decoupling the incidence/latency penalty levels
    double lambda_scale_b = 1.0;
    double lambda_scale_beta = 1.0;
    // grid generation when lambda_grid is empty
    int n_lambda = 50;
    double min_ratio = 0.01;
    // stop descending once a stage-1 support exceeds this many coefficients
    // per block (0 = no cap); the grid is truncated to the fitted prefix
    int max_support = 0;

    void validate() const
    {
        for (Eigen::Index i = 1; i < lambda_grid.size(); ++i) {
            if (!(lambda_grid[i] < lambda_grid[i - 1])) {
                throw Error("PenaltyConfig: lambda grid must be strictly descending");
            }
        }
        if (lambda_grid.size() > 0 && !(lambda_grid[lambda_grid.size() - 1] > 0.0)) {
            throw Error("PenaltyConfig: lambda values must be positive");
        }
        if (!(alpha_enet >= 0.0 && alpha_enet <= 1.0)) {
            throw Error("PenaltyConfig: alpha_enet must lie in [0,1]");
        }
        if (stages != 1 && stages != 2) {
            throw Error("PenaltyConfig: stages must be 1 or 2");
        }
    }
};

// One (lambda, weights) point of the path; what a single EM run sees.
struct PenaltySpec {
    double lambda = 0.0;
    double alpha_enet = 1.0;
    double lambda_scale_b = 1.0;
    double lambda_scale_beta = 1.0;
    Eigen::VectorXd weights_b, weights_beta;  // per-coefficient, stage weights
    bool freeze_penalized = false;            // hold b_p, beta_p at zero

    double ridge_b() const { return lambda * lambda_scale_b * (1.0 - alpha_enet); }
    double ridge_beta() const { return lambda * lambda_scale_beta * (1.0 - alpha_enet); }
    double l1_b() const { return lambda * lambda_scale_b * alpha_enet; }
    double l1_beta() const { return lambda * lambda_scale_beta * alpha_enet; }

    static PenaltySpec unpenalized(Eigen::Index p1p, Eigen::Index p2p)
    {
        PenaltySpec s;
        s.weights_b = Eigen::VectorXd::Ones(p1p);
        s.weights_beta = Eigen::VectorXd::Ones(p2p);
        return s;
    }
};

struct FitOptions {
    double tol = 1e-5;       // on each expected component, 1/n scale
    int max_iter = 500;
    double inner_tol = 1e-7;
    int inner_max_iter = 1000;
    // cheap unpenalized conditional-EM cycles appended to each M-step
    int max_refine_cycles = 50;
};

struct SubStepRecord {
    const char* name = "";
    double before = 0.0;
    double after = 0.0;
};

struct MStepDiag {
    std::vector<SubStepRecord> steps;
};

struct FitResult {
    ParamSet params;
    EStepCache estep;
    int iterations = 0;
    // per-iteration (El_c1, El_c2, El_c3), penalized, 1/n scale
    std::vector<std::array<double, 3>> objective_trace;
    bool converged = false;
    bool theta_at_bound = false;
    std::vector<int> selected_support_beta, selected_support_b;
};

struct PathResult {
    PenaltyConfig config;
    struct Entry {
        double lambda = 0.0;
        int stage = 1;
        FitResult fit;
    };
    std::vector<Entry> entries;
};

inline constexpr double kSupportEps = 1e-12;

inline std::vector<int> nonzero_support(const Eigen::VectorXd& v)
{
    std::vector<int> idx;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
        if (std::abs(v[j]) > kSupportEps) idx.push_back(static_cast<int>(j));
    }
    return idx;
}

namespace detail {

// Penalized expected components on the 1/n scale; larger is better.
inline double el_c1_value(const SurvivalDataset& ds, const EStepCache& cache,
                          const ParamSet& p, const PenaltySpec& pen,
                          const Eigen::VectorXd* offset_zb = nullptr)
{
    const SmoothObjective obj =
        negloglik_incidence(ds, cache.p, pen.ridge_b(), offset_zb);
    double l1 = 0.0;
    for (Eigen::Index j = 0; j < p.b_p.size(); ++j) {
        l1 += pen.weights_b[j] * std::abs(p.b_p[j]);
    }
    return -(obj.value(pack_incidence(p)) + pen.l1_b() * l1);
}

inline double el_c2_value(const SurvivalDataset& ds, const EStepCache& cache,
                          const ParamSet& p, const PenaltySpec& pen,
                          const Eigen::VectorXd* offset_xb = nullptr)
{
    const SmoothObjective obj =
        negloglik_latency(ds, cache.c, pen.ridge_beta(), offset_xb);
    double l1 = 0.0;
    for (Eigen::Index j = 0; j < p.beta_p.size(); ++j) {
        l1 += pen.weights_beta[j] * std::abs(p.beta_p[j]);
    }
    return -(obj.value(pack_latency(p)) + pen.l1_beta() * l1);
}

inline double el_c3_component(const SurvivalDataset& ds, const EStepCache& cache,
                              const ParamSet& p)
{
    if (!p.frailty_enabled) return 0.0;
    return el_c3_value(p.theta, cache.a, cache.b, ds.status) /
           static_cast<double>(ds.n());
}

}  // namespace detail

// One M-step: conditional maximization in the Algorithm-1 order. Every
// sub-step is warm started from the incumbent and kept only if it does not
// worsen its own component, so ascent holds by construction.
inline ParamSet m_step(const ParamSet& params, const EStepCache& cache,
                       const PenaltySpec& pen, const SurvivalDataset& ds,
                       const FitOptions& opts = {}, MStepDiag* diag = nullptr,
                       bool* theta_at_bound = nullptr,
                       const Eigen::VectorXd* offset_zb = nullptr,
                       const Eigen::VectorXd* offset_xb = nullptr)
{
    ParamSet cur = params;
    SolveOptions sopts;
    sopts.tol = opts.inner_tol;
    sopts.max_iter = opts.inner_max_iter;

    const Eigen::Index p1u = ds.z_unpen.cols(), p1p = ds.z_pen.cols();
    const Eigen::Index p2u = ds.x_unpen.cols(), p2p = ds.x_pen.cols();
    const IncidenceLayout inc_lay{p1u, p1p};
    const LatencyLayout lat_lay{p2u, p2p};

    const auto record = [&](const char* name, double before, double after) {
        if (diag) diag->steps.push_back({name, before, after});
    };

    // L1 weight vectors over full coordinate layouts (zero on unpenalized)
    Eigen::VectorXd inc_l1 = Eigen::VectorXd::Zero(inc_lay.dim());
    if (p1p > 0) inc_l1.tail(p1p) = pen.l1_b() * pen.weights_b;
    Eigen::VectorXd lat_l1 = Eigen::VectorXd::Zero(lat_lay.dim());
    if (p2p > 0) lat_l1.tail(p2p) = pen.l1_beta() * pen.weights_beta;

    // 1. update b_p
    if (p1p > 0 && !pen.freeze_penalized) {
        const double before = detail::el_c1_value(ds, cache, cur, pen, offset_zb);
        const SmoothObjective obj =
            negloglik_incidence(ds, cache.p, pen.ridge_b(), offset_zb);
        std::vector<bool> free(inc_lay.dim(), false);
        for (Eigen::Index j = inc_lay.pen_offset(); j < inc_lay.dim(); ++j) free[j] = true;
        const SolveResult r = solve_l1_smooth(obj, inc_l1, pack_incidence(cur), sopts, &free);
        ParamSet cand = cur;
        unpack_incidence(r.x, cand);
        const double after = detail::el_c1_value(ds, cache, cand, pen, offset_zb);
        if (after >= before) cur = cand;
        record("b_p", before, std::max(before, after));
    }

    // 2. update beta_p
    if (p2p > 0 && !pen.freeze_penalized) {
        const double before = detail::el_c2_value(ds, cache, cur, pen, offset_xb);
        const SmoothObjective obj =
            negloglik_latency(ds, cache.c, pen.ridge_beta(), offset_xb);
        std::vector<bool> free(lat_lay.dim(), false);
        for (Eigen::Index j = lat_lay.pen_offset(); j < lat_lay.dim(); ++j) free[j] = true;
        const SolveResult r = solve_l1_smooth(obj, lat_l1, pack_latency(cur), sopts, &free);
        ParamSet cand = cur;
        unpack_latency(r.x, cand);
        const double after = detail::el_c2_value(ds, cache, cand, pen, offset_xb);
        if (after >= before) cur = cand;
        record("beta_p", before, std::max(before, after));
    }

    // 3. update (b0, b_u) given b_p
    {
        const double before = detail::el_c1_value(ds, cache, cur, pen, offset_zb);
        const SmoothObjective obj =
            negloglik_incidence(ds, cache.p, pen.ridge_b(), offset_zb);
        std::vector<bool> free(inc_lay.dim(), false);
        for (Eigen::Index j = 0; j < inc_lay.pen_offset(); ++j) free[j] = true;
        const SolveResult r = solve_l1_smooth(obj, inc_l1, pack_incidence(cur), sopts, &free);
        ParamSet cand = cur;
        unpack_incidence(r.x, cand);
        const double after = detail::el_c1_value(ds, cache, cand, pen, offset_zb);
        if (after >= before) cur = cand;
        record("b0_bu", before, std::max(before, after));
    }

    // 4. update (alpha, gamma, beta_u) given c and beta_p
    {
        const double before = detail::el_c2_value(ds, cache, cur, pen, offset_xb);
        const SmoothObjective obj =
            negloglik_latency(ds, cache.c, pen.ridge_beta(), offset_xb);
        std::vector<bool> free(lat_lay.dim(), false);
        for (Eigen::Index j = 0; j < lat_lay.pen_offset(); ++j) free[j] = true;
        const SolveResult r = solve_l1_smooth(obj, lat_l1, pack_latency(cur), sopts, &free);
        ParamSet cand = cur;
        unpack_latency(r.x, cand);
        const double after = detail::el_c2_value(ds, cache, cand, pen, offset_xb);
        if (after >= before) cur = cand;
        record("alpha_gamma_beta_u", before, std::max(before, after));
    }

    // 5. update theta
    if (cur.frailty_enabled) {
        const double before = detail::el_c3_component(ds, cache, cur);
        const ThetaResult t = maximize_theta(cache.a, cache.b, ds.status);
        ParamSet cand = cur;
        cand.theta = t.theta;
        const double after = detail::el_c3_component(ds, cache, cand);
        if (after >= before) {
            cur = cand;
            if (theta_at_bound) *theta_at_bound = t.at_bound;
        }
        record("theta", before, std::max(before, after));
    }

    return cur;
}

namespace detail {

// The EM map on theta alone (other parameters and predictors fixed) has
// derivative approaching one when the frailty variance heads to zero, which
// makes plain iteration crawl. This jumps straight to the fixed point of
// theta -> argmax El_c3(e_step(theta)) by bisection on the residual, and
// keeps the jump only if the observed likelihood does not decrease.
inline void theta_fixed_point(ParamSet& params, const Eigen::VectorXd& time,
                              const Eigen::VectorXi& status,
                              const Eigen::VectorXd& zb, const Eigen::VectorXd& xb,
                              bool* at_bound)
{
    if (!params.frailty_enabled) return;
    const Eigen::Index n = time.size();
    Eigen::VectorXd log_m(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        log_m[i] = std::log(params.alpha) + params.gamma * std::log(time[i]) + xb[i];
    }

    const auto em_map = [&](double theta, bool* bound_flag) {
        const double log_theta = std::log(theta);
        Eigen::VectorXd a(n), b(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double delta = static_cast<double>(status[i]);
            double p_i = 1.0;
            if (status[i] == 0) {
                const double log_su = -theta * softplus(log_m[i] - log_theta);
                const double log_a0 = -softplus(zb[i]);
                const double log_b0 = -softplus(-zb[i]) + log_su;
                p_i = std::exp(log_b0 - logaddexp(log_a0, log_b0));
            }
            const double log_theta_m = log_theta + softplus(log_m[i] - log_theta);
            const double post_mean = (delta + theta) * std::exp(-log_theta_m);
            a[i] = post_mean * p_i + (delta + theta) / theta * (1.0 - p_i);
            b[i] = digamma(delta + theta) - log_theta -
                   p_i * (log_theta_m - log_theta);
        }
        const ThetaResult t = maximize_theta(a, b, status);
        if (bound_flag) *bound_flag = t.at_bound;
        return t.theta;
    };

    const auto loglik_at = [&](double theta) {
        ParamSet q = params;
        q.theta = theta;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            acc += observed_loglik_term(q, time[i], status[i], zb[i], xb[i]);
        }
        return acc;
    };

    const double lo = 1e-4, hi = 1e4;
    const double theta0 = std::clamp(params.theta, lo, hi);
    bool bound0 = false;
    const double phi0 = em_map(theta0, &bound0);
    double target;
    bool target_bound = false;
    if (std::abs(std::log(phi0) - std::log(theta0)) < 1e-10) {
        params.theta = phi0;
        if (at_bound) *at_bound = bound0;
        return;
    }
    if (phi0 > theta0) {  // residual positive: fixed point above
        bool bound_hi = false;
        if (em_map(hi, &bound_hi) >= hi) {
            target = hi;
            target_bound = true;
        } else {
            double a = theta0, b = hi;
            for (int it = 0; it < 100; ++it) {
                const double mid = std::sqrt(a * b);
                (em_map(mid, nullptr) > mid ? a : b) = mid;
                if (std::log(b / a) < 1e-11) break;
            }
            target = std::sqrt(a * b);
        }
    } else {
        bool bound_lo = false;
        if (em_map(lo, &bound_lo) <= lo) {
            target = lo;
            target_bound = true;
        } else {
            double a = lo, b = theta0;
            for (int it = 0; it < 100; ++it) {
                const double mid = std::sqrt(a * b);
                (em_map(mid, nullptr) > mid ? a : b) = mid;
                if (std::log(b / a) < 1e-11) break;
            }
            target = std::sqrt(a * b);
        }
    }
    if (loglik_at(target) >= loglik_at(theta0)) {
        params.theta = target;
        if (at_bound) *at_bound = target_bound;
    }
}

// Conditional-EM cycles on the unpenalized block only (sub-steps 3-5 with a
// fresh E-step each cycle), holding the penalized contributions fixed as
// offsets. Each cycle is an ascent step for the penalized observed objective;
// running several of them removes the slow EM drift of (alpha, gamma, beta_u,
// theta) at a cost of O(n) per cycle.
inline void refine_unpenalized(ParamSet& params, const SurvivalDataset& ds,
                               const SurvivalDataset& ds_unpen,
                               const PenaltySpec& pen, const FitOptions& opts,
                               bool* theta_at_bound)
{
    Eigen::VectorXd off_zb = Eigen::VectorXd::Zero(ds.n());
    if (params.b_p.size() > 0) off_zb = ds.z_pen * params.b_p;
    Eigen::VectorXd off_xb = Eigen::VectorXd::Zero(ds.n());
    if (params.beta_p.size() > 0) off_xb = ds.x_pen * params.beta_p;

    ParamSet sub = ParamSet::zeros(ds_unpen.z_unpen.cols(), 0,
                                   ds_unpen.x_unpen.cols(), 0,
                                   params.frailty_enabled);
    sub.alpha = params.alpha;
    sub.gamma = params.gamma;
    sub.theta = params.theta;
    sub.b0 = params.b0;
    sub.b_u = params.b_u;
    sub.beta_u = params.beta_u;

    const auto run_theta_jump = [&]() {
        Eigen::VectorXd zb = off_zb;
        zb.array() += sub.b0;
        if (sub.b_u.size() > 0) zb += ds_unpen.z_unpen * sub.b_u;
        Eigen::VectorXd xb = off_xb;
        if (sub.beta_u.size() > 0) xb += ds_unpen.x_unpen * sub.beta_u;
        theta_fixed_point(sub, ds_unpen.time, ds_unpen.status, zb, xb,
                          theta_at_bound);
    };
    run_theta_jump();

    const PenaltySpec pen_sub = PenaltySpec::unpenalized(0, 0);
    std::array<double, 3> prev{kNaN, kNaN, kNaN};
    for (int cycle = 0; cycle < opts.max_refine_cycles; ++cycle) {
        const EStepCache cache = e_step(sub, ds_unpen, &off_zb, &off_xb);
        sub = m_step(sub, cache, pen_sub, ds_unpen, opts, nullptr, theta_at_bound,
                     &off_zb, &off_xb);
        const std::array<double, 3> comp{
            detail::el_c1_value(ds_unpen, cache, sub, pen_sub, &off_zb),
            detail::el_c2_value(ds_unpen, cache, sub, pen_sub, &off_xb),
            detail::el_c3_component(ds_unpen, cache, sub)};
        const double tol = 0.1 * opts.tol;
        if (cycle >= 1 && std::abs(comp[0] - prev[0]) < tol &&
            std::abs(comp[1] - prev[1]) < tol &&
            std::abs(comp[2] - prev[2]) < tol) {
            break;
        }
        prev = comp;
    }
    run_theta_jump();
    (void)pen;
    params.alpha = sub.alpha;
    params.gamma = sub.gamma;
    params.theta = sub.theta;
    params.b0 = sub.b0;
    params.b_u = sub.b_u;
    params.beta_u = sub.beta_u;
}

inline SurvivalDataset unpenalized_view(const SurvivalDataset& ds)
{
    SurvivalDataset v;
    v.time = ds.time;
    v.status = ds.status;
    v.z_unpen = ds.z_unpen;
    v.x_unpen = ds.x_unpen;
    v.z_pen.resize(ds.n(), 0);
    v.x_pen.resize(ds.n(), 0);
    return v;
}

}  // namespace detail

// EM iteration for a fixed (lambda, weights) penalty. Stops when all three
// expected components move by less than tol between successive iterations.
inline FitResult fit_em(const SurvivalDataset& ds, const PenaltySpec& pen,
                        const ParamSet& init, const FitOptions& opts = {})
{
    init.check_conformable(ds);
    if (!(opts.tol > 0.0)) throw Error("fit_em: tol must be positive");
    const SurvivalDataset ds_unpen = detail::unpenalized_view(ds);

    FitResult out;
    out.params = init;
    out.estep = e_step(out.params, ds);
    std::array<double, 3> prev{};
    for (int m = 0; m < opts.max_iter; ++m) {
        bool at_bound = false;
        out.params = m_step(out.params, out.estep, pen, ds, opts, nullptr, &at_bound);
        if (opts.max_refine_cycles > 0) {
            detail::refine_unpenalized(out.params, ds, ds_unpen, pen, opts, &at_bound);
        }
        out.theta_at_bound = at_bound;
        out.estep = e_step(out.params, ds);
        const std::array<double, 3> comp{
            detail::el_c1_value(ds, out.estep, out.params, pen),
            detail::el_c2_value(ds, out.estep, out.params, pen),
            detail::el_c3_component(ds, out.estep, out.params)};
        out.objective_trace.push_back(comp);
        out.iterations = m + 1;
        if (m >= 1 && std::abs(comp[0] - prev[0]) < opts.tol &&
            std::abs(comp[1] - prev[1]) < opts.tol &&
            std::abs(comp[2] - prev[2]) < opts.tol) {
            out.converged = true;
            break;
        }
        prev = comp;
    }
    out.selected_support_b = nonzero_support(out.params.b_p);
    out.selected_support_beta = nonzero_support(out.params.beta_p);
    return out;
}

// Method-of-moments Weibull start plus an events-only regression for beta_u.
inline ParamSet initialize(const SurvivalDataset& ds, bool frailty_enabled = true)
{
    if (ds.n_events() < 2) throw Error("initialize: fewer than 2 events");

    ParamSet p = ParamSet::zeros(ds.z_unpen.cols(), ds.z_pen.cols(),
                                 ds.x_unpen.cols(), ds.x_pen.cols(), frailty_enabled);
    p.theta = 1.0;

    std::vector<int> event_rows;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        if (ds.status[i] == 1) event_rows.push_back(static_cast<int>(i));
    }
    Eigen::VectorXd te(event_rows.size());
    for (std::size_t i = 0; i < event_rows.size(); ++i) te[i] = ds.time[event_rows[i]];

    const double mean = te.mean();
    const double var = (te.array() - mean).square().sum() /
                       static_cast<double>(te.size() - 1);
    if (var <= 0.0 || mean <= 0.0) {
        p.gamma = 1.0;
        p.alpha = 1.0 / std::max(mean, 1e-12);
    } else {
        // CV^2 = Gamma(1+2/g)/Gamma(1+1/g)^2 - 1 decreases in g; bisect
        const double target = std::log1p(var / (mean * mean));
        double lo = 0.05, hi = 50.0;
        const auto h = [](double g) {
            return log_gamma(1.0 + 2.0 / g) - 2.0 * log_gamma(1.0 + 1.0 / g);
        };
        if (h(lo) < target) {
            p.gamma = lo;
        } else if (h(hi) > target) {
            p.gamma = hi;
        } else {
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (h(mid) > target ? lo : hi) = mid;
            }
            p.gamma = 0.5 * (lo + hi);
        }
        p.alpha = std::pow(std::exp(log_gamma(1.0 + 1.0 / p.gamma)) / mean, p.gamma);
    }

    // beta_u: unpenalized Weibull regression on event rows (c = 1)
    if (ds.x_unpen.cols() > 0) {
        SurvivalDataset evts = ds.subset(event_rows);
        evts.x_pen.resize(evts.n(), 0);
        evts.z_pen.resize(evts.n(), 0);
        ParamSet sub = ParamSet::zeros(evts.z_unpen.cols(), 0, evts.x_unpen.cols(), 0);
        sub.alpha = p.alpha;
        sub.gamma = p.gamma;
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(evts.n());
        const SmoothObjective obj = negloglik_latency(evts, ones, 0.0);
        SolveOptions sopts;
        sopts.tol = 1e-6;
        sopts.max_iter = 300;
        try {
            const SolveResult r = smooth_minimize(obj, pack_latency(sub), sopts);
            if (r.x.allFinite()) {
                unpack_latency(r.x, sub);
                p.beta_u = sub.beta_u;
            }
        } catch (const Error&) {
            // keep zero start when the events-only fit degenerates
        }
    }
    return p;
}

// Full path: for each lambda, stage 1 fits with unit weights; stage 2
// reweights by 1/|stage-1 coefficient| (capped) and refits. Stage-1 fits are
// warm started from the previous lambda.
inline PathResult fit_path(const SurvivalDataset& ds, PenaltyConfig config,
                           const ParamSet& init, const FitOptions& opts = {})
{
    config.validate();
    const Eigen::Index p1p = ds.z_pen.cols(), p2p = ds.x_pen.cols();

    // stationary null model: source of the lambda grid and of warm starts
    PenaltySpec null_pen = PenaltySpec::unpenalized(p1p, p2p);
    null_pen.freeze_penalized = true;
    const FitResult null_fit = fit_em(ds, null_pen, init, opts);

    if (config.lambda_grid.size() == 0) {
        config.lambda_grid = lambda_path(ds, null_fit.estep, null_fit.params,
                                         config.alpha_enet, config.n_lambda,
                                         config.min_ratio, config.lambda_scale_b,
                                         config.lambda_scale_beta);
    }

    PathResult path;
    path.config = config;
    ParamSet warm1 = null_fit.params;
    Eigen::Index fitted = 0;
    for (Eigen::Index li = 0; li < config.lambda_grid.size(); ++li) {
        PenaltySpec pen;
        pen.lambda = config.lambda_grid[li];
        pen.alpha_enet = config.alpha_enet;
        pen.lambda_scale_b = config.lambda_scale_b;
        pen.lambda_scale_beta = config.lambda_scale_beta;
        pen.weights_b = Eigen::VectorXd::Ones(p1p);
        pen.weights_beta = Eigen::VectorXd::Ones(p2p);

        FitResult stage1 = fit_em(ds, pen, warm1, opts);
        warm1 = stage1.params;
        path.entries.push_back({pen.lambda, 1, stage1});

        if (config.stages == 2) {
            PenaltySpec pen2 = pen;
            for (Eigen::Index j = 0; j < p1p; ++j) {
                const double c = std::abs(stage1.params.b_p[j]);
                pen2.weights_b[j] = c > kSupportEps
                                        ? std::min(config.weight_cap, 1.0 / c)
                                        : config.weight_cap;
            }
            for (Eigen::Index j = 0; j < p2p; ++j) {
                const double c = std::abs(stage1.params.beta_p[j]);
                pen2.weights_beta[j] = c > kSupportEps
                                           ? std::min(config.weight_cap, 1.0 / c)
                                           : config.weight_cap;
            }
            FitResult stage2 = fit_em(ds, pen2, stage1.params, opts);
            path.entries.push_back({pen.lambda, 2, stage2});
        }
        ++fitted;
        if (config.max_support > 0 &&
            (static_cast<int>(stage1.selected_support_b.size()) > config.max_support ||
             static_cast<int>(stage1.selected_support_beta.size()) > config.max_support)) {
            break;
        }
    }
    path.config.lambda_grid = config.lambda_grid.head(fitted);
    return path;
}

}  // namespace penmcfm
