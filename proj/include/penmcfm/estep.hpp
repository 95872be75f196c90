#pragma once

#include <Eigen/Core>

#include "penmcfm/model.hpp"
#include "penmcfm/special.hpp"

namespace penmcfm {

// Conditional expectations of the latent variables given the current
// parameters: p = E[y], a = E[w], b = E[log w], c = E[w y].
struct EStepCache {
    Eigen::VectorXd p, a, b, c;
    Eigen::Index n() const { return p.size(); }
};

// For events, y = 1 and the frailty posterior is gamma(delta + theta,
// theta + m); for censored subjects the cure indicator mixes the cured
// (w ~ prior) and uncured (w ~ posterior) branches with weight p.
// Without frailty w is degenerate at 1, so a = 1, b = 0, c = p.
inline EStepCache e_step(const ParamSet& params, const SurvivalDataset& ds,
                         const Eigen::VectorXd* offset_zb = nullptr,
                         const Eigen::VectorXd* offset_xb = nullptr)
{
    params.check_conformable(ds);
    const Eigen::Index n = ds.n();
    Eigen::VectorXd zb = incidence_predictor(params, ds);
    Eigen::VectorXd xb = latency_predictor(params, ds);
    if (offset_zb) zb += *offset_zb;
    if (offset_xb) xb += *offset_xb;

    EStepCache cache;
    cache.p.resize(n);
    cache.a.resize(n);
    cache.b.resize(n);
    cache.c.resize(n);

    const bool frailty = params.frailty_enabled;
    const double theta = params.theta;
    const double log_theta = frailty ? std::log(theta) : 0.0;

    for (Eigen::Index i = 0; i < n; ++i) {
        const double delta = static_cast<double>(ds.status[i]);
        const double log_m = log_cum_hazard(params, ds.time[i], xb[i]);

        double p_i;
        if (ds.status[i] == 1) {
            p_i = 1.0;
        } else {
            const double log_su =
                log_latency_survival_from(log_m, theta, frailty);
            const double log_1mpi = -softplus(zb[i]);
            const double log_pi_su = -softplus(-zb[i]) + log_su;
            p_i = std::exp(log_pi_su - logaddexp(log_1mpi, log_pi_su));
        }

        if (!frailty) {
            cache.p[i] = p_i;
            cache.a[i] = 1.0;
            cache.b[i] = 0.0;
            cache.c[i] = p_i;
        } else {
            // log(theta + m) without forming m
            const double log_theta_m = log_theta + softplus(log_m - log_theta);
            const double post_mean = (delta + theta) * std::exp(-log_theta_m);
            cache.p[i] = p_i;
            cache.c[i] = post_mean * p_i;
            cache.a[i] = cache.c[i] + (delta + theta) / theta * (1.0 - p_i);
            cache.b[i] = digamma(delta + theta) - log_theta -
                         p_i * (log_theta_m - log_theta);
        }

        if (!std::isfinite(cache.p[i]) || !std::isfinite(cache.a[i]) ||
            !std::isfinite(cache.b[i]) || !std::isfinite(cache.c[i])) {
            throw Error("non-finite E-step expectation at row " + std::to_string(i));
        }
    }
    return cache;
}

}  // namespace penmcfm
