#pragma once

#include <Eigen/Core>
#include <cmath>

#include "penmcfm/dataset.hpp"
#include "penmcfm/util.hpp"

namespace penmcfm {

// Full parameter vector of the Weibull mixture cure frailty model.
// The latency baseline is Weibull with cumulative hazard H0(t) = alpha t^gamma;
// the frailty is gamma with mean 1 and variance 1/theta; the incidence is
// logistic in (b0, b_u, b_p). With frailty_enabled = false the frailty is
// degenerate at 1 and theta is ignored.
struct ParamSet {
    double alpha = 1.0;
    double gamma = 1.0;
    double theta = 1.0;
    Eigen::VectorXd beta_u, beta_p;  // latency coefficients
    double b0 = 0.0;
    Eigen::VectorXd b_u, b_p;  // incidence coefficients
    bool frailty_enabled = true;

    static ParamSet zeros(Eigen::Index p1u, Eigen::Index p1p, Eigen::Index p2u,
                          Eigen::Index p2p, bool frailty = true)
    {
        ParamSet p;
        p.b_u = Eigen::VectorXd::Zero(p1u);
        p.b_p = Eigen::VectorXd::Zero(p1p);
        p.beta_u = Eigen::VectorXd::Zero(p2u);
        p.beta_p = Eigen::VectorXd::Zero(p2p);
        p.frailty_enabled = frailty;
        return p;
    }

    void check_conformable(const SurvivalDataset& ds) const
    {
        if (b_u.size() != ds.z_unpen.cols() || b_p.size() != ds.z_pen.cols() ||
            beta_u.size() != ds.x_unpen.cols() || beta_p.size() != ds.x_pen.cols()) {
            throw Error("parameter vector lengths do not match dataset blocks");
        }
        if (!(alpha > 0.0) || !(gamma > 0.0) || (frailty_enabled && !(theta > 0.0))) {
            throw Error("alpha, gamma, theta must be positive");
        }
    }
};

// Linear predictors z'b and x'beta for every subject.
inline Eigen::VectorXd incidence_predictor(const ParamSet& p, const SurvivalDataset& ds)
{
    Eigen::VectorXd zb = Eigen::VectorXd::Constant(ds.n(), p.b0);
    if (p.b_u.size() > 0) zb += ds.z_unpen * p.b_u;
    if (p.b_p.size() > 0) zb += ds.z_pen * p.b_p;
    return zb;
}

inline Eigen::VectorXd latency_predictor(const ParamSet& p, const SurvivalDataset& ds)
{
    Eigen::VectorXd xb = Eigen::VectorXd::Zero(ds.n());
    if (p.beta_u.size() > 0) xb += ds.x_unpen * p.beta_u;
    if (p.beta_p.size() > 0) xb += ds.x_pen * p.beta_p;
    return xb;
}

// pi(z) = e^{z'b} / (1 + e^{z'b}); stable for |z'b| up to ~700
inline double uncured_probability(double zb) { return sigmoid(zb); }

inline double uncured_probability(const ParamSet& p, const Eigen::VectorXd& z_u,
                                  const Eigen::VectorXd& z_p)
{
    if (z_u.size() != p.b_u.size() || z_p.size() != p.b_p.size()) {
        throw Error("uncured_probability: covariate row dimension mismatch");
    }
    return sigmoid(p.b0 + p.b_u.dot(z_u) + p.b_p.dot(z_p));
}

// Laplace transform of the frailty: (1 + s/theta)^{-theta}, which tends to
// e^{-s} as theta grows (the no-frailty mode uses that limit exactly).
inline double frailty_laplace(double s, double theta, bool frailty_enabled = true)
{
    if (s < 0.0) throw Error("frailty_laplace: s must be nonnegative");
    if (!frailty_enabled) return std::exp(-s);
    if (!(theta > 0.0)) throw Error("frailty_laplace: theta must be positive");
    return std::exp(-theta * std::log1p(s / theta));
}

// log m_i = log alpha + gamma log t + x'beta is the log cumulative hazard of
// the uncured, conditional on frailty 1. All survival arithmetic goes through
// this quantity so nothing overflows at large linear predictors.
inline double log_cum_hazard(const ParamSet& p, double t, double xb)
{
    return std::log(p.alpha) + p.gamma * std::log(t) + xb;
}

// log S(t | Y=1, x): -theta log1p(m/theta), or -m without frailty
inline double log_latency_survival_from(double log_m, double theta, bool frailty)
{
    if (frailty) return -theta * softplus(log_m - std::log(theta));
    return log_m > 700.0 ? -kInf : -std::exp(log_m);
}

inline double latency_survival(const ParamSet& p, const Eigen::VectorXd& x_u,
                               const Eigen::VectorXd& x_p, double t)
{
    if (t < 0.0) throw Error("latency_survival: t must be nonnegative");
    if (t == 0.0) return 1.0;
    const double xb = p.beta_u.dot(x_u) + p.beta_p.dot(x_p);
    return std::exp(log_latency_survival_from(log_cum_hazard(p, t, xb), p.theta,
                                              p.frailty_enabled));
}

// S_pop(t|x,z) = 1 - pi(z) + pi(z) S(t|Y=1,x)
inline double population_survival_from(double zb, double log_m, double theta,
                                       bool frailty)
{
    const double log_su = log_latency_survival_from(log_m, theta, frailty);
    const double log_1mpi = -softplus(zb);
    const double log_pi_su = -softplus(-zb) + log_su;
    return std::exp(logaddexp(log_1mpi, log_pi_su));
}

inline double population_survival(const ParamSet& p, const Eigen::VectorXd& x_u,
                                  const Eigen::VectorXd& x_p,
                                  const Eigen::VectorXd& z_u,
                                  const Eigen::VectorXd& z_p, double t)
{
    if (t < 0.0) throw Error("population_survival: t must be nonnegative");
    const double zb = p.b0 + p.b_u.dot(z_u) + p.b_p.dot(z_p);
    if (t == 0.0) return 1.0;
    const double xb = p.beta_u.dot(x_u) + p.beta_p.dot(x_p);
    return population_survival_from(zb, log_cum_hazard(p, t, xb), p.theta,
                                    p.frailty_enabled);
}

// Per-subject log contribution to the observed likelihood:
//   delta = 1: log f_pop = log pi + log h0 + x'beta - (theta+1) log1p(m/theta)
//   delta = 0: log S_pop
inline double observed_loglik_term(const ParamSet& p, double t, int delta,
                                   double zb, double xb)
{
    const double log_m = log_cum_hazard(p, t, xb);
    if (delta == 1) {
        const double log_pi = -softplus(-zb);
        const double log_h0_part = std::log(p.alpha) + std::log(p.gamma) +
                                   (p.gamma - 1.0) * std::log(t) + xb;
        if (p.frailty_enabled) {
            return log_pi + log_h0_part -
                   (p.theta + 1.0) * softplus(log_m - std::log(p.theta));
        }
        const double m = log_m > 700.0 ? kInf : std::exp(log_m);
        return log_pi + log_h0_part - m;
    }
    const double log_su = log_latency_survival_from(log_m, p.theta, p.frailty_enabled);
    return logaddexp(-softplus(zb), -softplus(-zb) + log_su);
}

// Log of the right-censored observed-data likelihood, summed over subjects.
inline double observed_log_likelihood(const ParamSet& p, const SurvivalDataset& ds)
{
    p.check_conformable(ds);
    const Eigen::VectorXd zb = incidence_predictor(p, ds);
    const Eigen::VectorXd xb = latency_predictor(p, ds);
    double total = 0.0;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        const double term =
            observed_loglik_term(p, ds.time[i], ds.status[i], zb[i], xb[i]);
        if (!std::isfinite(term)) {
            throw Error("non-finite log-likelihood at row " + std::to_string(i));
        }
        total += term;
    }
    return total;
}

}  // namespace penmcfm
