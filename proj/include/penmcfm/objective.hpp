#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>

#include "penmcfm/estep.hpp"
#include "penmcfm/model.hpp"

namespace penmcfm {

// Smooth part of a penalized criterion: negative expected log-likelihood
// (1/n scale) plus any ridge term. The L1 part is handled by the solver.
struct SmoothObjective {
    Eigen::Index dim = 0;
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> value_grad;
};

// Fixed additive contributions to the linear predictors, used to hold the
// penalized blocks constant while the cheap unpenalized cycles run.
struct LinearOffsets {
    const Eigen::VectorXd* zb = nullptr;
    const Eigen::VectorXd* xb = nullptr;
};

// ---------------------------------------------------------------------------
// Incidence component: fractional-response logistic regression.
// Coordinates are [b0, b_u, b_p]; ridge_scale = lambda1 (1 - alpha_enet)
// applies to the b_p block only.
// ---------------------------------------------------------------------------

struct IncidenceLayout {
    Eigen::Index p1u = 0, p1p = 0;
    Eigen::Index dim() const { return 1 + p1u + p1p; }
    Eigen::Index pen_offset() const { return 1 + p1u; }
};

inline Eigen::VectorXd pack_incidence(const ParamSet& p)
{
    Eigen::VectorXd x(1 + p.b_u.size() + p.b_p.size());
    x[0] = p.b0;
    x.segment(1, p.b_u.size()) = p.b_u;
    x.tail(p.b_p.size()) = p.b_p;
    return x;
}

inline void unpack_incidence(const Eigen::VectorXd& x, ParamSet& p)
{
    p.b0 = x[0];
    p.b_u = x.segment(1, p.b_u.size());
    p.b_p = x.tail(p.b_p.size());
}

inline SmoothObjective negloglik_incidence(const SurvivalDataset& ds,
                                           const Eigen::VectorXd& p_expect,
                                           double ridge_scale,
                                           const Eigen::VectorXd* offset_zb = nullptr)
{
    const IncidenceLayout lay{ds.z_unpen.cols(), ds.z_pen.cols()};
    const double inv_n = 1.0 / static_cast<double>(ds.n());
    auto predictor = [&ds, lay, offset_zb](const Eigen::VectorXd& x) {
        Eigen::VectorXd zb = Eigen::VectorXd::Constant(ds.n(), x[0]);
        if (offset_zb) zb += *offset_zb;
        if (lay.p1u > 0) zb += ds.z_unpen * x.segment(1, lay.p1u);
        if (lay.p1p > 0) zb += ds.z_pen * x.tail(lay.p1p);
        return zb;
    };

    SmoothObjective obj;
    obj.dim = lay.dim();
    obj.value = [&ds, &p_expect, lay, inv_n, ridge_scale,
                 predictor](const Eigen::VectorXd& x) {
        const Eigen::VectorXd zb = predictor(x);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < ds.n(); ++i) {
            acc += p_expect[i] * zb[i] - softplus(zb[i]);
        }
        const double ridge =
            0.5 * ridge_scale * x.tail(lay.p1p).squaredNorm();
        return -inv_n * acc + ridge;
    };
    obj.value_grad = [&ds, &p_expect, lay, inv_n, ridge_scale,
                      predictor](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const Eigen::VectorXd zb = predictor(x);
        double acc = 0.0;
        Eigen::VectorXd resid(ds.n());
        for (Eigen::Index i = 0; i < ds.n(); ++i) {
            acc += p_expect[i] * zb[i] - softplus(zb[i]);
            resid[i] = p_expect[i] - sigmoid(zb[i]);
        }
        g.resize(lay.dim());
        g[0] = -inv_n * resid.sum();
        if (lay.p1u > 0) g.segment(1, lay.p1u) = -inv_n * (ds.z_unpen.transpose() * resid);
        if (lay.p1p > 0) {
            g.tail(lay.p1p) = -inv_n * (ds.z_pen.transpose() * resid) +
                              ridge_scale * x.tail(lay.p1p);
        }
        const double ridge = 0.5 * ridge_scale * x.tail(lay.p1p).squaredNorm();
        return -inv_n * acc + ridge;
    };
    return obj;
}

// ---------------------------------------------------------------------------
// Latency component: Weibull regression with multiplicative offset c_i.
// Coordinates are [log alpha, log gamma, beta_u, beta_p]; positivity of
// (alpha, gamma) holds by construction. ridge on the beta_p block only.
// ---------------------------------------------------------------------------

struct LatencyLayout {
    Eigen::Index p2u = 0, p2p = 0;
    Eigen::Index dim() const { return 2 + p2u + p2p; }
    Eigen::Index pen_offset() const { return 2 + p2u; }
};

inline Eigen::VectorXd pack_latency(const ParamSet& p)
{
    Eigen::VectorXd x(2 + p.beta_u.size() + p.beta_p.size());
    x[0] = std::log(p.alpha);
    x[1] = std::log(p.gamma);
    x.segment(2, p.beta_u.size()) = p.beta_u;
    x.tail(p.beta_p.size()) = p.beta_p;
    return x;
}

inline void unpack_latency(const Eigen::VectorXd& x, ParamSet& p)
{
    p.alpha = std::exp(x[0]);
    p.gamma = std::exp(x[1]);
    p.beta_u = x.segment(2, p.beta_u.size());
    p.beta_p = x.tail(p.beta_p.size());
}

inline SmoothObjective negloglik_latency(const SurvivalDataset& ds,
                                         const Eigen::VectorXd& c_expect,
                                         double ridge_scale,
                                         const Eigen::VectorXd* offset_xb = nullptr)
{
    const LatencyLayout lay{ds.x_unpen.cols(), ds.x_pen.cols()};
    const double inv_n = 1.0 / static_cast<double>(ds.n());
    auto shared_log_t = std::make_shared<Eigen::VectorXd>(ds.time.array().log());

    auto eval = [&ds, &c_expect, lay, inv_n, ridge_scale, shared_log_t, offset_xb](
                    const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        const Eigen::VectorXd& log_t = *shared_log_t;
        const double la = x[0];
        const double gamma = std::exp(x[1]);
        Eigen::VectorXd xb = Eigen::VectorXd::Zero(ds.n());
        if (offset_xb) xb += *offset_xb;
        if (lay.p2u > 0) xb += ds.x_unpen * x.segment(2, lay.p2u);
        if (lay.p2p > 0) xb += ds.x_pen * x.tail(lay.p2p);

        double acc = 0.0;
        Eigen::VectorXd m(ds.n());
        for (Eigen::Index i = 0; i < ds.n(); ++i) {
            const double expo = la + gamma * log_t[i] + xb[i];
            if (expo > 700.0 && c_expect[i] > 0.0) {
                if (g) g->setZero(lay.dim());
                return kInf;  // overflow guard; line search backs off
            }
            m[i] = c_expect[i] * std::exp(expo);
            const double delta = static_cast<double>(ds.status[i]);
            acc += delta * (x[0] + x[1] + (gamma - 1.0) * log_t[i] + xb[i]) - m[i];
        }
        const double ridge = 0.5 * ridge_scale * x.tail(lay.p2p).squaredNorm();
        const double val = -inv_n * acc + ridge;
        if (g) {
            g->resize(lay.dim());
            Eigen::VectorXd resid(ds.n());  // delta_i - m_i
            double d_la = 0.0, d_lg = 0.0;
            for (Eigen::Index i = 0; i < ds.n(); ++i) {
                const double delta = static_cast<double>(ds.status[i]);
                resid[i] = delta - m[i];
                d_la += resid[i];
                d_lg += delta * (1.0 + gamma * log_t[i]) - m[i] * gamma * log_t[i];
            }
            (*g)[0] = -inv_n * d_la;
            (*g)[1] = -inv_n * d_lg;
            if (lay.p2u > 0) {
                g->segment(2, lay.p2u) = -inv_n * (ds.x_unpen.transpose() * resid);
            }
            if (lay.p2p > 0) {
                g->tail(lay.p2p) = -inv_n * (ds.x_pen.transpose() * resid) +
                                   ridge_scale * x.tail(lay.p2p);
            }
        }
        return val;
    };

    SmoothObjective obj;
    obj.dim = lay.dim();
    obj.value = [eval](const Eigen::VectorXd& x) { return eval(x, nullptr); };
    obj.value_grad = [eval](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        return eval(x, &g);
    };
    return obj;
}

// ---------------------------------------------------------------------------
// Observed log-likelihood and its full analytic gradient, used by the
// stagewise fitter (coordinate selection and the unpenalized refresh).
// ---------------------------------------------------------------------------

struct ObservedGrad {
    double loglik = 0.0;
    double d_log_alpha = 0.0, d_log_gamma = 0.0, d_log_theta = 0.0;
    double d_b0 = 0.0;
    Eigen::VectorXd d_b_u, d_b_p, d_beta_u, d_beta_p;
};

inline ObservedGrad observed_loglik_grad(const ParamSet& p, const SurvivalDataset& ds)
{
    p.check_conformable(ds);
    const Eigen::Index n = ds.n();
    const Eigen::VectorXd zb = incidence_predictor(p, ds);
    const Eigen::VectorXd xb = latency_predictor(p, ds);
    const bool frailty = p.frailty_enabled;
    const double theta = p.theta;
    const double log_theta = frailty ? std::log(theta) : 0.0;

    ObservedGrad out;
    Eigen::VectorXd de(n);  // d loglik_i / d zb_i
    Eigen::VectorXd dm(n);  // d loglik_i / d log m_i

    // Event terms are written as log pi + log gamma - log t + log m
    // - (theta+1) log1p(m/theta), so the whole (log alpha, beta) dependence
    // flows through log m; log gamma keeps one explicit unit derivative.
    for (Eigen::Index i = 0; i < n; ++i) {
        const double log_t = std::log(ds.time[i]);
        const double log_m = std::log(p.alpha) + p.gamma * log_t + xb[i];
        const double pi = sigmoid(zb[i]);
        if (ds.status[i] == 1) {
            de[i] = 1.0 - pi;
            if (frailty) {
                const double r_frac = sigmoid(log_m - log_theta);  // R/(1+R)
                const double log1p_r = softplus(log_m - log_theta);
                dm[i] = 1.0 - (theta + 1.0) * r_frac;
                out.d_log_theta += -theta * log1p_r + (theta + 1.0) * r_frac;
                out.loglik += -softplus(-zb[i]) + std::log(p.gamma) - log_t +
                              log_m - (theta + 1.0) * log1p_r;
            } else {
                const double m = std::exp(std::min(log_m, 700.0));
                dm[i] = 1.0 - m;
                out.loglik += -softplus(-zb[i]) + std::log(p.gamma) - log_t +
                              log_m - m;
            }
        } else {
            const double log_su = log_latency_survival_from(log_m, theta, frailty);
            const double log_a = -softplus(zb[i]);            // log(1-pi)
            const double log_b = -softplus(-zb[i]) + log_su;  // log(pi Su)
            const double lse = logaddexp(log_a, log_b);
            const double q = std::exp(log_b - lse);  // p_i of the E-step
            out.loglik += lse;
            de[i] = pi * (std::exp(log_su) - 1.0) * std::exp(log_a - lse);
            if (frailty) {
                const double r_frac = sigmoid(log_m - log_theta);
                const double log1p_r = softplus(log_m - log_theta);
                dm[i] = -q * theta * r_frac;
                out.d_log_theta += q * theta * (r_frac - log1p_r);
            } else {
                const double m = std::exp(std::min(log_m, 700.0));
                dm[i] = -q * m;
            }
        }
    }

    out.d_log_alpha = dm.sum();
    double d_lg = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        d_lg += dm[i] * p.gamma * std::log(ds.time[i]);
        if (ds.status[i] == 1) d_lg += 1.0;
    }
    out.d_log_gamma = d_lg;

    out.d_b0 = de.sum();
    out.d_b_u = ds.z_unpen.transpose() * de;
    out.d_b_p = ds.z_pen.transpose() * de;
    out.d_beta_u = ds.x_unpen.transpose() * dm;
    out.d_beta_p = ds.x_pen.transpose() * dm;
    return out;
}

}  // namespace penmcfm
