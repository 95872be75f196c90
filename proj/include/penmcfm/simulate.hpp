#pragma once

#include <Eigen/Cholesky>

#include "penmcfm/model.hpp"
#include "penmcfm/rng.hpp"

namespace penmcfm {

// Data-generating design: shared penalized block Z_p = X_p drawn from a
// block-diagonal AR(1) Gaussian, a 3-level categorical unpenalized incidence
// covariate, i.i.d. normal unpenalized latency covariates, sparse equal-value
// signals, Weibull-gamma-frailty outcomes and exponential censoring.
struct SimulationScenario {
    int n = 500;
    int P = 1000;        // shared penalized width
    int s = 20;          // nonzero count per coefficient vector
    double v = 1.0;      // signal value
    double rho = 0.0;    // within-block AR(1) correlation
    int block_size = 50;
    double alpha = 1.25;
    double gamma = 2.5;
    double theta = 0.5;
    double b0 = -2.0;
    Eigen::VectorXd b_u = (Eigen::VectorXd(2) << -1.0, 1.0).finished();
    double beta_u_range = 3.0;  // beta_u ~ U[-range, range]
    double lambda_c = 0.5;      // exponential censoring rate
    Eigen::VectorXd categorical_weights =
        (Eigen::VectorXd(3) << 0.40, 0.35, 0.25).finished();
    int P2u = 10;  // width of X_u
    std::uint64_t seed = 1;

    void validate() const
    {
        if (n < 1 || P < 0 || s < 0 || s > P) throw Error("scenario: need 0 <= s <= P");
        if (!(rho >= 0.0 && rho < 1.0)) throw Error("scenario: rho must lie in [0,1)");
        if (P > 0 && (block_size < 1 || P % block_size != 0)) {
            throw Error("scenario: block_size must divide P");
        }
        if (!(lambda_c > 0.0)) throw Error("scenario: lambda_c must be positive");
        if (!(alpha > 0.0 && gamma > 0.0 && theta > 0.0)) {
            throw Error("scenario: alpha, gamma, theta must be positive");
        }
    }
};

struct GeneratedTruth {
    ParamSet params;        // true coefficient values
    SurvivalDataset data;   // includes y_true, pi_true
    std::vector<int> support;  // signal indices (same for b_p and beta_p)
    double rho = 0.0;
    int block_size = 0;  // implicit covariance spec of the penalized block
};

// Inverse of the population cdf F_pop(t) = pi(z) [1 - (1 + alpha t^gamma
// e^{x'beta}/theta)^{-theta}], valid on 0 <= u < pi(z). Without frailty the
// theta -> infinity limit applies.
inline double inverse_pop_cdf(const ParamSet& p, double xb, double zb, double u)
{
    const double pi = sigmoid(zb);
    if (!(u >= 0.0)) throw Error("inverse_pop_cdf: u must be nonnegative");
    if (u >= pi) throw Error("inverse_pop_cdf: requires u < pi(z)");
    if (u == 0.0) return 0.0;
    const double frac = 1.0 - u / pi;
    double core;  // alpha t^gamma e^{x'beta} = core
    if (p.frailty_enabled) {
        core = p.theta * (std::pow(frac, -1.0 / p.theta) - 1.0);
    } else {
        core = -std::log(frac);
    }
    return std::pow(core * std::exp(-xb) / p.alpha, 1.0 / p.gamma);
}

inline double population_cdf(const ParamSet& p, double xb, double zb, double t)
{
    const double pi = sigmoid(zb);
    if (t <= 0.0) return 0.0;
    const double log_su =
        log_latency_survival_from(log_cum_hazard(p, t, xb), p.theta, p.frailty_enabled);
    return pi * -std::expm1(log_su);
}

struct GeneratedCovariates {
    Eigen::MatrixXd z_unpen;  // dummy-coded categorical, levels-1 columns
    Eigen::MatrixXd pen;      // shared Z_p = X_p
    Eigen::MatrixXd x_unpen;
};

inline GeneratedCovariates generate_covariates(const SimulationScenario& sc, Rng rng)
{
    sc.validate();
    GeneratedCovariates out;
    const int levels = static_cast<int>(sc.categorical_weights.size());
    const double wsum = sc.categorical_weights.sum();

    Rng rng_cat = rng.split("categorical");
    out.z_unpen = Eigen::MatrixXd::Zero(sc.n, levels - 1);
    for (int i = 0; i < sc.n; ++i) {
        const double u = rng_cat.uniform() * wsum;
        double acc = 0.0;
        int level = levels - 1;
        for (int l = 0; l < levels; ++l) {
            acc += sc.categorical_weights[l];
            if (u < acc) {
                level = l;
                break;
            }
        }
        if (level > 0) out.z_unpen(i, level - 1) = 1.0;  // first level is reference
    }

    out.pen.resize(sc.n, sc.P);
    if (sc.P > 0) {
        Rng rng_pen = rng.split("penalized");
        const int bs = sc.block_size;
        Eigen::MatrixXd chol_factor;
        if (sc.rho > 0.0) {
            Eigen::MatrixXd toeplitz(bs, bs);
            for (int i = 0; i < bs; ++i) {
                for (int j = 0; j < bs; ++j) {
                    toeplitz(i, j) = std::pow(sc.rho, std::abs(i - j));
                }
            }
            chol_factor = toeplitz.llt().matrixL();
        }
        Eigen::MatrixXd g(sc.n, bs);
        for (int b = 0; b < sc.P / bs; ++b) {
            for (int i = 0; i < sc.n; ++i) {
                for (int j = 0; j < bs; ++j) g(i, j) = rng_pen.normal();
            }
            if (sc.rho > 0.0) {
                out.pen.middleCols(b * bs, bs) = g * chol_factor.transpose();
            } else {
                out.pen.middleCols(b * bs, bs) = g;
            }
        }
    }

    Rng rng_xu = rng.split("x_unpen");
    out.x_unpen.resize(sc.n, sc.P2u);
    for (int i = 0; i < sc.n; ++i) {
        for (int j = 0; j < sc.P2u; ++j) out.x_unpen(i, j) = rng_xu.normal();
    }
    return out;
}

// Signal placement: one index per equal-width slice, at the slice midpoint,
// which puts exactly one signal per correlation block when s = P/block_size.
inline std::vector<int> signal_indices(int P, int s)
{
    std::vector<int> idx(s);
    for (int j = 0; j < s; ++j) {
        idx[j] = static_cast<int>((j + 0.5) * static_cast<double>(P) /
                                  static_cast<double>(s));
    }
    return idx;
}

inline ParamSet generate_coefficients(const SimulationScenario& sc, Rng rng,
                                      std::vector<int>* support_out = nullptr)
{
    sc.validate();
    ParamSet p = ParamSet::zeros(sc.categorical_weights.size() - 1, sc.P, sc.P2u,
                                 sc.P, true);
    p.alpha = sc.alpha;
    p.gamma = sc.gamma;
    p.theta = sc.theta;
    p.b0 = sc.b0;
    p.b_u = sc.b_u;
    Rng rng_bu = rng.split("beta_u");
    for (int j = 0; j < sc.P2u; ++j) {
        p.beta_u[j] = rng_bu.uniform(-sc.beta_u_range, sc.beta_u_range);
    }
    const std::vector<int> idx = signal_indices(sc.P, sc.s);
    for (const int j : idx) {
        p.b_p[j] = sc.v;
        p.beta_p[j] = sc.v;
    }
    if (support_out) *support_out = idx;
    return p;
}

struct GeneratedOutcomes {
    Eigen::VectorXd time;
    Eigen::VectorXi status;
    Eigen::VectorXi y_true;
    Eigen::VectorXd pi_true;
};

inline GeneratedOutcomes generate_outcomes(const ParamSet& truth,
                                           const Eigen::VectorXd& xb,
                                           const Eigen::VectorXd& zb,
                                           double lambda_c, Rng rng)
{
    const Eigen::Index n = xb.size();
    Rng rng_u = rng.split("uniform");
    Rng rng_c = rng.split("censoring");
    GeneratedOutcomes out;
    out.time.resize(n);
    out.status.resize(n);
    out.y_true.resize(n);
    out.pi_true.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pi = sigmoid(zb[i]);
        const double u = rng_u.open_uniform();
        const double c = rng_c.exponential(lambda_c);
        out.pi_true[i] = pi;
        if (u < pi) {
            out.y_true[i] = 1;
            const double t_star = inverse_pop_cdf(truth, xb[i], zb[i], u);
            out.time[i] = std::min(c, t_star);
            out.status[i] = t_star <= c ? 1 : 0;
        } else {
            out.y_true[i] = 0;  // cured: censored at c
            out.time[i] = c;
            out.status[i] = 0;
        }
    }
    return out;
}

inline GeneratedTruth generate_dataset(const SimulationScenario& sc)
{
    sc.validate();
    Rng rng(sc.seed);
    const GeneratedCovariates cov = generate_covariates(sc, rng.split("covariates"));
    std::vector<int> support;
    ParamSet truth = generate_coefficients(sc, rng.split("coefficients"), &support);

    GeneratedTruth out;
    out.params = truth;
    out.support = support;
    out.rho = sc.rho;
    out.block_size = sc.block_size;
    out.data.z_unpen = cov.z_unpen;
    out.data.z_pen = cov.pen;
    out.data.x_unpen = cov.x_unpen;
    out.data.x_pen = cov.pen;

    Eigen::VectorXd zb = Eigen::VectorXd::Constant(sc.n, truth.b0);
    zb += cov.z_unpen * truth.b_u + cov.pen * truth.b_p;
    Eigen::VectorXd xb = cov.x_unpen * truth.beta_u + cov.pen * truth.beta_p;
    const GeneratedOutcomes oc =
        generate_outcomes(truth, xb, zb, sc.lambda_c, rng.split("outcomes"));
    out.data.time = oc.time;
    out.data.status = oc.status;
    out.data.y_true = oc.y_true;
    out.data.pi_true = oc.pi_true;
    return out;
}

// Deterministic per-replication scenario: an independent stream derived from
// the base seed, fresh covariates and coefficients each replication.
inline SimulationScenario replication_scenario(const SimulationScenario& base, int rep)
{
    SimulationScenario sc = base;
    sc.seed = Rng(base.seed).split("replication", static_cast<std::uint64_t>(rep)).state();
    return sc;
}

}  // namespace penmcfm
