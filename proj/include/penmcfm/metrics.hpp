#pragma once

#include <algorithm>
#include <optional>

#include "penmcfm/em.hpp"

namespace penmcfm {

// ---------------------------------------------------------------------------
// Concordance. Comparable pairs: I_{i,j} = I[t_i < t_j, delta_i = 1]
// + I[t_i = t_j, delta_i = 1, delta_j = 0]; the numerator uses strict
// score inequality, so tied scores contribute zero.
// ---------------------------------------------------------------------------

namespace detail {

inline double comparable(double ti, double tj, int di, int dj)
{
    if (ti < tj && di == 1) return 1.0;
    if (ti == tj && di == 1 && dj == 0) return 1.0;
    return 0.0;
}

}  // namespace detail

inline double c_statistic(const Eigen::VectorXd& scores, const Eigen::VectorXd& t,
                          const Eigen::VectorXi& delta)
{
    const Eigen::Index n = t.size();
    if (n < 2) throw Error("c_statistic: need n >= 2");
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double w = detail::comparable(t[i], t[j], delta[i], delta[j]);
            if (w == 0.0) continue;
            den += w;
            if (scores[i] > scores[j]) num += w;
        }
    }
    if (den == 0.0) throw Error("c_statistic: no comparable pairs");
    return num / den;
}

// Cure-status weights per pair partner j: 1 for known uncured, 0 for known
// cured, pi_hat(z_j) when the status is unobserved. Defaults treat events as
// known uncured and censored subjects as unknown.
struct CureStatus {
    Eigen::VectorXi observed;  // 1 when y is known
    Eigen::VectorXi y;         // known value, used when observed = 1
};

inline CureStatus default_cure_status(const Eigen::VectorXi& delta)
{
    return CureStatus{delta, delta};
}

inline double c_statistic_cure(const Eigen::VectorXd& scores,
                               const Eigen::VectorXd& pi_hat,
                               const Eigen::VectorXd& t, const Eigen::VectorXi& delta,
                               const std::optional<CureStatus>& known = std::nullopt)
{
    const Eigen::Index n = t.size();
    if (n < 2) throw Error("c_statistic_cure: need n >= 2");
    const CureStatus ks = known ? *known : default_cure_status(delta);
    Eigen::VectorXd w(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        w[j] = ks.observed[j] == 1 ? static_cast<double>(ks.y[j]) : pi_hat[j];
    }
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double cmp = detail::comparable(t[i], t[j], delta[i], delta[j]);
            if (cmp == 0.0) continue;
            den += w[j] * cmp;
            if (scores[i] > scores[j]) num += w[j] * cmp;
        }
    }
    if (den == 0.0) throw Error("c_statistic_cure: zero denominator");
    return num / den;
}

// ---------------------------------------------------------------------------
// Variable-selection metrics. "Nonzero" means |coef| > 1e-12.
// ---------------------------------------------------------------------------

struct SelectionMetrics {
    double sensitivity = 0.0, specificity = 1.0, fpr = 0.0;
    int tp = 0, fp = 0, tn = 0, fn = 0;
    bool sensitivity_defined = true;  // false when the true vector is all-zero
};

inline SelectionMetrics selection_metrics(const Eigen::VectorXd& true_coefs,
                                          const Eigen::VectorXd& est_coefs)
{
    if (true_coefs.size() != est_coefs.size()) {
        throw Error("selection_metrics: length mismatch");
    }
    SelectionMetrics m;
    for (Eigen::Index j = 0; j < true_coefs.size(); ++j) {
        const bool t = std::abs(true_coefs[j]) > kSupportEps;
        const bool e = std::abs(est_coefs[j]) > kSupportEps;
        m.tp += t && e;
        m.fn += t && !e;
        m.fp += !t && e;
        m.tn += !t && !e;
    }
    if (m.tp + m.fn > 0) {
        m.sensitivity = static_cast<double>(m.tp) / (m.tp + m.fn);
    } else {
        m.sensitivity_defined = false;
        m.sensitivity = kNaN;
    }
    if (m.fp + m.tn > 0) {
        m.specificity = static_cast<double>(m.tn) / (m.fp + m.tn);
        m.fpr = 1.0 - m.specificity;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Relative model error against the oracle fit. The covariance of the
// penalized design is block-diagonal AR(1); the quadratic form uses the
// band recursion instead of materializing Sigma.
// ---------------------------------------------------------------------------

struct SigmaSpec {
    double rho = 0.0;
    int block_size = 0;  // 0 means identity

    bool identity() const { return rho == 0.0 || block_size <= 1; }

    double quad_form(const Eigen::VectorXd& v) const
    {
        if (identity()) return v.squaredNorm();
        const Eigen::Index P = v.size();
        double total = 0.0;
        for (Eigen::Index start = 0; start < P; start += block_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(block_size, P - start);
            // (Tv)_i = left_i + v_i + right_i with AR(1) prefix recursions
            Eigen::VectorXd left(bs), right(bs);
            left[0] = 0.0;
            for (Eigen::Index i = 1; i < bs; ++i) {
                left[i] = rho * (left[i - 1] + v[start + i - 1]);
            }
            right[bs - 1] = 0.0;
            for (Eigen::Index i = bs - 2; i >= 0; --i) {
                right[i] = rho * (right[i + 1] + v[start + i + 1]);
            }
            for (Eigen::Index i = 0; i < bs; ++i) {
                total += v[start + i] * (left[i] + v[start + i] + right[i]);
            }
        }
        return total;
    }
};

struct ErrorMetrics {
    double rme = 0.0;
    double err = 0.0;
    bool oracle_degenerate = false;  // zero oracle error
};

inline ErrorMetrics rme_err(const Eigen::VectorXd& est, const Eigen::VectorXd& truth,
                            const SigmaSpec& sigma, const Eigen::VectorXd& oracle)
{
    if (est.size() != truth.size() || oracle.size() != truth.size()) {
        throw Error("rme_err: length mismatch");
    }
    ErrorMetrics out;
    const Eigen::VectorXd d_est = est - truth;
    const Eigen::VectorXd d_orc = oracle - truth;
    const double den_sigma = sigma.quad_form(d_orc);
    const double den_ident = d_orc.squaredNorm();
    if (den_sigma <= 0.0 || den_ident <= 0.0) {
        out.oracle_degenerate = true;
        out.rme = d_est.squaredNorm() == 0.0 ? 0.0 : kInf;
        out.err = out.rme;
        return out;
    }
    out.rme = sigma.quad_form(d_est) / den_sigma;
    out.err = d_est.squaredNorm() / den_ident;
    return out;
}

// Unpenalized fit restricted to the true support: the RME/ERR denominator.
inline FitResult fit_oracle(const SurvivalDataset& ds,
                            const std::vector<int>& support_b,
                            const std::vector<int>& support_beta,
                            const FitOptions& opts = {}, bool frailty = true)
{
    if (static_cast<Eigen::Index>(support_b.size()) >= ds.n() ||
        static_cast<Eigen::Index>(support_beta.size()) >= ds.n()) {
        throw Error("fit_oracle: support size must be below n");
    }
    SurvivalDataset reduced = ds;
    reduced.z_pen.resize(ds.n(), static_cast<Eigen::Index>(support_b.size()));
    for (std::size_t k = 0; k < support_b.size(); ++k) {
        reduced.z_pen.col(static_cast<Eigen::Index>(k)) = ds.z_pen.col(support_b[k]);
    }
    reduced.x_pen.resize(ds.n(), static_cast<Eigen::Index>(support_beta.size()));
    for (std::size_t k = 0; k < support_beta.size(); ++k) {
        reduced.x_pen.col(static_cast<Eigen::Index>(k)) = ds.x_pen.col(support_beta[k]);
    }

    const ParamSet init = initialize(reduced, frailty);
    const PenaltySpec pen = PenaltySpec::unpenalized(reduced.z_pen.cols(),
                                                     reduced.x_pen.cols());
    FitResult fit = fit_em(reduced, pen, init, opts);

    // scatter back to full width
    Eigen::VectorXd b_full = Eigen::VectorXd::Zero(ds.z_pen.cols());
    for (std::size_t k = 0; k < support_b.size(); ++k) {
        b_full[support_b[k]] = fit.params.b_p[static_cast<Eigen::Index>(k)];
    }
    Eigen::VectorXd beta_full = Eigen::VectorXd::Zero(ds.x_pen.cols());
    for (std::size_t k = 0; k < support_beta.size(); ++k) {
        beta_full[support_beta[k]] = fit.params.beta_p[static_cast<Eigen::Index>(k)];
    }
    fit.params.b_p = b_full;
    fit.params.beta_p = beta_full;
    fit.selected_support_b = nonzero_support(b_full);
    fit.selected_support_beta = nonzero_support(beta_full);
    return fit;
}

// Mean bias / MSE of the estimated uncured probability over replications.
inline std::pair<double, double> uncured_bias_mse(
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& reps)
{
    double bias = 0.0, mse = 0.0;
    for (const auto& [pi_hat, pi_true] : reps) {
        if (pi_hat.size() != pi_true.size()) {
            throw Error("uncured_bias_mse: length mismatch");
        }
        const Eigen::ArrayXd d = (pi_hat - pi_true).array();
        bias += d.mean();
        mse += d.square().mean();
    }
    const double m = static_cast<double>(reps.size());
    return {bias / m, mse / m};
}

// ---------------------------------------------------------------------------
// Prognostic risk score: linear score over the selected genes, dichotomized
// at the median (ties to the low group).
// ---------------------------------------------------------------------------

struct PrsResult {
    Eigen::VectorXd scores;
    std::vector<int> group;  // 0 = low risk, 1 = high risk
    double median = 0.0;
    bool degenerate = false;  // one group empty (e.g. all-zero coefficients)
};

inline PrsResult prognostic_risk_score(const Eigen::VectorXd& avg_coefs,
                                       const Eigen::MatrixXd& expression)
{
    if (avg_coefs.size() == 0) throw Error("prognostic_risk_score: empty gene set");
    if (expression.cols() != avg_coefs.size()) {
        throw Error("prognostic_risk_score: expression width mismatch");
    }
    PrsResult out;
    out.scores = expression * avg_coefs;
    std::vector<double> sorted(out.scores.data(), out.scores.data() + out.scores.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    out.median = n % 2 == 1 ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    out.group.resize(n);
    int high = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out.group[i] = out.scores[static_cast<Eigen::Index>(i)] > out.median ? 1 : 0;
        high += out.group[i];
    }
    out.degenerate = high == 0 || high == static_cast<int>(n);
    return out;
}

// ---------------------------------------------------------------------------
// Two-sample log-rank test (1 df).
// ---------------------------------------------------------------------------

struct LogrankResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

inline LogrankResult logrank_test(const std::vector<int>& group,
                                  const Eigen::VectorXd& t, const Eigen::VectorXi& delta)
{
    const Eigen::Index n = t.size();
    if (static_cast<Eigen::Index>(group.size()) != n) {
        throw Error("logrank_test: group length mismatch");
    }
    Eigen::Index n1 = 0;
    for (const int g : group) {
        if (g != 0 && g != 1) throw Error("logrank_test: groups must be 0/1");
        n1 += g;
    }
    if (n1 == 0 || n1 == n) throw Error("logrank_test: a group is empty");
    if (delta.sum() == 0) throw Error("logrank_test: no events");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return t[a] < t[b]; });

    double observed1 = 0.0, expected1 = 0.0, variance = 0.0;
    Eigen::Index at_risk = n, at_risk1 = n1;
    std::size_t i = 0;
    while (i < order.size()) {
        const double tau = t[order[i]];
        int d_total = 0, d1 = 0, removed = 0, removed1 = 0;
        while (i < order.size() && t[order[i]] == tau) {
            const int idx = order[i];
            if (delta[idx] == 1) {
                ++d_total;
                d1 += group[idx];
            }
            ++removed;
            removed1 += group[idx];
            ++i;
        }
        if (d_total > 0 && at_risk > 1) {
            const double frac1 = static_cast<double>(at_risk1) / at_risk;
            observed1 += d1;
            expected1 += d_total * frac1;
            variance += d_total * frac1 * (1.0 - frac1) *
                        (static_cast<double>(at_risk - d_total) / (at_risk - 1));
        } else if (d_total > 0 && at_risk == 1) {
            observed1 += d1;
            expected1 += d_total * static_cast<double>(at_risk1);
        }
        at_risk -= removed;
        at_risk1 -= removed1;
    }

    LogrankResult out;
    if (variance <= 0.0) {
        out.statistic = 0.0;
        out.p_value = 1.0;
        return out;
    }
    out.statistic = sqr(observed1 - expected1) / variance;
    out.p_value = std::erfc(std::sqrt(out.statistic / 2.0));
    return out;
}

}  // namespace penmcfm
