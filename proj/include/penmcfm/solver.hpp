#pragma once

#include <Eigen/Core>
#include <deque>
#include <optional>

#include "penmcfm/objective.hpp"
#include "penmcfm/special.hpp"

namespace penmcfm {

struct SolveResult {
    Eigen::VectorXd x;
    double objective = 0.0;  // smooth + L1 at x
    int iterations = 0;
    bool converged = false;
};

struct SolveOptions {
    double tol = 1e-7;
    int max_iter = 2000;
    int history = 10;
    int max_line_search = 60;
};

// Orthant-wise limited-memory quasi-Newton minimization of
//   F(x) = f(x) + sum_j c_j |x_j|,  c_j >= 0.
// Coordinates with c_j = 0 behave as in plain L-BFGS; penalized coordinates
// get the pseudo-gradient, sign-aligned direction and orthant projection, so
// they reach exact zeros. `free` masks coordinates held fixed at x0.
//
// On convergence the usual stationarity certificate holds coordinatewise:
//   x_j != 0:  |df_j + c_j sign(x_j)| < tol
//   x_j == 0:  |df_j| <= c_j + tol
inline SolveResult solve_l1_smooth(const SmoothObjective& obj,
                                   const Eigen::VectorXd& l1_weights,
                                   const Eigen::VectorXd& x0,
                                   const SolveOptions& opts = {},
                                   const std::vector<bool>* free = nullptr)
{
    const Eigen::Index dim = obj.dim;
    if (x0.size() != dim || l1_weights.size() != dim) {
        throw Error("solve_l1_smooth: dimension mismatch");
    }

    const auto is_free = [&](Eigen::Index j) { return !free || (*free)[j]; };
    const auto l1_norm = [&](const Eigen::VectorXd& x) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < dim; ++j) s += l1_weights[j] * std::abs(x[j]);
        return s;
    };

    Eigen::VectorXd x = x0;
    Eigen::VectorXd grad(dim);
    double fx = obj.value_grad(x, grad);
    if (!std::isfinite(fx)) throw Error("solve_l1_smooth: non-finite objective at start");
    double Fx = fx + l1_norm(x);

    // pseudo-gradient of F
    Eigen::VectorXd pg(dim);
    const auto compute_pg = [&]() {
        for (Eigen::Index j = 0; j < dim; ++j) {
            if (!is_free(j)) {
                pg[j] = 0.0;
                continue;
            }
            const double c = l1_weights[j];
            if (c == 0.0) {
                pg[j] = grad[j];
            } else if (x[j] > 0.0) {
                pg[j] = grad[j] + c;
            } else if (x[j] < 0.0) {
                pg[j] = grad[j] - c;
            } else if (grad[j] + c < 0.0) {
                pg[j] = grad[j] + c;
            } else if (grad[j] - c > 0.0) {
                pg[j] = grad[j] - c;
            } else {
                pg[j] = 0.0;
            }
        }
    };

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    SolveResult result;
    Eigen::VectorXd d(dim), x_new(dim), grad_new(dim);

    for (int it = 0; it < opts.max_iter; ++it) {
        compute_pg();
        if (pg.lpNorm<Eigen::Infinity>() < opts.tol) {
            result.converged = true;
            result.iterations = it;
            break;
        }

        // two-loop recursion on the pseudo-gradient
        d = -pg;
        std::vector<double> alpha_coef(s_hist.size());
        for (int h = static_cast<int>(s_hist.size()) - 1; h >= 0; --h) {
            alpha_coef[h] = rho_hist[h] * s_hist[h].dot(d);
            d -= alpha_coef[h] * y_hist[h];
        }
        if (!s_hist.empty()) {
            const double scale = s_hist.back().dot(y_hist.back()) /
                                 y_hist.back().squaredNorm();
            d *= scale;
        }
        for (std::size_t h = 0; h < s_hist.size(); ++h) {
            const double beta = rho_hist[h] * y_hist[h].dot(d);
            d += (alpha_coef[h] - beta) * s_hist[h];
        }

        // keep the direction in the descent halfspace of F
        for (Eigen::Index j = 0; j < dim; ++j) {
            if (!is_free(j)) {
                d[j] = 0.0;
            } else if (l1_weights[j] > 0.0 && d[j] * pg[j] >= 0.0) {
                d[j] = 0.0;
            }
        }
        if (d.lpNorm<Eigen::Infinity>() == 0.0) d = -pg;

        // orthant of the search: sign(x_j), or sign(-pg_j) at zero
        double step = (it == 0) ? 1.0 / std::max(1.0, pg.norm()) : 1.0;
        bool accepted = false;
        for (int ls = 0; ls < opts.max_line_search; ++ls) {
            for (Eigen::Index j = 0; j < dim; ++j) {
                double xi = x[j] + step * d[j];
                if (l1_weights[j] > 0.0) {
                    const double orthant = x[j] != 0.0 ? x[j] : -pg[j];
                    if (xi * orthant < 0.0) xi = 0.0;
                }
                x_new[j] = xi;
            }
            const double f_new = obj.value(x_new);
            if (std::isfinite(f_new)) {
                const double F_new = f_new + l1_norm(x_new);
                const double dir_deriv = pg.dot(x_new - x);
                if (F_new <= Fx + 1e-4 * dir_deriv && dir_deriv <= 0.0) {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) {
            // no acceptable step: either stationary to rounding, or stuck
            result.iterations = it + 1;
            break;
        }

        const double f_new = obj.value_grad(x_new, grad_new);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = grad_new - grad;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x = x_new;
        grad = grad_new;
        fx = f_new;
        Fx = fx + l1_norm(x);
        result.iterations = it + 1;
    }

    if (!result.converged) {
        compute_pg();
        result.converged = pg.lpNorm<Eigen::Infinity>() < opts.tol;
    }
    result.x = x;
    result.objective = Fx;
    return result;
}

// Plain smooth minimization (all-zero L1 weights).
inline SolveResult smooth_minimize(const SmoothObjective& obj,
                                   const Eigen::VectorXd& x0,
                                   const SolveOptions& opts = {},
                                   const std::vector<bool>* free = nullptr)
{
    return solve_l1_smooth(obj, Eigen::VectorXd::Zero(obj.dim), x0, opts, free);
}

// ---------------------------------------------------------------------------
// Frailty shape update: maximize
//   g(theta) = sum_i [(delta_i + theta - 1) b_i - a_i theta]
//              + n (theta log theta - log Gamma(theta)).
// g'(theta)/n = mean(b - a) + log theta + 1 - digamma(theta), which is
// strictly decreasing with limit 1 - mean(a - b) at infinity; a root exists
// iff mean(a - b) > 1, otherwise the upper bound is reported.
// ---------------------------------------------------------------------------

struct ThetaResult {
    double theta = 1.0;
    bool at_bound = false;
};

inline double el_c3_value(double theta, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b, const Eigen::VectorXi& delta)
{
    const Eigen::Index n = a.size();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        acc += (static_cast<double>(delta[i]) + theta - 1.0) * b[i] - a[i] * theta;
    }
    return acc + static_cast<double>(n) * (theta * std::log(theta) - log_gamma(theta));
}

inline ThetaResult maximize_theta(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                  const Eigen::VectorXi& delta,
                                  double lo = 1e-4, double hi = 1e4)
{
    if ((a.array() <= 0.0).any()) throw Error("maximize_theta: requires a_i > 0");
    (void)delta;  // the derivative does not involve delta
    const double k = (a - b).mean();
    const auto deriv = [&](double theta) {
        return std::log(theta) + 1.0 - digamma(theta) - k;
    };

    ThetaResult out;
    if (deriv(hi) > 0.0) {  // k <= 1 + 1/(2 hi): no interior root
        out.theta = hi;
        out.at_bound = true;
        return out;
    }
    if (deriv(lo) < 0.0) {
        out.theta = lo;
        out.at_bound = true;
        return out;
    }

    // safeguarded Newton on the monotone derivative
    double t_lo = lo, t_hi = hi;
    double theta = std::clamp(1.0, lo, hi);
    for (int it = 0; it < 200; ++it) {
        const double d = deriv(theta);
        if (std::abs(d) < 1e-13) break;
        if (d > 0.0) {
            t_lo = theta;
        } else {
            t_hi = theta;
        }
        const double dd = 1.0 / theta - trigamma(theta);  // strictly negative
        double next = theta - d / dd;
        if (!(next > t_lo && next < t_hi)) next = 0.5 * (t_lo + t_hi);
        if (std::abs(next - theta) < 1e-14 * std::max(1.0, theta)) {
            theta = next;
            break;
        }
        theta = next;
    }
    out.theta = theta;
    return out;
}

// ---------------------------------------------------------------------------
// Penalty grid: lambda_max is the smallest level at which both penalized
// blocks are all-zero by the subgradient condition, computed from the
// gradient of the two smooth objectives at zero penalized coefficients
// (unpenalized parts at their current values, expectations from `cache`).
// ---------------------------------------------------------------------------

inline Eigen::VectorXd lambda_path(const SurvivalDataset& ds, const EStepCache& cache,
                                   const ParamSet& params_at_zero, double alpha_enet,
                                   int n_values, double min_ratio,
                                   double lambda_scale_b = 1.0,
                                   double lambda_scale_beta = 1.0)
{
    if (!(alpha_enet > 0.0)) {
        throw Error("lambda_path: alpha_enet must be positive (pure ridge has no finite lambda_max)");
    }
    if (n_values < 1 || !(min_ratio > 0.0 && min_ratio <= 1.0)) {
        throw Error("lambda_path: invalid grid shape");
    }
    ParamSet at_zero = params_at_zero;
    at_zero.b_p.setZero();
    at_zero.beta_p.setZero();

    double max_grad = 0.0;
    {
        const SmoothObjective inc = negloglik_incidence(ds, cache.p, 0.0);
        Eigen::VectorXd g;
        inc.value_grad(pack_incidence(at_zero), g);
        const Eigen::Index p1p = ds.z_pen.cols();
        if (p1p > 0) {
            max_grad = std::max(
                max_grad, g.tail(p1p).lpNorm<Eigen::Infinity>() / lambda_scale_b);
        }
    }
    {
        const SmoothObjective lat = negloglik_latency(ds, cache.c, 0.0);
        Eigen::VectorXd g;
        lat.value_grad(pack_latency(at_zero), g);
        const Eigen::Index p2p = ds.x_pen.cols();
        if (p2p > 0) {
            max_grad = std::max(
                max_grad, g.tail(p2p).lpNorm<Eigen::Infinity>() / lambda_scale_beta);
        }
    }
    const double lambda_max = max_grad / alpha_enet;
    if (!(lambda_max > 0.0)) throw Error("lambda_path: gradient at zero vanishes");

    Eigen::VectorXd grid(n_values);
    if (n_values == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    const double log_max = std::log(lambda_max);
    const double log_min = std::log(lambda_max * min_ratio);
    for (int i = 0; i < n_values; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(n_values - 1);
        grid[i] = std::exp(log_max + f * (log_min - log_max));
    }
    grid[0] = lambda_max;
    grid[n_values - 1] = lambda_max * min_ratio;
    return grid;
}

}  // namespace penmcfm
