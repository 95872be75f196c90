#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "penmcfm/rng.hpp"
#include "penmcfm/util.hpp"

namespace penmcfm {

// Observed data D_i = (delta_i, t_i, x_u, x_p, z_u, z_p) with the covariates
// split into unpenalized and penalized blocks for the incidence (z) and
// latency (x) parts of the model. Immutable after construction.
struct SurvivalDataset {
    Eigen::VectorXd time;    // observed time, > 0
    Eigen::VectorXi status;  // 1 = event, 0 = censored
    Eigen::MatrixXd z_unpen, z_pen;  // incidence covariates
    Eigen::MatrixXd x_unpen, x_pen;  // latency covariates

    // simulation-only truth; empty when not available
    Eigen::VectorXi y_true;   // latent uncured indicator
    Eigen::VectorXd pi_true;  // true uncured probability
    Eigen::VectorXd w_true;   // latent frailty draw

    Eigen::Index n() const { return time.size(); }
    Eigen::Index n_events() const { return status.cast<int>().sum(); }

    SurvivalDataset subset(const std::vector<int>& rows) const
    {
        SurvivalDataset out;
        const auto pick_vec = [&rows](const Eigen::VectorXd& v) {
            Eigen::VectorXd r(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) r[i] = v[rows[i]];
            return r;
        };
        const auto pick_ivec = [&rows](const Eigen::VectorXi& v) {
            Eigen::VectorXi r(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) r[i] = v[rows[i]];
            return r;
        };
        const auto pick_mat = [&rows](const Eigen::MatrixXd& m) {
            Eigen::MatrixXd r(rows.size(), m.cols());
            for (std::size_t i = 0; i < rows.size(); ++i) r.row(i) = m.row(rows[i]);
            return r;
        };
        out.time = pick_vec(time);
        out.status = pick_ivec(status);
        out.z_unpen = pick_mat(z_unpen);
        out.z_pen = pick_mat(z_pen);
        out.x_unpen = pick_mat(x_unpen);
        out.x_pen = pick_mat(x_pen);
        if (y_true.size() == n()) out.y_true = pick_ivec(y_true);
        if (pi_true.size() == n()) out.pi_true = pick_vec(pi_true);
        if (w_true.size() == n()) out.w_true = pick_vec(w_true);
        return out;
    }
};

// Maps raw table columns onto model roles.
struct ColumnRoles {
    std::string time;
    std::string status;
    std::vector<std::string> z_unpen, z_pen, x_unpen, x_pen;
    bool shared_penalized = false;  // z_pen and x_pen are the same columns
};

struct RawTable {
    std::vector<std::string> columns;
    Eigen::MatrixXd values;  // n x columns.size()

    Eigen::Index column_index(const std::string& name) const
    {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (columns[j] == name) return static_cast<Eigen::Index>(j);
        }
        throw Error("column not found: " + name);
    }
};

// Per-column location/scale applied to the penalized blocks.
struct ScalingInfo {
    Eigen::VectorXd z_mean, z_std;
    Eigen::VectorXd x_mean, x_std;
    std::vector<int> z_constant, x_constant;  // columns left out of scaling

    // Back-transform coefficients fitted on standardized columns to the
    // original scale. Scaled column j contributes coef/std_j; the means shift
    // the intercept (incidence) or the baseline scale (latency).
    Eigen::VectorXd unscale_coefs(const Eigen::VectorXd& coefs,
                                  const Eigen::VectorXd& mean,
                                  const Eigen::VectorXd& std) const
    {
        Eigen::VectorXd out = coefs;
        for (Eigen::Index j = 0; j < coefs.size(); ++j) out[j] /= std[j];
        return out;
    }
};

namespace detail {

inline void check_finite_block(const Eigen::MatrixXd& m, const char* name)
{
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (!std::isfinite(m(i, j))) {
                throw Error(std::string("non-finite value in ") + name +
                            " column " + std::to_string(j) + " row " +
                            std::to_string(i));
            }
        }
    }
}

inline Eigen::MatrixXd gather_columns(const RawTable& table,
                                      const std::vector<std::string>& names)
{
    Eigen::MatrixXd out(table.values.rows(),
                        static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) =
            table.values.col(table.column_index(names[j]));
    }
    return out;
}

}  // namespace detail

// Checks invariants and reports constant penalized columns through
// `constant_report` (indices into z_pen then x_pen offset by z width).
inline SurvivalDataset validate_dataset(const RawTable& table,
                                        const ColumnRoles& roles,
                                        std::vector<std::string>* constant_report = nullptr)
{
    SurvivalDataset ds;
    const Eigen::Index n = table.values.rows();
    if (n == 0) throw Error("empty table");

    ds.time = table.values.col(table.column_index(roles.time));
    const Eigen::VectorXd status_raw =
        table.values.col(table.column_index(roles.status));
    ds.status.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(ds.time[i]) || ds.time[i] <= 0.0) {
            throw Error("non-positive time at row " + std::to_string(i));
        }
        if (status_raw[i] == 0.0) {
            ds.status[i] = 0;
        } else if (status_raw[i] == 1.0) {
            ds.status[i] = 1;
        } else {
            throw Error("status outside {0,1} at row " + std::to_string(i));
        }
    }

    ds.z_unpen = detail::gather_columns(table, roles.z_unpen);
    ds.z_pen = detail::gather_columns(table, roles.z_pen);
    ds.x_unpen = detail::gather_columns(table, roles.x_unpen);
    ds.x_pen = roles.shared_penalized && roles.x_pen.empty()
                   ? ds.z_pen
                   : detail::gather_columns(table, roles.x_pen);
    if (roles.shared_penalized && !roles.x_pen.empty() &&
        roles.x_pen != roles.z_pen) {
        throw Error("shared_penalized set but z_pen and x_pen columns differ");
    }

    detail::check_finite_block(ds.z_unpen, "z_unpen");
    detail::check_finite_block(ds.z_pen, "z_pen");
    detail::check_finite_block(ds.x_unpen, "x_unpen");
    detail::check_finite_block(ds.x_pen, "x_pen");

    if (constant_report) {
        const auto scan = [&](const Eigen::MatrixXd& m, const char* block) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                if ((m.col(j).array() == m(0, j)).all()) {
                    constant_report->push_back(std::string(block) + " column " +
                                               std::to_string(j) + " is constant");
                }
            }
        };
        scan(ds.z_pen, "z_pen");
        if (!roles.shared_penalized) scan(ds.x_pen, "x_pen");
    }
    return ds;
}

inline std::pair<SurvivalDataset, SurvivalDataset> split_train_test(
    const SurvivalDataset& ds, double test_fraction, std::uint64_t seed)
{
    const Eigen::Index n = ds.n();
    if (n < 2) throw Error("split_train_test: need n >= 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error("split_train_test: fraction must lie in (0,1)");
    }
    const Eigen::Index n_test =
        static_cast<Eigen::Index>(std::llround(test_fraction * static_cast<double>(n)));
    if (n_test < 1 || n_test >= n) {
        throw Error("split_train_test: fraction produces an empty part");
    }
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng(seed).split("train-test-split");
    shuffle(idx, rng);
    std::vector<int> test(idx.begin(), idx.begin() + n_test);
    std::vector<int> train(idx.begin() + n_test, idx.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {ds.subset(train), ds.subset(test)};
}

// Disjoint, exhaustive folds with sizes differing by at most one.
inline std::vector<std::vector<int>> kfold_partition(Eigen::Index n, int k,
                                                     std::uint64_t seed)
{
    if (k < 2 || static_cast<Eigen::Index>(k) > n) {
        throw Error("kfold_partition: need 2 <= k <= n");
    }
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng(seed).split("kfold");
    shuffle(idx, rng);
    std::vector<std::vector<int>> folds(k);
    const Eigen::Index base = n / k;
    const Eigen::Index extra = n % k;
    Eigen::Index pos = 0;
    for (int f = 0; f < k; ++f) {
        const Eigen::Index sz = base + (f < extra ? 1 : 0);
        folds[f].assign(idx.begin() + pos, idx.begin() + pos + sz);
        std::sort(folds[f].begin(), folds[f].end());
        pos += sz;
    }
    return folds;
}

namespace detail {

inline void standardize_block(Eigen::MatrixXd& m, Eigen::VectorXd& mean,
                              Eigen::VectorXd& std, std::vector<int>& constant)
{
    const Eigen::Index n = m.rows();
    mean.resize(m.cols());
    std.resize(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        mean[j] = m.col(j).mean();
        const double ss = (m.col(j).array() - mean[j]).square().sum();
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        if (sd <= 0.0) {
            // constant column: excluded from penalization, left untouched
            constant.push_back(static_cast<int>(j));
            mean[j] = 0.0;
            std[j] = 1.0;
            continue;
        }
        std[j] = sd;
        m.col(j) = (m.col(j).array() - mean[j]) / sd;
    }
}

}  // namespace detail

// Centers and scales the penalized blocks to sample mean 0 / std 1 (n-1
// denominator). Constant columns are reported and passed through unscaled.
inline std::pair<SurvivalDataset, ScalingInfo> standardize_penalized(
    const SurvivalDataset& ds, bool shared_penalized = false)
{
    SurvivalDataset out = ds;
    ScalingInfo info;
    detail::standardize_block(out.z_pen, info.z_mean, info.z_std, info.z_constant);
    if (shared_penalized) {
        out.x_pen = out.z_pen;
        info.x_mean = info.z_mean;
        info.x_std = info.z_std;
        info.x_constant = info.z_constant;
    } else {
        detail::standardize_block(out.x_pen, info.x_mean, info.x_std,
                                  info.x_constant);
    }
    return {out, info};
}

}  // namespace penmcfm
