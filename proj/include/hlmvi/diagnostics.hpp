#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "chlrm.hpp"
#include "core.hpp"
#include "data.hpp"
#include "lrm.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace hlmvi {

// ---------------------------------------------------------------------------
// Information criteria
// ---------------------------------------------------------------------------

/// Pointwise log-likelihoods, one row per retained draw, one column per
/// observation.
struct LogLikMatrix {
    Matrix values;  // B x N

    int b() const { return static_cast<int>(values.rows()); }
    int n() const { return static_cast<int>(values.cols()); }

    void validate() const {
        if (b() < 2) throw domain_error("LogLikMatrix: need at least 2 draws");
        if (!values.allFinite())
            throw domain_error("LogLikMatrix: non-finite entries");
    }
};

/// WAIC = -2 (lppd - p_waic), with lppd computed through log-sum-exp and the
/// variance-based effective parameter count.
inline double waic(const LogLikMatrix& ll) {
    ll.validate();
    const int b = ll.b();
    double lppd = 0.0, p_waic = 0.0;
    for (int i = 0; i < ll.n(); ++i) {
        const Vector col = ll.values.col(i);
        lppd += log_sum_exp(col) - std::log(static_cast<double>(b));
        const double mean = col.mean();
        p_waic += (col.array() - mean).square().sum() / (b - 1);
    }
    return -2.0 * (lppd - p_waic);
}

/// DIC = D(theta_bar) + 2 p_dic with p_dic = mean deviance minus the deviance
/// at the plug-in parameters (`ll_at_mean`, supplied by the model module).
inline double dic(const LogLikMatrix& ll, const Vector& ll_at_mean) {
    ll.validate();
    if (ll_at_mean.size() != ll.n())
        throw domain_error("dic: ll_at_mean length mismatch");
    const double mean_dev = -2.0 * ll.values.rowwise().sum().mean();
    const double dev_at_mean = -2.0 * ll_at_mean.sum();
    const double p_dic = mean_dev - dev_at_mean;
    return dev_at_mean + 2.0 * p_dic;
}

// ---------------------------------------------------------------------------
// Fit metrics
// ---------------------------------------------------------------------------

inline std::pair<double, double> fit_metrics(const Vector& y, const Vector& yhat) {
    if (y.size() != yhat.size() || y.size() < 1)
        throw domain_error("fit_metrics: length mismatch");
    const double sse = (y - yhat).squaredNorm();
    const double sst = (y.array() - y.mean()).square().sum();
    const double mse = sse / y.size();
    const double r2 = 1.0 - sse / sst;
    return {mse, r2};
}

// ---------------------------------------------------------------------------
// Clustering summaries
// ---------------------------------------------------------------------------

/// Posterior co-clustering probabilities from hard assignment draws (B x m):
/// entry (j, l) is the fraction of draws with gamma_j = gamma_l.
inline Matrix cocluster_matrix(const Eigen::MatrixXi& assignments) {
    const int b = static_cast<int>(assignments.rows());
    const int m = static_cast<int>(assignments.cols());
    if (b < 1 || m < 1) throw domain_error("cocluster_matrix: empty draws");
    Matrix out = Matrix::Zero(m, m);
    for (int d = 0; d < b; ++d)
        for (int j = 0; j < m; ++j)
            for (int l = j; l < m; ++l)
                if (assignments(d, j) == assignments(d, l)) {
                    out(j, l) += 1.0;
                    if (l != j) out(l, j) += 1.0;
                }
    out /= static_cast<double>(b);
    out.diagonal().setOnes();
    return out;
}

/// Mean-field co-clustering from responsibilities: entry (j, l) is
/// sum_c rho_jc rho_lc, with the diagonal set to 1 (a group always shares
/// its own cluster).
inline Matrix cocluster_matrix(const Matrix& rho) {
    if (rho.rows() < 1 || rho.cols() < 1)
        throw domain_error("cocluster_matrix: empty responsibilities");
    Matrix out = rho * rho.transpose();
    out.diagonal().setOnes();
    return out;
}

/// Posterior frequencies of the nonempty-cluster count: entry c is the
/// fraction of draws with exactly c + 1 occupied clusters.
inline Vector k_posterior(const Eigen::MatrixXi& assignments, int k) {
    const int b = static_cast<int>(assignments.rows());
    if (b < 1 || k < 1) throw domain_error("k_posterior: empty input");
    Vector freq = Vector::Zero(k);
    std::vector<bool> seen(k);
    for (int d = 0; d < b; ++d) {
        std::fill(seen.begin(), seen.end(), false);
        int kappa = 0;
        for (int j = 0; j < assignments.cols(); ++j) {
            const int c = assignments(d, j);
            if (c < 0 || c >= k) throw domain_error("k_posterior: label out of range");
            if (!seen[c]) {
                seen[c] = true;
                ++kappa;
            }
        }
        freq[kappa - 1] += 1.0;
    }
    return freq / static_cast<double>(b);
}

/// Adjusted Rand index between two partitions of the same items; 1 for
/// identical partitions (up to relabeling), ~0 for independent ones.
inline double adjusted_rand_index(const std::vector<int>& a,
                                  const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty())
        throw domain_error("adjusted_rand_index: size mismatch");
    const int n = static_cast<int>(a.size());
    std::map<std::pair<int, int>, int> joint;
    std::map<int, int> ra, rb;
    for (int i = 0; i < n; ++i) {
        ++joint[{a[i], b[i]}];
        ++ra[a[i]];
        ++rb[b[i]];
    }
    auto choose2 = [](double x) { return 0.5 * x * (x - 1.0); };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, c] : joint) sum_joint += choose2(c);
    for (const auto& [key, c] : ra) sum_a += choose2(c);
    for (const auto& [key, c] : rb) sum_b += choose2(c);
    const double expected = sum_a * sum_b / choose2(static_cast<double>(n));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both partitions trivial
    return (sum_joint - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Pointwise log-likelihood builders and predictions
// ---------------------------------------------------------------------------

inline LogLikMatrix lrm_loglik_matrix(const RegressionData& data,
                                      const PosteriorDraws& draws) {
    const int p = data.p();
    LogLikMatrix ll;
    ll.values.resize(draws.b(), data.n());
    for (int b = 0; b < draws.b(); ++b) {
        const Vector beta = draws.draws.row(b).head(p).transpose();
        const double sig = draws.draws(b, p);
        const Vector mean = data.X * beta;
        for (int i = 0; i < data.n(); ++i)
            ll.values(b, i) = normal_logpdf(data.y[i], mean[i], sig);
    }
    return ll;
}

inline Vector lrm_loglik_at_mean(const RegressionData& data,
                                 const PosteriorDraws& draws) {
    const int p = data.p();
    const Vector beta = draws.draws.leftCols(p).colwise().mean().transpose();
    const double sig = draws.draws.col(p).mean();
    Vector ll(data.n());
    const Vector mean = data.X * beta;
    for (int i = 0; i < data.n(); ++i)
        ll[i] = normal_logpdf(data.y[i], mean[i], sig);
    return ll;
}

inline Vector lrm_yhat(const RegressionData& data, const PosteriorDraws& draws) {
    const Vector beta =
        draws.draws.leftCols(data.p()).colwise().mean().transpose();
    return data.X * beta;
}

inline LogLikMatrix chlrm_loglik_matrix(const GroupedDataset& data,
                                        const ChlrmDraws& draws) {
    LogLikMatrix ll;
    ll.values.resize(draws.b(), data.total_n());
    for (int b = 0; b < draws.b(); ++b) {
        int col = 0;
        for (int j = 0; j < data.m(); ++j) {
            const auto& g = data.groups[j];
            const int c = draws.gamma(b, j);
            const Vector mean = g.X * draws.beta_k(b, c);
            const double sig = draws.sigma_sqs(b, c);
            for (int i = 0; i < g.n(); ++i)
                ll.values(b, col++) = normal_logpdf(g.y[i], mean[i], sig);
        }
    }
    return ll;
}

/// Per-group posterior-mode assignment over the retained draws.
inline std::vector<int> chlrm_map_assignment(const ChlrmDraws& draws) {
    std::vector<int> gamma(draws.m);
    for (int j = 0; j < draws.m; ++j) {
        std::vector<int> counts(draws.k, 0);
        for (int b = 0; b < draws.b(); ++b) ++counts[draws.gamma(b, j)];
        gamma[j] = static_cast<int>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    return gamma;
}

/// Plug-in log-likelihood for DIC: posterior means of the continuous
/// parameters, posterior-mode assignment for gamma (the deviance is not
/// defined at a fractional assignment).
inline Vector chlrm_loglik_at_mean(const GroupedDataset& data,
                                   const ChlrmDraws& draws) {
    const std::vector<int> gamma = chlrm_map_assignment(draws);
    const Vector beta_mean = draws.betas.colwise().mean().transpose();
    const Vector sig_mean = draws.sigma_sqs.colwise().mean().transpose();
    Vector ll(data.total_n());
    int col = 0;
    for (int j = 0; j < data.m(); ++j) {
        const auto& g = data.groups[j];
        const int c = gamma[j];
        const Vector beta = beta_mean.segment(c * draws.p, draws.p);
        const Vector mean = g.X * beta;
        for (int i = 0; i < g.n(); ++i)
            ll[col++] = normal_logpdf(g.y[i], mean[i], sig_mean[c]);
    }
    return ll;
}

/// Posterior-mean prediction under MCMC: averages X_j beta_{gamma_j} over
/// the retained draws, so allocation uncertainty widens the fit.
inline Vector chlrm_yhat(const GroupedDataset& data, const ChlrmDraws& draws) {
    Vector yhat = Vector::Zero(data.total_n());
    for (int b = 0; b < draws.b(); ++b) {
        int col = 0;
        for (int j = 0; j < data.m(); ++j) {
            const auto& g = data.groups[j];
            yhat.segment(col, g.n()) += g.X * draws.beta_k(b, draws.gamma(b, j));
            col += g.n();
        }
    }
    return yhat / static_cast<double>(draws.b());
}

/// Variational mean prediction: responsibility-weighted cluster lines.
inline Vector chlrm_yhat(const GroupedDataset& data, const ChlrmVarState& s) {
    Vector yhat = Vector::Zero(data.total_n());
    int col = 0;
    for (int j = 0; j < data.m(); ++j) {
        const auto& g = data.groups[j];
        for (int c = 0; c < s.k(); ++c)
            yhat.segment(col, g.n()) += s.rho(j, c) * (g.X * s.mu_beta_k[c]);
        col += g.n();
    }
    return yhat;
}

// ---------------------------------------------------------------------------
// Posterior predictive p-values
// ---------------------------------------------------------------------------

struct PppSummary {
    double min_stat = 0.0, max_stat = 0.0, iqr = 0.0;
    double mean = 0.0, median = 0.0, sd = 0.0;
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

/// (min, max, IQR, mean, median, sd) of a sample.
inline std::array<double, 6> discrepancy_stats(const Vector& y) {
    std::vector<double> v(y.data(), y.data() + y.size());
    const double mean = y.mean();
    const double sd =
        std::sqrt((y.array() - mean).square().sum() / (y.size() - 1));
    return {*std::min_element(v.begin(), v.end()),
            *std::max_element(v.begin(), v.end()),
            quantile(v, 0.75) - quantile(v, 0.25),
            mean,
            quantile(v, 0.5),
            sd};
}

/// One-sided p-values with ties counted as 1/2.
inline PppSummary ppp_from_counts(const std::array<double, 6>& ge,
                                  const std::array<double, 6>& eq, int reps) {
    auto p = [reps](double g, double e) { return (g - 0.5 * e) / reps; };
    PppSummary s;
    s.min_stat = p(ge[0], eq[0]);
    s.max_stat = p(ge[1], eq[1]);
    s.iqr = p(ge[2], eq[2]);
    s.mean = p(ge[3], eq[3]);
    s.median = p(ge[4], eq[4]);
    s.sd = p(ge[5], eq[5]);
    return s;
}

}  // namespace detail

/// Posterior predictive check for the single-group regression model: for
/// each replicate, pick a retained draw (cycling), simulate y_rep from the
/// sampling model, and compare the six discrepancy statistics against the
/// observed data with the ">= with ties as 1/2" convention.
inline PppSummary ppp(const RegressionData& data, const PosteriorDraws& draws,
                      int reps, std::uint64_t seed) {
    if (reps < 100) throw domain_error("ppp: need reps >= 100");
    const int p = data.p();
    const auto obs = detail::discrepancy_stats(data.y);
    std::array<double, 6> ge{}, eq{};
    for (int r = 0; r < reps; ++r) {
        SeededRng rng = SeededRng(seed).stream(r);
        const int b = r % draws.b();
        const Vector beta = draws.draws.row(b).head(p).transpose();
        const double sd = std::sqrt(draws.draws(b, p));
        Vector y_rep = data.X * beta;
        for (int i = 0; i < y_rep.size(); ++i) y_rep[i] += sd * rng.normal();
        const auto rep = detail::discrepancy_stats(y_rep);
        for (int s = 0; s < 6; ++s) {
            if (rep[s] > obs[s]) ge[s] += 1.0;
            if (rep[s] == obs[s]) eq[s] += 1.0;
        }
    }
    return detail::ppp_from_counts(ge, eq, reps);
}

/// Grouped-model variant: replicates keep each draw's allocation gamma and
/// simulate observations from the assigned cluster's line and variance.
inline PppSummary ppp(const GroupedDataset& data, const ChlrmDraws& draws,
                      int reps, std::uint64_t seed) {
    if (reps < 100) throw domain_error("ppp: need reps >= 100");
    Vector y_obs(data.total_n());
    {
        int col = 0;
        for (const auto& g : data.groups) {
            y_obs.segment(col, g.n()) = g.y;
            col += g.n();
        }
    }
    const auto obs = detail::discrepancy_stats(y_obs);
    std::array<double, 6> ge{}, eq{};
    Vector y_rep(data.total_n());
    for (int r = 0; r < reps; ++r) {
        SeededRng rng = SeededRng(seed).stream(r);
        const int b = r % draws.b();
        int col = 0;
        for (int j = 0; j < data.m(); ++j) {
            const auto& g = data.groups[j];
            const int c = draws.gamma(b, j);
            const Vector mean = g.X * draws.beta_k(b, c);
            const double sd = std::sqrt(draws.sigma_sqs(b, c));
            for (int i = 0; i < g.n(); ++i)
                y_rep[col++] = mean[i] + sd * rng.normal();
        }
        const auto rep = detail::discrepancy_stats(y_rep);
        for (int s = 0; s < 6; ++s) {
            if (rep[s] > obs[s]) ge[s] += 1.0;
            if (rep[s] == obs[s]) eq[s] += 1.0;
        }
    }
    return detail::ppp_from_counts(ge, eq, reps);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace detail {

/// Evenly spaced row indices: `target` rows chosen from `total`.
inline std::vector<int> even_rows(int total, int target) {
    if (total <= 0) throw domain_error("subsample: no draws");
    if (target <= 0) throw domain_error("subsample: target must be positive");
    if (target >= total) {
        std::vector<int> all(total);
        for (int i = 0; i < total; ++i) all[i] = i;
        return all;
    }
    std::vector<int> idx(target);
    for (int i = 0; i < target; ++i)
        idx[i] = static_cast<int>((static_cast<long long>(i) * total) / target);
    return idx;
}

template <typename Mat>
Mat take_rows(const Mat& m, const std::vector<int>& rows) {
    Mat out(static_cast<long>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
    return out;
}

}  // namespace detail

/// Evenly thins a draw set down to at most `target` rows. Comparison tables
/// are computed from 1000 draws by default regardless of chain length.
inline PosteriorDraws subsample(const PosteriorDraws& d, int target) {
    PosteriorDraws out = d;
    out.draws = detail::take_rows(d.draws, detail::even_rows(
                                               static_cast<int>(d.draws.rows()), target));
    return out;
}

inline ChlrmDraws subsample(const ChlrmDraws& d, int target) {
    const auto rows =
        detail::even_rows(static_cast<int>(d.gamma.rows()), target);
    ChlrmDraws out = d;
    out.gamma = detail::take_rows(d.gamma, rows);
    out.omega = detail::take_rows(d.omega, rows);
    out.betas = detail::take_rows(d.betas, rows);
    out.sigma_sqs = detail::take_rows(d.sigma_sqs, rows);
    out.beta = detail::take_rows(d.beta, rows);
    out.Sigma = detail::take_rows(d.Sigma, rows);
    Vector xi(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) xi[i] = d.xi_sq[rows[i]];
    out.xi_sq = xi;
    return out;
}

struct FitReport {
    double waic = 0.0, dic = 0.0, mse = 0.0, r2 = 0.0;
    double runtime_sec = 0.0;
    PppSummary ppp_summary;
    Vector k_posterior;  // optional, empty when not applicable
    Matrix cocluster;    // optional, empty when not applicable

    /// Flat key-value record, one field per line.
    std::string to_text() const {
        std::ostringstream os;
        os.precision(10);
        os << "waic " << waic << "\n"
           << "dic " << dic << "\n"
           << "mse " << mse << "\n"
           << "r2 " << r2 << "\n"
           << "runtime_sec " << runtime_sec << "\n"
           << "ppp_min " << ppp_summary.min_stat << "\n"
           << "ppp_max " << ppp_summary.max_stat << "\n"
           << "ppp_iqr " << ppp_summary.iqr << "\n"
           << "ppp_mean " << ppp_summary.mean << "\n"
           << "ppp_median " << ppp_summary.median << "\n"
           << "ppp_sd " << ppp_summary.sd << "\n";
        for (int c = 0; c < k_posterior.size(); ++c)
            os << "k_posterior_" << (c + 1) << " " << k_posterior[c] << "\n";
        return os.str();
    }
};

}  // namespace hlmvi
