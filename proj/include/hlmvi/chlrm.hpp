#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "core.hpp"
#include "data.hpp"
#include "distributions.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace hlmvi {

// ---------------------------------------------------------------------------
// Prior
// ---------------------------------------------------------------------------

/// Hierarchy: gamma_j | omega ~ Cat(omega), omega ~ Dir(alpha0),
/// beta_k | beta, Sigma ~ N_p(beta, Sigma), beta ~ N_p(mu0, Lambda0),
/// Sigma^{-1} ~ Wishart(n0, S0^{-1}), sigma_k^2 | xi^2 ~ IG(nu0/2, nu0 xi^2/2),
/// xi^2 ~ Gamma(a0, b0).
struct ChlrmPrior {
    Vector mu0;
    Matrix Lambda0;
    double n0 = 0.0;
    Matrix S0;
    double nu0 = 1.0;
    double a0 = 1.0;
    double b0 = 1.0;
    Vector alpha0;

    int p() const { return static_cast<int>(mu0.size()); }
    int k() const { return static_cast<int>(alpha0.size()); }

    void validate() const {
        const int pp = p();
        if (Lambda0.rows() != pp || Lambda0.cols() != pp || S0.rows() != pp ||
            S0.cols() != pp)
            throw domain_error("ChlrmPrior: dimension mismatch");
        cholesky(Lambda0, "ChlrmPrior.Lambda0");
        cholesky(S0, "ChlrmPrior.S0");
        if (!(n0 > pp - 1)) throw domain_error("ChlrmPrior: n0 must exceed p - 1");
        if (!(nu0 > 0.0) || !(a0 > 0.0) || !(b0 > 0.0))
            throw domain_error("ChlrmPrior: nu0, a0, b0 must be positive");
        if (alpha0.size() < 1 || (alpha0.array() <= 0.0).any())
            throw domain_error("ChlrmPrior: alpha0 entries must be positive");
    }
};

/// Weak data-driven prior built from the stacked global OLS fit:
/// mu0 = b_ols, Lambda0 = S0 = N * s2_ols (X'X)^{-1}, n0 = p + 2, nu0 = 1,
/// a0 = 1, b0 = 1/s2_ols (so E[xi^2] = s2_ols), alpha0 = (1/K, ..., 1/K).
inline ChlrmPrior chlrm_default_prior(const GroupedDataset& data, int k) {
    data.validate();
    if (k < 1) throw domain_error("chlrm_default_prior: K must be >= 1");
    OlsFit fit = ols(data.stacked());
    ChlrmPrior prior;
    prior.mu0 = fit.beta;
    prior.Lambda0 =
        data.total_n() * fit.sigma_sq * inverse_spd(fit.xtx, "stacked X'X");
    prior.n0 = data.p() + 2;
    prior.S0 = prior.Lambda0;
    prior.nu0 = 1.0;
    prior.a0 = 1.0;
    prior.b0 = 1.0 / fit.sigma_sq;
    prior.alpha0 = Vector::Constant(k, 1.0 / k);
    return prior;
}

// ---------------------------------------------------------------------------
// Draw container
// ---------------------------------------------------------------------------

/// Retained draws, one row per iteration. Cluster-specific blocks are stored
/// flat: betas row = (beta_1', ..., beta_K'), Sigma row = column-major p*p.
struct ChlrmDraws {
    int k = 0, p = 0, m = 0;
    Eigen::MatrixXi gamma;  // B x m, values in 0..K-1
    Matrix omega;           // B x K
    Matrix betas;           // B x (K*p)
    Matrix sigma_sqs;       // B x K
    Matrix beta;            // B x p
    Matrix Sigma;           // B x (p*p)
    Vector xi_sq;           // B
    std::uint64_t seed = 0;
    int burn_in = 0;
    int thin = 1;

    int b() const { return static_cast<int>(gamma.rows()); }
    Vector beta_k(int row, int cluster) const {
        return betas.row(row).segment(cluster * p, p).transpose();
    }
    Matrix sigma_mat(int row) const {
        // Rows of a column-major matrix are not contiguous, so copy first.
        const Vector flat = Sigma.row(row).transpose();
        return Eigen::Map<const Matrix>(flat.data(), p, p);
    }
};

// ---------------------------------------------------------------------------
// Gibbs sampler
// ---------------------------------------------------------------------------

struct ChlrmGibbsConfig {
    int n_samples = 10000;
    int burn_in = -1;  // < 0: 10% of n_samples
    int thin = 1;
    std::uint64_t seed = 0;
};

namespace detail {

/// Per-group sufficient statistics reused by every sweep.
struct GroupStats {
    std::vector<Matrix> gram;  // X_j' X_j
    std::vector<Vector> xty;   // X_j' y_j
    std::vector<double> yty;   // y_j' y_j
    std::vector<int> n;

    explicit GroupStats(const GroupedDataset& data) {
        for (const auto& g : data.groups) {
            gram.push_back(g.X.transpose() * g.X);
            xty.push_back(g.X.transpose() * g.y);
            yty.push_back(g.y.squaredNorm());
            n.push_back(g.n());
        }
    }

    /// ||y_j - X_j b||^2 from the cached statistics.
    double resid_sq(int j, const Vector& b) const {
        return yty[j] - 2.0 * b.dot(xty[j]) + b.dot(gram[j] * b);
    }
};

}  // namespace detail

/// Unnormalized log posterior at one parameter configuration; used for the
/// log-joint trace of the sampler.
inline double chlrm_log_joint(const GroupedDataset& data, const ChlrmPrior& prior,
                              const std::vector<int>& gamma, const Vector& omega,
                              const std::vector<Vector>& betas,
                              const std::vector<double>& sigma_sqs,
                              const Vector& beta, const Matrix& Sigma,
                              double xi_sq) {
    const int k = prior.k();
    double lp = 0.0;
    for (int j = 0; j < data.m(); ++j) {
        const auto& g = data.groups[j];
        const int c = gamma[j];
        const Vector resid = g.y - g.X * betas[c];
        lp += -0.5 * g.n() * std::log(2.0 * M_PI * sigma_sqs[c]) -
              0.5 * resid.squaredNorm() / sigma_sqs[c];
        lp += std::log(omega[c]);
    }
    lp += dirichlet_logpdf(omega, {prior.alpha0});
    MvnParams cluster_prior{beta, Sigma};
    for (int c = 0; c < k; ++c) {
        lp += mvn_logpdf(betas[c], cluster_prior);
        lp += invgamma_logpdf(sigma_sqs[c], {0.5 * prior.nu0, 0.5 * prior.nu0 * xi_sq});
    }
    lp += mvn_logpdf(beta, {prior.mu0, prior.Lambda0});
    // Sigma^{-1} ~ Wishart(n0, S0^{-1}) expressed as a density in Sigma.
    const int p = prior.p();
    lp += 0.5 * prior.n0 * logdet_spd(prior.S0, "S0") -
          0.5 * prior.n0 * p * std::log(2.0) - lgamma_multivariate(p, 0.5 * prior.n0) -
          0.5 * (prior.n0 + p + 1) * logdet_spd(Sigma, "Sigma") -
          0.5 * (prior.S0 * inverse_spd(Sigma, "Sigma")).trace();
    lp += gamma_logpdf(xi_sq, {prior.a0, prior.b0});
    return lp;
}

inline ChlrmDraws chlrm_gibbs(const GroupedDataset& data, const ChlrmPrior& prior,
                              int k, const ChlrmGibbsConfig& cfg,
                              std::vector<double>* log_joint_trace = nullptr) {
    data.validate();
    prior.validate();
    if (k != prior.k()) throw domain_error("chlrm_gibbs: K does not match prior");
    const int burn_in = cfg.burn_in < 0 ? cfg.n_samples / 10 : cfg.burn_in;
    if (cfg.n_samples <= burn_in)
        throw domain_error("chlrm_gibbs: n_samples must exceed burn_in");
    if (cfg.thin < 1) throw domain_error("chlrm_gibbs: thin must be >= 1");

    const int m = data.m();
    const int p = data.p();
    detail::GroupStats stats(data);
    const Matrix lambda0_inv = inverse_spd(prior.Lambda0, "Lambda0");
    const Vector lambda0_inv_mu0 = lambda0_inv * prior.mu0;

    SeededRng rng(cfg.seed);

    // Initial state: hierarchy means at the prior center, moderate variances.
    std::vector<int> gamma(m);
    for (int j = 0; j < m; ++j) gamma[j] = j % k;
    Vector omega = prior.alpha0 / prior.alpha0.sum();
    Vector beta = prior.mu0;
    Matrix Sigma = prior.S0 / prior.n0;
    double xi_sq = prior.a0 / prior.b0;
    std::vector<Vector> betas(k, prior.mu0);
    std::vector<double> sigma_sqs(k, prior.a0 / prior.b0 > 0 ? prior.a0 / prior.b0
                                                             : 1.0);

    const int retained = (cfg.n_samples - burn_in) / cfg.thin;
    ChlrmDraws out;
    out.k = k;
    out.p = p;
    out.m = m;
    out.gamma.resize(retained, m);
    out.omega.resize(retained, k);
    out.betas.resize(retained, k * p);
    out.sigma_sqs.resize(retained, k);
    out.beta.resize(retained, p);
    out.Sigma.resize(retained, p * p);
    out.xi_sq.resize(retained);
    out.seed = cfg.seed;
    out.burn_in = burn_in;
    out.thin = cfg.thin;

    int kept = 0;
    for (int b = 1; b <= cfg.n_samples; ++b) {
        // gamma_j | rest
        for (int j = 0; j < m; ++j) {
            Vector logw(k);
            for (int c = 0; c < k; ++c)
                logw[c] = std::log(omega[c]) -
                          0.5 * stats.n[j] * std::log(sigma_sqs[c]) -
                          0.5 * stats.resid_sq(j, betas[c]) / sigma_sqs[c];
            gamma[j] = categorical_sample_log(rng, logw);
        }

        // omega | rest
        Vector counts = Vector::Zero(k);
        for (int j = 0; j < m; ++j) counts[gamma[j]] += 1.0;
        omega = dirichlet_sample(rng, {prior.alpha0 + counts});

        const Matrix sigma_inv = inverse_spd(Sigma, "Sigma draw");
        const Vector sigma_inv_beta = sigma_inv * beta;

        // beta_k, sigma_k^2 | rest (empty clusters fall back to their priors)
        for (int c = 0; c < k; ++c) {
            Matrix gram = Matrix::Zero(p, p);
            Vector xty = Vector::Zero(p);
            int n_c = 0;
            for (int j = 0; j < m; ++j) {
                if (gamma[j] != c) continue;
                gram += stats.gram[j];
                xty += stats.xty[j];
                n_c += stats.n[j];
            }
            if (n_c > 0) {
                Matrix v;
                try {
                    v = inverse_spd(sigma_inv + gram / sigma_sqs[c],
                                    "cluster coefficient precision");
                } catch (const not_spd_error& e) {
                    throw error("chlrm_gibbs: iteration " + std::to_string(b) +
                                ": " + e.what());
                }
                betas[c] = mvn_sample(
                    rng, {v * (sigma_inv_beta + xty / sigma_sqs[c]), v});
                double rss = 0.0;
                for (int j = 0; j < m; ++j)
                    if (gamma[j] == c) rss += stats.resid_sq(j, betas[c]);
                sigma_sqs[c] = invgamma_sample(
                    rng, {0.5 * (prior.nu0 + n_c),
                          0.5 * (prior.nu0 * xi_sq + rss)});
            } else {
                betas[c] = mvn_sample(rng, {beta, Sigma});
                sigma_sqs[c] = invgamma_sample(
                    rng, {0.5 * prior.nu0, 0.5 * prior.nu0 * xi_sq});
            }
        }

        // beta | rest (sum over nonempty clusters, kappa of them)
        std::vector<bool> nonempty(k, false);
        for (int j = 0; j < m; ++j) nonempty[gamma[j]] = true;
        int kappa = 0;
        Vector beta_sum = Vector::Zero(p);
        for (int c = 0; c < k; ++c)
            if (nonempty[c]) {
                ++kappa;
                beta_sum += betas[c];
            }
        Matrix v_beta =
            inverse_spd(lambda0_inv + kappa * sigma_inv, "beta precision");
        beta = mvn_sample(
            rng, {v_beta * (lambda0_inv_mu0 + sigma_inv * beta_sum), v_beta});

        // Sigma | rest
        Matrix s_sigma = prior.S0;
        for (int c = 0; c < k; ++c)
            if (nonempty[c]) {
                Vector d = betas[c] - beta;
                s_sigma += d * d.transpose();
            }
        Sigma = invwishart_sample(
            rng, {prior.n0 + kappa, inverse_spd(s_sigma, "S_Sigma")});

        // xi^2 | rest
        double inv_sum = 0.0;
        for (int c = 0; c < k; ++c)
            if (nonempty[c]) inv_sum += 1.0 / sigma_sqs[c];
        xi_sq = gamma_sample(rng, {prior.a0 + 0.5 * kappa * prior.nu0,
                                   prior.b0 + 0.5 * prior.nu0 * inv_sum});

        const int post = b - burn_in;
        if (post >= 1 && post % cfg.thin == 0 && kept < retained) {
            for (int j = 0; j < m; ++j) out.gamma(kept, j) = gamma[j];
            out.omega.row(kept) = omega.transpose();
            for (int c = 0; c < k; ++c)
                out.betas.row(kept).segment(c * p, p) = betas[c].transpose();
            for (int c = 0; c < k; ++c) out.sigma_sqs(kept, c) = sigma_sqs[c];
            out.beta.row(kept) = beta.transpose();
            out.Sigma.row(kept) =
                Eigen::Map<const Vector>(Sigma.data(), p * p).transpose();
            out.xi_sq[kept] = xi_sq;
            if (log_joint_trace)
                log_joint_trace->push_back(chlrm_log_joint(
                    data, prior, gamma, omega, betas, sigma_sqs, beta, Sigma, xi_sq));
            ++kept;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Variational state
// ---------------------------------------------------------------------------

/// Mean-field factorization
/// q = q(omega) q(beta) q(Sigma) q(xi^2) prod_k q(beta_k) q(sigma_k^2)
///     prod_j q(gamma_j).
/// q(Sigma) is Inverse Wishart with E[Sigma^{-1}] = nu_Sigma * S_Sigma^{-1};
/// nu_Sigma = n0 + K and a_xi = a0 + K*nu0/2 are fixed by conjugacy.
struct ChlrmVarState {
    Matrix rho;          // m x K responsibilities, rows on the simplex
    Vector alpha_omega;  // Dirichlet concentration of q(omega)
    std::vector<Vector> mu_beta_k;
    std::vector<Matrix> Sigma_beta_k;
    Vector a_sig, b_sig;  // K Inverse Gamma factors q(sigma_k^2)
    Vector mu_beta;
    Matrix Sigma_beta;
    double nu_Sigma = 0.0;
    Matrix S_Sigma;
    double a_xi = 1.0, b_xi = 1.0;
    std::vector<double> elbo_trace;

    int m() const { return static_cast<int>(rho.rows()); }
    int k() const { return static_cast<int>(rho.cols()); }
    int p() const { return static_cast<int>(mu_beta.size()); }

    Matrix e_sigma_inv() const {
        return nu_Sigma * inverse_spd(S_Sigma, "S_Sigma");
    }
    /// E[log|Sigma|] under q(Sigma).
    double e_logdet_sigma() const {
        const int pp = p();
        double s = 0.0;
        for (int i = 1; i <= pp; ++i) s += digamma(0.5 * (nu_Sigma + 1 - i));
        return -s - pp * std::log(2.0) + logdet_spd(S_Sigma, "S_Sigma");
    }
};

// ---------------------------------------------------------------------------
// ELBO
// ---------------------------------------------------------------------------

/// Negative entropy of Dirichlet(alpha) written with the supplied E[log x];
/// split out so the omega ELBO terms read like the other factors.
inline double dirichlet_logpdf_expectation_term(const Vector& alpha,
                                                const Vector& e_log) {
    double v = lgamma_fn(alpha.sum());
    for (int c = 0; c < alpha.size(); ++c)
        v += -lgamma_fn(alpha[c]) + (alpha[c] - 1.0) * e_log[c];
    return v;
}

inline double chlrm_elbo(const ChlrmVarState& s, const GroupedDataset& data,
                         const ChlrmPrior& prior) {
    const int m = s.m();
    const int k = s.k();
    const int p = s.p();
    detail::GroupStats stats(data);

    const Vector e_log_omega = dirichlet_elog({s.alpha_omega});
    const Matrix s_sigma_inv = inverse_spd(s.S_Sigma, "S_Sigma");
    const double e_logdet_sigma = s.e_logdet_sigma();

    double elbo = 0.0;

    // E[log p(y | ...)] and the gamma terms.
    for (int j = 0; j < m; ++j) {
        for (int c = 0; c < k; ++c) {
            const double r = s.rho(j, c);
            if (r <= 0.0) continue;
            const double e_resid =
                stats.resid_sq(j, s.mu_beta_k[c]) +
                (stats.gram[j] * s.Sigma_beta_k[c]).trace();
            const double e_log_sig = std::log(s.b_sig[c]) - digamma(s.a_sig[c]);
            elbo += r * (-0.5 * stats.n[j] * std::log(2.0 * M_PI) -
                         0.5 * stats.n[j] * e_log_sig -
                         0.5 * (s.a_sig[c] / s.b_sig[c]) * e_resid);
            elbo += r * e_log_omega[c];   // E[log p(gamma_j | omega)]
            elbo -= r * std::log(r);      // -E[log q(gamma_j)]
        }
    }

    // omega terms.
    elbo += lgamma_fn(prior.alpha0.sum());
    for (int c = 0; c < k; ++c)
        elbo += -lgamma_fn(prior.alpha0[c]) +
                (prior.alpha0[c] - 1.0) * e_log_omega[c];
    elbo -= dirichlet_logpdf_expectation_term(s.alpha_omega, e_log_omega);

    // beta_k terms.
    for (int c = 0; c < k; ++c) {
        const Vector d = s.mu_beta_k[c] - s.mu_beta;
        const Matrix second_moment =
            d * d.transpose() + s.Sigma_beta_k[c] + s.Sigma_beta;
        elbo += -0.5 * p * std::log(2.0 * M_PI) - 0.5 * e_logdet_sigma -
                0.5 * s.nu_Sigma * (s_sigma_inv * second_moment).trace();
        elbo -= -0.5 * p * std::log(2.0 * M_PI * std::exp(1.0)) -
                0.5 * logdet_spd(s.Sigma_beta_k[c], "Sigma_beta_k");
    }

    // beta terms.
    {
        const Matrix lambda0_inv = inverse_spd(prior.Lambda0, "Lambda0");
        const Vector d = s.mu_beta - prior.mu0;
        elbo += -0.5 * p * std::log(2.0 * M_PI) -
                0.5 * logdet_spd(prior.Lambda0, "Lambda0") -
                0.5 * (d.dot(lambda0_inv * d) +
                       (lambda0_inv * s.Sigma_beta).trace());
        elbo -= -0.5 * p * std::log(2.0 * M_PI * std::exp(1.0)) -
                0.5 * logdet_spd(s.Sigma_beta, "Sigma_beta");
    }

    // Sigma terms: prior cross-entropy and q entropy, both in the
    // E[Sigma^{-1}] = nu_Sigma S_Sigma^{-1} convention.
    elbo += 0.5 * prior.n0 * logdet_spd(prior.S0, "S0") -
            0.5 * prior.n0 * p * std::log(2.0) -
            lgamma_multivariate(p, 0.5 * prior.n0) -
            0.5 * (prior.n0 + p + 1) * e_logdet_sigma -
            0.5 * s.nu_Sigma * (prior.S0 * s_sigma_inv).trace();
    elbo -= 0.5 * s.nu_Sigma * logdet_spd(s.S_Sigma, "S_Sigma") -
            0.5 * s.nu_Sigma * p * std::log(2.0) -
            lgamma_multivariate(p, 0.5 * s.nu_Sigma) -
            0.5 * (s.nu_Sigma + p + 1) * e_logdet_sigma -
            0.5 * s.nu_Sigma * p;

    // sigma_k^2 terms.
    const double e_xi = s.a_xi / s.b_xi;
    const double e_log_xi = digamma(s.a_xi) - std::log(s.b_xi);
    const double half_nu0 = 0.5 * prior.nu0;
    for (int c = 0; c < k; ++c) {
        const double e_log_sig = std::log(s.b_sig[c]) - digamma(s.a_sig[c]);
        elbo += half_nu0 * std::log(half_nu0) + half_nu0 * e_log_xi -
                lgamma_fn(half_nu0) - (half_nu0 + 1.0) * e_log_sig -
                half_nu0 * e_xi * (s.a_sig[c] / s.b_sig[c]);
        elbo -= -std::log(s.b_sig[c]) - lgamma_fn(s.a_sig[c]) +
                (s.a_sig[c] + 1.0) * digamma(s.a_sig[c]) - s.a_sig[c];
    }

    // xi^2 terms.
    elbo += prior.a0 * std::log(prior.b0) - lgamma_fn(prior.a0) +
            (prior.a0 - 1.0) * e_log_xi - prior.b0 * e_xi;
    elbo -= std::log(s.b_xi) - lgamma_fn(s.a_xi) +
            (s.a_xi - 1.0) * digamma(s.a_xi) - s.a_xi;
    return elbo;
}

// ---------------------------------------------------------------------------
// CAVI / SVI updates
// ---------------------------------------------------------------------------

/// Local step: recompute responsibility rows for the given groups from the
/// current global factors, in log space with log-sum-exp normalization.
inline void chlrm_local_update(ChlrmVarState& s, const detail::GroupStats& stats,
                               const std::vector<int>& groups) {
    const int k = s.k();
    const Vector e_log_omega = dirichlet_elog({s.alpha_omega});
    Vector e_log_sig(k), e_inv_sig(k);
    for (int c = 0; c < k; ++c) {
        e_log_sig[c] = std::log(s.b_sig[c]) - digamma(s.a_sig[c]);
        e_inv_sig[c] = s.a_sig[c] / s.b_sig[c];
    }
    for (int j : groups) {
        Vector logw(k);
        for (int c = 0; c < k; ++c) {
            const double e_resid = stats.resid_sq(j, s.mu_beta_k[c]) +
                                   (stats.gram[j] * s.Sigma_beta_k[c]).trace();
            logw[c] = e_log_omega[c] - 0.5 * stats.n[j] * e_log_sig[c] -
                      0.5 * e_inv_sig[c] * e_resid;
        }
        const double lse = log_sum_exp(logw);
        s.rho.row(j) = (logw.array() - lse).exp().transpose();
        s.rho.row(j) /= s.rho.row(j).sum();  // guard rounding in the exp
    }
}

/// Targets of one global step, kept in natural-parameter form for the
/// Gaussian factors so stochastic blending is well defined.
struct ChlrmGlobalTargets {
    Vector alpha_omega;
    std::vector<Matrix> prec_beta_k;      // Sigma_beta_k^{-1}
    std::vector<Vector> precmean_beta_k;  // Sigma_beta_k^{-1} mu_beta_k
    Vector a_sig, b_sig;
    Matrix prec_beta;
    Vector precmean_beta;
    Matrix S_Sigma;
    double b_xi = 0.0;
};

/// Compute the global updates from a snapshot of the current state, using
/// only the listed groups with their sums scaled by m/|groups|. With all
/// groups listed this is exactly the full-data update, so the same code path
/// serves both the full coordinate step and the minibatch estimate; every
/// target is linear in the scaled group sums, which makes the minibatch
/// version unbiased for the full one.
inline ChlrmGlobalTargets chlrm_global_targets(const ChlrmVarState& s,
                                               const detail::GroupStats& stats,
                                               const ChlrmPrior& prior,
                                               const std::vector<int>& groups) {
    const int k = s.k();
    const int p = s.p();
    if (groups.empty()) throw domain_error("chlrm_global_targets: empty minibatch");
    const double scale = static_cast<double>(s.m()) / groups.size();

    const Matrix e_sigma_inv = s.e_sigma_inv();
    const Matrix lambda0_inv = inverse_spd(prior.Lambda0, "Lambda0");
    const double e_xi = s.a_xi / s.b_xi;

    ChlrmGlobalTargets t;
    t.alpha_omega = prior.alpha0;
    t.prec_beta_k.resize(k);
    t.precmean_beta_k.resize(k);
    t.a_sig.resize(k);
    t.b_sig.resize(k);

    for (int c = 0; c < k; ++c) {
        Matrix gram = Matrix::Zero(p, p);
        Vector xty = Vector::Zero(p);
        double count_n = 0.0, resid = 0.0, members = 0.0;
        for (int j : groups) {
            const double r = s.rho(j, c);
            members += r;
            gram += r * stats.gram[j];
            xty += r * stats.xty[j];
            count_n += r * stats.n[j];
            resid += r * (stats.resid_sq(j, s.mu_beta_k[c]) +
                          (stats.gram[j] * s.Sigma_beta_k[c]).trace());
        }
        t.alpha_omega[c] += scale * members;
        const double e_inv_sig = s.a_sig[c] / s.b_sig[c];
        t.prec_beta_k[c] = e_sigma_inv + e_inv_sig * scale * gram;
        t.precmean_beta_k[c] = e_sigma_inv * s.mu_beta + e_inv_sig * scale * xty;
        t.a_sig[c] = 0.5 * (prior.nu0 + scale * count_n);
        t.b_sig[c] = 0.5 * (prior.nu0 * e_xi + scale * resid);
    }

    Vector beta_k_sum = Vector::Zero(p);
    for (int c = 0; c < k; ++c) beta_k_sum += s.mu_beta_k[c];
    t.prec_beta = lambda0_inv + k * e_sigma_inv;
    t.precmean_beta = lambda0_inv * prior.mu0 + e_sigma_inv * beta_k_sum;

    t.S_Sigma = prior.S0;
    for (int c = 0; c < k; ++c) {
        const Vector d = s.mu_beta_k[c] - s.mu_beta;
        t.S_Sigma += d * d.transpose() + s.Sigma_beta_k[c] + s.Sigma_beta;
    }

    double inv_sum = 0.0;
    for (int c = 0; c < k; ++c) inv_sum += s.a_sig[c] / s.b_sig[c];
    t.b_xi = prior.b0 + 0.5 * prior.nu0 * inv_sum;
    return t;
}

/// Install targets with step size `step` (step = 1 replaces the state, which
/// is the plain coordinate step). Gaussian factors blend in natural
/// parameters; the remaining factors blend their conventional parameters.
inline void chlrm_apply_targets(ChlrmVarState& s, const ChlrmGlobalTargets& t,
                                double step) {
    const int k = s.k();
    auto blend_scalar = [step](double old_v, double new_v) {
        return (1.0 - step) * old_v + step * new_v;
    };
    s.alpha_omega = (1.0 - step) * s.alpha_omega + step * t.alpha_omega;
    for (int c = 0; c < k; ++c) {
        Matrix old_prec = inverse_spd(s.Sigma_beta_k[c], "Sigma_beta_k");
        Vector old_pm = old_prec * s.mu_beta_k[c];
        Matrix prec = (1.0 - step) * old_prec + step * t.prec_beta_k[c];
        Vector pm = (1.0 - step) * old_pm + step * t.precmean_beta_k[c];
        s.Sigma_beta_k[c] = inverse_spd(prec, "blended cluster precision");
        s.mu_beta_k[c] = s.Sigma_beta_k[c] * pm;
        s.a_sig[c] = blend_scalar(s.a_sig[c], t.a_sig[c]);
        s.b_sig[c] = blend_scalar(s.b_sig[c], t.b_sig[c]);
    }
    {
        Matrix old_prec = inverse_spd(s.Sigma_beta, "Sigma_beta");
        Vector old_pm = old_prec * s.mu_beta;
        Matrix prec = (1.0 - step) * old_prec + step * t.prec_beta;
        Vector pm = (1.0 - step) * old_pm + step * t.precmean_beta;
        s.Sigma_beta = inverse_spd(prec, "blended beta precision");
        s.mu_beta = s.Sigma_beta * pm;
    }
    s.S_Sigma = (1.0 - step) * s.S_Sigma + step * t.S_Sigma;
    s.b_xi = blend_scalar(s.b_xi, t.b_xi);
}

inline std::vector<int> all_groups(int m) {
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

/// Responsibilities seeded from the data: per-group ridge coefficients are
/// clustered by k-means (k-means++ seeding from `rng`), and each group gets
/// most of its mass on its cluster. Far more likely to start near the
/// dominant mode than flat Dirichlet rows when groups are short.
inline Matrix chlrm_informed_rho(const GroupedDataset& data, int k,
                                 SeededRng& rng) {
    const int m = data.m();
    const int p = data.p();
    Matrix coef(m, p);
    for (int j = 0; j < m; ++j) {
        const auto& g = data.groups[j];
        Matrix gram = g.X.transpose() * g.X;
        gram.diagonal().array() += 1e-6 * (gram.trace() + 1.0);
        coef.row(j) =
            gram.ldlt().solve(g.X.transpose() * g.y).transpose();
    }
    // Standardize coordinates so k-means distances are scale-free.
    for (int c = 0; c < p; ++c) {
        const double mean = coef.col(c).mean();
        const double sd = std::sqrt(
            (coef.col(c).array() - mean).square().sum() / std::max(m - 1, 1));
        coef.col(c) = (coef.col(c).array() - mean) / (sd > 0 ? sd : 1.0);
    }
    // k-means++ seeding.
    Matrix centers(k, p);
    centers.row(0) = coef.row(static_cast<int>(rng.next_u64() % m));
    Vector d2 = (coef.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        int pick = 0;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            for (; pick < m - 1 && (u -= d2[pick]) > 0.0; ++pick) {}
        } else {
            pick = static_cast<int>(rng.next_u64() % m);
        }
        centers.row(c) = coef.row(pick);
        d2 = d2.cwiseMin(
            (coef.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    std::vector<int> assign(m, 0);
    for (int pass = 0; pass < 25; ++pass) {
        bool moved = false;
        for (int j = 0; j < m; ++j) {
            int bestc = 0;
            double bestd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (coef.row(j) - centers.row(c)).squaredNorm();
                if (d < bestd) { bestd = d; bestc = c; }
            }
            if (bestc != assign[j]) { assign[j] = bestc; moved = true; }
        }
        for (int c = 0; c < k; ++c) {
            Vector sum = Vector::Zero(p);
            int n = 0;
            for (int j = 0; j < m; ++j)
                if (assign[j] == c) { sum += coef.row(j).transpose(); ++n; }
            if (n > 0) centers.row(c) = (sum / n).transpose();
        }
        if (!moved) break;
    }
    Matrix rho = Matrix::Constant(m, k, k > 1 ? 0.05 / (k - 1) : 0.0);
    for (int j = 0; j < m; ++j) rho(j, assign[j]) = k > 1 ? 0.95 : 1.0;
    return rho;
}

/// Fresh state: responsibilities drawn from flat Dirichlet rows (symmetry
/// breaking) unless `rho0` supplies them, global factors centered on the
/// prior, then one global step to make the per-cluster factors consistent
/// with rho.
inline ChlrmVarState chlrm_init_state(const GroupedDataset& data,
                                      const ChlrmPrior& prior, int k,
                                      SeededRng& rng,
                                      const Matrix* rho0 = nullptr) {
    const int m = data.m();
    const int p = data.p();
    ChlrmVarState s;
    if (rho0 != nullptr) {
        if (rho0->rows() != m || rho0->cols() != k)
            throw domain_error("chlrm_init_state: rho0 has wrong shape");
        s.rho = *rho0;
    } else {
        s.rho.resize(m, k);
        DirichletParams flat{Vector::Ones(k)};
        for (int j = 0; j < m; ++j)
            s.rho.row(j) = dirichlet_sample(rng, flat).transpose();
    }
    s.alpha_omega = prior.alpha0.array() + static_cast<double>(m) / k;
    s.mu_beta_k.assign(k, prior.mu0);
    s.Sigma_beta_k.assign(k, prior.Lambda0);
    s.mu_beta = prior.mu0;
    s.Sigma_beta = prior.Lambda0;
    s.nu_Sigma = prior.n0 + k;
    // E[Sigma^{-1}] = nu_Sigma S_Sigma^{-1} starts at the prior mean n0 S0^{-1}.
    s.S_Sigma = (s.nu_Sigma / prior.n0) * prior.S0;
    s.a_xi = prior.a0 + 0.5 * k * prior.nu0;
    s.b_xi = prior.b0 * s.a_xi / prior.a0;  // keeps E[xi^2] = a0/b0
    const double scale_sq = prior.a0 / prior.b0;
    s.a_sig = Vector::Constant(k, 0.5 * (prior.nu0 + data.total_n() / double(k)));
    s.b_sig = s.a_sig * scale_sq;

    detail::GroupStats stats(data);
    chlrm_apply_targets(s, chlrm_global_targets(s, stats, prior, all_groups(m)),
                        1.0);
    return s;
}

struct ChlrmCaviConfig {
    int max_iter = 200;
    double rel_tol = 1e-9;
    std::uint64_t seed = 0;
    int restarts = 5;
};

/// One CAVI iteration: local responsibility step, then the global step
/// computed from the post-local snapshot. The global step is evaluated as a
/// block from the snapshot (matching the full-minibatch stochastic step with
/// unit step size) rather than factor-by-factor in place.
inline void chlrm_cavi_iteration(ChlrmVarState& s, const detail::GroupStats& stats,
                                 const ChlrmPrior& prior) {
    const std::vector<int> groups = all_groups(s.m());
    chlrm_local_update(s, stats, groups);
    chlrm_apply_targets(s, chlrm_global_targets(s, stats, prior, groups), 1.0);
}

inline ChlrmVarState chlrm_cavi(const GroupedDataset& data, const ChlrmPrior& prior,
                                int k, const ChlrmCaviConfig& cfg = {}) {
    data.validate();
    prior.validate();
    if (k != prior.k()) throw domain_error("chlrm_cavi: K does not match prior");
    if (cfg.max_iter < 1 || cfg.restarts < 1)
        throw domain_error("chlrm_cavi: max_iter and restarts must be >= 1");

    detail::GroupStats stats(data);
    SeededRng root(cfg.seed);
    ChlrmVarState best;
    double best_elbo = -std::numeric_limits<double>::infinity();

    for (int r = 0; r < cfg.restarts; ++r) {
        SeededRng rng = root.stream(r);
        ChlrmVarState s;
        if (r == 0) {
            // First restart starts from clustered per-group coefficients;
            // the rest keep the flat random responsibilities.
            const Matrix rho0 = chlrm_informed_rho(data, k, rng);
            s = chlrm_init_state(data, prior, k, rng, &rho0);
        } else {
            s = chlrm_init_state(data, prior, k, rng);
        }
        double prev = -std::numeric_limits<double>::infinity();
        for (int it = 1; it <= cfg.max_iter; ++it) {
            chlrm_cavi_iteration(s, stats, prior);
            const double elbo = chlrm_elbo(s, data, prior);
            s.elbo_trace.push_back(elbo);
            if (std::isfinite(prev)) {
                const double scale = std::max(std::abs(elbo), 1.0);
                if (elbo < prev - 1e-8 * scale)
                    throw error("chlrm_cavi: ELBO decreased at iteration " +
                                std::to_string(it));
                if (std::abs(elbo - prev) < cfg.rel_tol * scale) break;
            }
            prev = elbo;
        }
        if (!s.elbo_trace.empty() && s.elbo_trace.back() > best_elbo) {
            best_elbo = s.elbo_trace.back();
            best = s;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// SVI
// ---------------------------------------------------------------------------

struct SviConfig {
    int minibatch = 1;
    double tau = 1.0;   // >= 0
    double chi = 0.7;   // in (0.5, 1]
    int iters = 100;
    std::uint64_t seed = 0;

    void validate(int m) const {
        if (minibatch < 1 || minibatch > m)
            throw domain_error("SviConfig: minibatch must be in 1..m");
        if (!(tau >= 0.0)) throw domain_error("SviConfig: tau must be >= 0");
        if (!(chi > 0.5) || !(chi <= 1.0))
            throw domain_error("SviConfig: chi must lie in (0.5, 1]");
        if (iters < 1) throw domain_error("SviConfig: iters must be >= 1");
    }
};

/// Uniform sample of `size` distinct group indices (partial Fisher-Yates).
inline std::vector<int> sample_minibatch(SeededRng& rng, int m, int size) {
    std::vector<int> idx = all_groups(m);
    for (int i = 0; i < size; ++i) {
        const int j = i + static_cast<int>(rng.next_u64() % (m - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(size);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Stochastic variational inference: per iteration, refresh responsibilities
/// on a minibatch, form scaled global targets from the snapshot, and blend
/// with the Robbins-Monro step rho_t = (t + tau)^(-chi). `force_unit_step`
/// pins the step to 1 (used to check degeneracy to the full coordinate step).
inline ChlrmVarState chlrm_svi(const GroupedDataset& data, const ChlrmPrior& prior,
                               int k, const SviConfig& cfg,
                               bool force_unit_step = false) {
    data.validate();
    prior.validate();
    if (k != prior.k()) throw domain_error("chlrm_svi: K does not match prior");
    cfg.validate(data.m());

    detail::GroupStats stats(data);
    SeededRng root(cfg.seed);
    SeededRng init_rng = root.stream(0);
    SeededRng batch_rng = root.stream(1);
    ChlrmVarState s = chlrm_init_state(data, prior, k, init_rng);

    for (int t = 1; t <= cfg.iters; ++t) {
        const std::vector<int> batch =
            cfg.minibatch == data.m() ? all_groups(data.m())
                                      : sample_minibatch(batch_rng, data.m(),
                                                         cfg.minibatch);
        chlrm_local_update(s, stats, batch);
        const double step =
            force_unit_step ? 1.0 : std::pow(t + cfg.tau, -cfg.chi);
        chlrm_apply_targets(s, chlrm_global_targets(s, stats, prior, batch), step);
        s.elbo_trace.push_back(chlrm_elbo(s, data, prior));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Variational sampling
// ---------------------------------------------------------------------------

/// Independent draws from every variational factor, packaged like MCMC
/// output so the diagnostics share one code path.
inline ChlrmDraws chlrm_sample_variational(const ChlrmVarState& s, int n_draws,
                                           std::uint64_t seed) {
    if (n_draws < 1) throw domain_error("chlrm_sample_variational: n_draws >= 1");
    const int m = s.m();
    const int k = s.k();
    const int p = s.p();
    SeededRng rng(seed);

    ChlrmDraws out;
    out.k = k;
    out.p = p;
    out.m = m;
    out.gamma.resize(n_draws, m);
    out.omega.resize(n_draws, k);
    out.betas.resize(n_draws, k * p);
    out.sigma_sqs.resize(n_draws, k);
    out.beta.resize(n_draws, p);
    out.Sigma.resize(n_draws, p * p);
    out.xi_sq.resize(n_draws);
    out.seed = seed;

    const InvWishartParams q_sigma{s.nu_Sigma,
                                   inverse_spd(s.S_Sigma, "S_Sigma")};
    for (int b = 0; b < n_draws; ++b) {
        for (int j = 0; j < m; ++j)
            out.gamma(b, j) = categorical_sample(rng, s.rho.row(j).transpose());
        out.omega.row(b) = dirichlet_sample(rng, {s.alpha_omega}).transpose();
        for (int c = 0; c < k; ++c) {
            out.betas.row(b).segment(c * p, p) =
                mvn_sample(rng, {s.mu_beta_k[c], s.Sigma_beta_k[c]}).transpose();
            out.sigma_sqs(b, c) = invgamma_sample(rng, {s.a_sig[c], s.b_sig[c]});
        }
        out.beta.row(b) = mvn_sample(rng, {s.mu_beta, s.Sigma_beta}).transpose();
        Matrix sig = invwishart_sample(rng, q_sigma);
        out.Sigma.row(b) =
            Eigen::Map<const Vector>(sig.data(), p * p).transpose();
        out.xi_sq[b] = gamma_sample(rng, {s.a_xi, s.b_xi});
    }
    return out;
}

}  // namespace hlmvi
