#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"
#include "data.hpp"
#include "distributions.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace hlmvi {

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

/// beta ~ N_p(beta0, Sigma0), sigma^2 ~ IG(nu0/2, nu0*sigma0_sq/2).
struct LrmPrior {
    Vector beta0;
    Matrix Sigma0;
    double nu0 = 1.0;
    double sigma0_sq = 1.0;

    void validate() const {
        if (Sigma0.rows() != Sigma0.cols() || Sigma0.rows() != beta0.size())
            throw domain_error("LrmPrior: dimension mismatch");
        cholesky(Sigma0, "LrmPrior.Sigma0");
        if (!(nu0 > 0.0) || !(sigma0_sq > 0.0))
            throw domain_error("LrmPrior: nu0 and sigma0_sq must be positive");
    }
};

/// Weakly informative prior centered at OLS: beta0 = b_ols,
/// Sigma0 = n * s2_ols * (X'X)^{-1}, nu0 = 1, sigma0_sq = s2_ols.
inline LrmPrior unit_info_prior(const RegressionData& data) {
    OlsFit fit = ols(data);
    LrmPrior prior;
    prior.beta0 = fit.beta;
    prior.Sigma0 = data.n() * fit.sigma_sq * inverse_spd(fit.xtx, "X'X");
    prior.nu0 = 1.0;
    prior.sigma0_sq = fit.sigma_sq;
    return prior;
}

/// Zellner's g prior: beta0 = 0, Sigma0 = g * s2_ols * (X'X)^{-1}; g defaults
/// to n (pass g <= 0 to request the default).
inline LrmPrior zellner_prior(const RegressionData& data, double g = 0.0) {
    if (g == 0.0) g = static_cast<double>(data.n());
    if (!(g > 0.0)) throw domain_error("zellner_prior: g must be positive");
    OlsFit fit = ols(data);
    LrmPrior prior;
    prior.beta0 = Vector::Zero(data.p());
    prior.Sigma0 = g * fit.sigma_sq * inverse_spd(fit.xtx, "X'X");
    prior.nu0 = 1.0;
    prior.sigma0_sq = fit.sigma_sq;
    return prior;
}

// ---------------------------------------------------------------------------
// Draw container
// ---------------------------------------------------------------------------

/// Column-aligned store of retained draws: beta columns then sigma^2.
struct PosteriorDraws {
    std::vector<std::string> names;
    Matrix draws;  // B x (p + 1)
    std::uint64_t seed = 0;
    int burn_in = 0;
    int thin = 1;

    int b() const { return static_cast<int>(draws.rows()); }
};

// ---------------------------------------------------------------------------
// Gibbs sampler
// ---------------------------------------------------------------------------

struct LrmGibbsConfig {
    int n_samples = 10000;
    int burn_in = -1;  // < 0: 10% of n_samples
    int thin = 1;
    std::uint64_t seed = 0;
    double fixed_sigma_sq = 0.0;  // > 0: clamp sigma^2 instead of sampling it
};

/// Exact posterior of beta when sigma^2 is known:
/// N(m, V), V = (Sigma0^{-1} + X'X/sigma^2)^{-1}, m = V(Sigma0^{-1} beta0 + X'y/sigma^2).
inline MvnParams lrm_fixed_sigma_posterior(const RegressionData& data,
                                           const LrmPrior& prior, double sigma_sq) {
    prior.validate();
    if (!(sigma_sq > 0.0))
        throw domain_error("lrm_fixed_sigma_posterior: sigma_sq must be positive");
    Matrix prior_prec = inverse_spd(prior.Sigma0, "LrmPrior.Sigma0");
    Matrix v = inverse_spd(
        prior_prec + data.X.transpose() * data.X / sigma_sq, "posterior precision");
    Vector m = v * (prior_prec * prior.beta0 +
                    data.X.transpose() * data.y / sigma_sq);
    return {m, v};
}

/// Closed-form log marginal likelihood with sigma^2 known:
/// y ~ N(X beta0, sigma^2 I + X Sigma0 X').
inline double lrm_fixed_sigma_log_marginal(const RegressionData& data,
                                           const LrmPrior& prior, double sigma_sq) {
    prior.validate();
    Matrix cov = data.X * prior.Sigma0 * data.X.transpose();
    cov.diagonal().array() += sigma_sq;
    return mvn_logpdf(data.y, {data.X * prior.beta0, cov});
}

inline PosteriorDraws lrm_gibbs(const RegressionData& data, const LrmPrior& prior,
                                const LrmGibbsConfig& cfg) {
    data.validate();
    prior.validate();
    const int burn_in = cfg.burn_in < 0 ? cfg.n_samples / 10 : cfg.burn_in;
    if (cfg.n_samples <= burn_in)
        throw domain_error("lrm_gibbs: n_samples must exceed burn_in");
    if (cfg.thin < 1) throw domain_error("lrm_gibbs: thin must be >= 1");

    const int n = data.n();
    const int p = data.p();
    const Matrix xtx = data.X.transpose() * data.X;
    const Vector xty = data.X.transpose() * data.y;
    const Matrix prior_prec = inverse_spd(prior.Sigma0, "LrmPrior.Sigma0");
    const Vector prior_prec_mean = prior_prec * prior.beta0;

    SeededRng rng(cfg.seed);
    OlsFit init = ols(data);
    Vector beta = init.beta;
    double sigma_sq =
        cfg.fixed_sigma_sq > 0.0 ? cfg.fixed_sigma_sq : init.sigma_sq;

    const int retained = (cfg.n_samples - burn_in) / cfg.thin;
    PosteriorDraws out;
    for (int j = 0; j < p; ++j) out.names.push_back("beta" + std::to_string(j + 1));
    out.names.push_back("sigma_sq");
    out.draws.resize(retained, p + 1);
    out.seed = cfg.seed;
    out.burn_in = burn_in;
    out.thin = cfg.thin;

    int kept = 0;
    for (int b = 1; b <= cfg.n_samples; ++b) {
        Matrix v;
        try {
            v = inverse_spd(prior_prec + xtx / sigma_sq, "beta conditional precision");
        } catch (const not_spd_error& e) {
            throw error("lrm_gibbs: iteration " + std::to_string(b) + ": " + e.what());
        }
        Vector m = v * (prior_prec_mean + xty / sigma_sq);
        beta = mvn_sample(rng, {m, v});

        if (cfg.fixed_sigma_sq <= 0.0) {
            const Vector resid = data.y - data.X * beta;
            const double a = 0.5 * (n + prior.nu0);
            const double bb =
                0.5 * (prior.nu0 * prior.sigma0_sq + resid.squaredNorm());
            sigma_sq = invgamma_sample(rng, {a, bb});
        }

        const int post = b - burn_in;
        if (post >= 1 && post % cfg.thin == 0 && kept < retained) {
            out.draws.block(kept, 0, 1, p) = beta.transpose();
            out.draws(kept, p) = sigma_sq;
            ++kept;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CAVI
// ---------------------------------------------------------------------------

struct LrmCaviConfig {
    int max_iter = 1000;
    double rel_tol = 1e-9;
    double pinned_sigma_sq = 0.0;  // > 0: q(sigma^2) fixed at this value
};

/// Mean-field approximation q(beta) q(sigma^2) = N(mu, Sigma) * IG(a, b).
struct LrmVarState {
    Vector mu_beta;
    Matrix Sigma_beta;
    double a = 1.0;
    double b = 1.0;
    std::vector<double> elbo_trace;
    double pinned_sigma_sq = 0.0;  // > 0: q(sigma^2) is a point mass there

    double e_inv_sigma_sq() const {
        return pinned_sigma_sq > 0.0 ? 1.0 / pinned_sigma_sq : a / b;
    }
    double e_log_sigma_sq() const {
        return pinned_sigma_sq > 0.0 ? std::log(pinned_sigma_sq)
                                     : std::log(b) - digamma(a);
    }
};

/// Variational lower bound on log p(y) at the given state. With a pinned
/// sigma^2 the bound is over q(beta) only (the sigma^2 factor is degenerate).
inline double lrm_elbo(const LrmVarState& s, const RegressionData& data,
                       const LrmPrior& prior) {
    const int n = data.n();
    const int p = data.p();
    const Matrix xtx = data.X.transpose() * data.X;
    const Vector resid_mean = data.y - data.X * s.mu_beta;
    const double e_resid = resid_mean.squaredNorm() + (xtx * s.Sigma_beta).trace();

    // E[log p(y | X, beta, sigma^2)]
    double elbo = -0.5 * n * std::log(2.0 * M_PI) - 0.5 * n * s.e_log_sigma_sq() -
                  0.5 * s.e_inv_sigma_sq() * e_resid;

    // E[log p(beta)] - E[log q(beta)]
    const Matrix prior_prec = inverse_spd(prior.Sigma0, "LrmPrior.Sigma0");
    const Vector delta = s.mu_beta - prior.beta0;
    elbo += -0.5 * p * std::log(2.0 * M_PI) -
            0.5 * logdet_spd(prior.Sigma0, "LrmPrior.Sigma0") -
            0.5 * (delta.dot(prior_prec * delta) + (prior_prec * s.Sigma_beta).trace());
    elbo -= -0.5 * p * std::log(2.0 * M_PI * std::exp(1.0)) -
            0.5 * logdet_spd(s.Sigma_beta, "Sigma_beta");

    if (s.pinned_sigma_sq > 0.0) return elbo;

    // E[log p(sigma^2)] - E[log q(sigma^2)]
    const double half_nu0 = 0.5 * prior.nu0;
    const double prior_scale = half_nu0 * prior.sigma0_sq;
    elbo += half_nu0 * std::log(prior_scale) - lgamma_fn(half_nu0) -
            (half_nu0 + 1.0) * (std::log(s.b) - digamma(s.a)) -
            prior_scale * s.a / s.b;
    elbo -= -std::log(s.b) - lgamma_fn(s.a) + (s.a + 1.0) * digamma(s.a) - s.a;
    return elbo;
}

inline LrmVarState lrm_cavi(const RegressionData& data, const LrmPrior& prior,
                            const LrmCaviConfig& cfg = {}) {
    prior.validate();
    if (cfg.max_iter < 1) throw domain_error("lrm_cavi: max_iter must be >= 1");

    const int n = data.n();
    if (n > 0) data.validate();  // n = 0 is allowed: prior-only fixed point
    const Matrix xtx = data.X.transpose() * data.X;
    const Vector xty = data.X.transpose() * data.y;
    const Matrix prior_prec = inverse_spd(prior.Sigma0, "LrmPrior.Sigma0");
    const Vector prior_prec_mean = prior_prec * prior.beta0;

    LrmVarState s;
    s.pinned_sigma_sq = cfg.pinned_sigma_sq;
    s.a = 0.5 * (n + prior.nu0);
    if (n > 0) {
        OlsFit init = ols(data);
        s.mu_beta = init.beta;
        s.Sigma_beta = init.sigma_sq * inverse_spd(xtx, "X'X");
        s.b = s.a * (cfg.pinned_sigma_sq > 0.0 ? cfg.pinned_sigma_sq : init.sigma_sq);
    } else {
        s.mu_beta = prior.beta0;
        s.Sigma_beta = prior.Sigma0;
        s.b = s.a * (cfg.pinned_sigma_sq > 0.0 ? cfg.pinned_sigma_sq : prior.sigma0_sq);
    }

    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const double e_inv = s.e_inv_sigma_sq();
        s.Sigma_beta = inverse_spd(prior_prec + e_inv * xtx, "Sigma_beta update");
        s.mu_beta = s.Sigma_beta * (prior_prec_mean + e_inv * xty);

        if (cfg.pinned_sigma_sq <= 0.0) {
            const Vector resid_mean = data.y - data.X * s.mu_beta;
            const double e_resid =
                resid_mean.squaredNorm() + (xtx * s.Sigma_beta).trace();
            s.a = 0.5 * (n + prior.nu0);
            s.b = 0.5 * (prior.nu0 * prior.sigma0_sq + e_resid);
        }

        const double elbo = lrm_elbo(s, data, prior);
        s.elbo_trace.push_back(elbo);
        if (std::isfinite(prev)) {
            const double scale = std::max(std::abs(elbo), 1.0);
            if (elbo < prev - 1e-8 * scale)
                throw error("lrm_cavi: ELBO decreased at iteration " +
                            std::to_string(it));
            if (std::abs(elbo - prev) < cfg.rel_tol * scale) break;
        }
        prev = elbo;
    }
    return s;
}

/// Independent mean-field draws beta ~ N(mu, Sigma), sigma^2 ~ IG(a, b),
/// packaged like MCMC output so diagnostics share one code path.
inline PosteriorDraws lrm_sample_variational(const LrmVarState& s, int n_draws,
                                             std::uint64_t seed) {
    if (n_draws < 1) throw domain_error("lrm_sample_variational: n_draws >= 1");
    const int p = static_cast<int>(s.mu_beta.size());
    SeededRng rng(seed);
    PosteriorDraws out;
    for (int j = 0; j < p; ++j) out.names.push_back("beta" + std::to_string(j + 1));
    out.names.push_back("sigma_sq");
    out.draws.resize(n_draws, p + 1);
    out.seed = seed;
    MvnParams q_beta{s.mu_beta, s.Sigma_beta};
    for (int i = 0; i < n_draws; ++i) {
        out.draws.block(i, 0, 1, p) = mvn_sample(rng, q_beta).transpose();
        out.draws(i, p) = s.pinned_sigma_sq > 0.0
                              ? s.pinned_sigma_sq
                              : invgamma_sample(rng, {s.a, s.b});
    }
    return out;
}

}  // namespace hlmvi
