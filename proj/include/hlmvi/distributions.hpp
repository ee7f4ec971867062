#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace hlmvi {

// ---------------------------------------------------------------------------
// Parameter types
// ---------------------------------------------------------------------------

struct MvnParams {
    Vector mean;
    Matrix cov;  // symmetric positive definite

    void validate() const {
        if (cov.rows() != cov.cols() || cov.rows() != mean.size())
            throw domain_error("MvnParams: dimension mismatch");
        cholesky(cov, "MvnParams.cov");
    }
};

struct GammaParams {
    double shape;  // alpha > 0
    double rate;   // beta > 0

    void validate() const {
        if (!(shape > 0.0) || !(rate > 0.0))
            throw domain_error("GammaParams: shape and rate must be positive");
    }
};

struct InvGammaParams {
    double shape;  // alpha > 0
    double scale;  // beta > 0

    void validate() const {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw domain_error("InvGammaParams: shape and scale must be positive");
    }
};

/// Inverse Wishart parameterized so that W^{-1} ~ Wishart(dof, scale),
/// i.e. E[W^{-1}] = dof * scale. Requires dof > d - 1 and scale SPD.
struct InvWishartParams {
    double dof;
    Matrix scale;

    int dim() const { return static_cast<int>(scale.rows()); }
    void validate() const {
        if (scale.rows() != scale.cols())
            throw domain_error("InvWishartParams: scale must be square");
        if (!(dof > scale.rows() - 1))
            throw domain_error("InvWishartParams: dof must exceed d - 1");
        cholesky(scale, "InvWishartParams.scale");
    }
};

struct DirichletParams {
    Vector conc;  // all entries > 0

    void validate() const {
        if (conc.size() < 1 || (conc.array() <= 0.0).any())
            throw domain_error("DirichletParams: concentrations must be positive");
    }
};

/// Generic natural-exponential-family description:
/// p(x) = exp{ base_measure_log(x) + eta . suff_stat(x) - log_partition(eta) }.
struct NefDescriptor {
    std::function<double(const Vector&)> base_measure_log;
    std::function<Vector(const Vector&)> suff_stat;
    Vector natural_param;
    std::function<double(const Vector&)> log_partition;

    double logpdf(const Vector& x) const {
        return base_measure_log(x) + natural_param.dot(suff_stat(x)) -
               log_partition(natural_param);
    }
};

// Natural-parameter mappings for the Gamma and Inverse Gamma families and
// their inverses, used for the round-trip consistency checks.
inline Vector gamma_natural(const GammaParams& p) {
    return Vector{{p.shape - 1.0, -p.rate}};
}
inline GammaParams gamma_from_natural(const Vector& eta) {
    return GammaParams{eta[0] + 1.0, -eta[1]};
}
inline Vector invgamma_natural(const InvGammaParams& p) {
    return Vector{{-p.shape - 1.0, -p.scale}};
}
inline InvGammaParams invgamma_from_natural(const Vector& eta) {
    return InvGammaParams{-eta[0] - 1.0, -eta[1]};
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline Vector mvn_sample(SeededRng& rng, const MvnParams& p) {
    p.validate();
    Matrix l = cholesky(p.cov, "MvnParams.cov");
    Vector z(p.mean.size());
    for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return p.mean + l * z;
}

inline double gamma_sample(SeededRng& rng, const GammaParams& p) {
    p.validate();
    return rng.gamma(p.shape, p.rate);
}

inline double invgamma_sample(SeededRng& rng, const InvGammaParams& p) {
    p.validate();
    return p.scale / rng.gamma(p.shape, 1.0);
}

/// Wishart(dof, scale) draw via the Bartlett decomposition.
inline Matrix wishart_sample(SeededRng& rng, double dof, const Matrix& scale) {
    const int d = static_cast<int>(scale.rows());
    if (!(dof > d - 1)) throw domain_error("wishart_sample: dof must exceed d - 1");
    Matrix l = cholesky(scale, "wishart scale");
    Matrix a = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        a(i, i) = std::sqrt(rng.chi_squared(dof - i));
        for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
    }
    Matrix la = l * a;
    return la * la.transpose();
}

/// Draw W with W^{-1} ~ Wishart(dof, scale); see InvWishartParams.
inline Matrix invwishart_sample(SeededRng& rng, const InvWishartParams& p) {
    p.validate();
    Matrix precision = wishart_sample(rng, p.dof, p.scale);
    return inverse_spd(precision, "inverse Wishart draw");
}

inline Vector dirichlet_sample(SeededRng& rng, const DirichletParams& p) {
    p.validate();
    Vector g(p.conc.size());
    for (int k = 0; k < g.size(); ++k) g[k] = rng.gamma(p.conc[k], 1.0);
    return g / g.sum();
}

/// Sample an index in [0, K) proportionally to nonnegative weights.
inline int categorical_sample(SeededRng& rng, const Vector& weights) {
    if (weights.size() < 1 || (weights.array() < 0.0).any())
        throw domain_error("categorical_sample: weights must be nonnegative");
    const double total = weights.sum();
    if (!(total > 0.0)) throw domain_error("categorical_sample: weights sum to zero");
    double u = rng.uniform() * total;
    for (int k = 0; k < weights.size() - 1; ++k) {
        u -= weights[k];
        if (u <= 0.0) return k;
    }
    return static_cast<int>(weights.size()) - 1;
}

/// As above but from unnormalized log-weights, normalized by log-sum-exp.
inline int categorical_sample_log(SeededRng& rng, const Vector& log_weights) {
    const double lse = log_sum_exp(log_weights);
    Vector w = (log_weights.array() - lse).exp();
    return categorical_sample(rng, w);
}

// ---------------------------------------------------------------------------
// Log-densities
// ---------------------------------------------------------------------------

inline double mvn_logpdf(const Vector& x, const MvnParams& p) {
    const int d = static_cast<int>(x.size());
    Matrix l = cholesky(p.cov, "MvnParams.cov");
    Vector z = l.triangularView<Eigen::Lower>().solve(x - p.mean);
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    return -0.5 * d * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * z.squaredNorm();
}

inline double normal_logpdf(double x, double mean, double var) {
    const double z = x - mean;
    return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * z * z / var;
}

inline double gamma_logpdf(double x, const GammaParams& p) {
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    return p.shape * std::log(p.rate) - lgamma_fn(p.shape) +
           (p.shape - 1.0) * std::log(x) - p.rate * x;
}

inline double invgamma_logpdf(double x, const InvGammaParams& p) {
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    return p.shape * std::log(p.scale) - lgamma_fn(p.shape) -
           (p.shape + 1.0) * std::log(x) - p.scale / x;
}

inline double dirichlet_logpdf(const Vector& x, const DirichletParams& p) {
    double s = lgamma_fn(p.conc.sum());
    for (int k = 0; k < p.conc.size(); ++k)
        s += (p.conc[k] - 1.0) * std::log(x[k]) - lgamma_fn(p.conc[k]);
    return s;
}

/// Multinomial log-pmf (provided for completeness; unused by the models).
inline double multinomial_logpmf(const Eigen::VectorXi& counts, const Vector& probs) {
    const int n = counts.sum();
    double s = lgamma_fn(n + 1.0);
    for (int k = 0; k < counts.size(); ++k) {
        s -= lgamma_fn(counts[k] + 1.0);
        if (counts[k] > 0) s += counts[k] * std::log(probs[k]);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Closed-form expectations
// ---------------------------------------------------------------------------

struct InvGammaExpectations {
    double e_x;    // beta / (alpha - 1), requires alpha > 1
    double e_inv;  // alpha / beta
    double e_log;  // log beta - psi(alpha)
};

inline InvGammaExpectations invgamma_expectations(const InvGammaParams& p) {
    p.validate();
    InvGammaExpectations e;
    e.e_inv = p.shape / p.scale;
    e.e_log = std::log(p.scale) - digamma(p.shape);
    if (p.shape > 1.0) {
        e.e_x = p.scale / (p.shape - 1.0);
    } else {
        e.e_x = std::numeric_limits<double>::quiet_NaN();
    }
    return e;
}

/// E[X] for Inverse Gamma; unlike the struct above this throws when the
/// mean does not exist.
inline double invgamma_mean(const InvGammaParams& p) {
    p.validate();
    if (!(p.shape > 1.0))
        throw domain_error("invgamma_mean: mean requires shape > 1");
    return p.scale / (p.shape - 1.0);
}

struct GammaExpectations {
    double e_x;    // alpha / beta
    double e_log;  // psi(alpha) - log beta
};

inline GammaExpectations gamma_expectations(const GammaParams& p) {
    p.validate();
    return {p.shape / p.rate, digamma(p.shape) - std::log(p.rate)};
}

/// E[log|W|] for W ~ InvWishart(dof, scale):
/// -sum_i psi((dof+1-i)/2) - d log 2 + log|scale^{-1}|.
inline double invwishart_elogdet(const InvWishartParams& p) {
    p.validate();
    const int d = p.dim();
    double s = 0.0;
    for (int i = 1; i <= d; ++i) s += digamma(0.5 * (p.dof + 1 - i));
    return -s - d * std::log(2.0) - logdet_spd(p.scale, "InvWishartParams.scale");
}

/// E[W^{-1}] = dof * scale.
inline Matrix invwishart_e_inv(const InvWishartParams& p) {
    p.validate();
    return p.dof * p.scale;
}

/// Component k of E[log X] under Dirichlet: psi(alpha_k) - psi(sum alpha).
inline Vector dirichlet_elog(const DirichletParams& p) {
    p.validate();
    const double psi_total = digamma(p.conc.sum());
    Vector out(p.conc.size());
    for (int k = 0; k < out.size(); ++k) out[k] = digamma(p.conc[k]) - psi_total;
    return out;
}

/// KL(p || q) between two Gaussians of equal dimension.
inline double gaussian_kl(const MvnParams& p, const MvnParams& q) {
    const int d = static_cast<int>(p.mean.size());
    if (q.mean.size() != d) throw domain_error("gaussian_kl: dimension mismatch");
    Matrix lq = cholesky(q.cov, "gaussian_kl q.cov");
    Matrix qinv = inverse_spd(q.cov, "gaussian_kl q.cov");
    Vector delta = q.mean - p.mean;
    const double logdet_q = 2.0 * lq.diagonal().array().log().sum();
    const double logdet_p = logdet_spd(p.cov, "gaussian_kl p.cov");
    return 0.5 * ((qinv * p.cov).trace() + delta.dot(qinv * delta) - d + logdet_q -
                  logdet_p);
}

}  // namespace hlmvi
