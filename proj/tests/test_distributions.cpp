#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <hlmvi/distributions.hpp>

using namespace hlmvi;
using Catch::Approx;

namespace {

// Monte Carlo mean with its standard error.
struct McMoment {
    double mean, se;
};

template <typename F>
McMoment mc(int n, F&& draw) {
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = draw();
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = (s2 / n - mean * mean) * n / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

}  // namespace

TEST_CASE("multivariate normal sampler matches mean and covariance") {
    MvnParams p;
    p.mean = (Vector(2) << 1.0, -2.0).finished();
    p.cov = (Matrix(2, 2) << 2.0, 0.8, 0.8, 1.0).finished();
    SeededRng rng(1);
    const int n = 100000;
    Vector s = Vector::Zero(2);
    Matrix s2 = Matrix::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
        const Vector x = mvn_sample(rng, p);
        s += x;
        s2 += x * x.transpose();
    }
    const Vector mean = s / n;
    const Matrix cov = s2 / n - mean * mean.transpose();
    REQUIRE((mean - p.mean).cwiseAbs().maxCoeff() < 0.02);
    REQUIRE((cov - p.cov).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("wishart sample mean equals dof times scale") {
    const double dof = 7.0;
    const Matrix scale = (Matrix(2, 2) << 1.0, 0.3, 0.3, 0.5).finished();
    SeededRng rng(2);
    Matrix s = Matrix::Zero(2, 2);
    const int n = 50000;
    for (int i = 0; i < n; ++i) s += wishart_sample(rng, dof, scale);
    REQUIRE(((s / n) - dof * scale).cwiseAbs().maxCoeff() < 0.06);
}

TEST_CASE("dirichlet samples live on the simplex with the right mean") {
    DirichletParams p{(Vector(3) << 2.0, 5.0, 3.0).finished()};
    SeededRng rng(3);
    Vector s = Vector::Zero(3);
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const Vector x = dirichlet_sample(rng, p);
        REQUIRE(x.sum() == Approx(1.0).epsilon(1e-12));
        REQUIRE(x.minCoeff() >= 0.0);
        s += x;
    }
    const Vector mean = s / n;
    const Vector expect = p.conc / p.conc.sum();
    REQUIRE((mean - expect).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("categorical sampling from raw and log weights agree in law") {
    const Vector w = (Vector(3) << 0.5, 0.2, 0.3).finished();
    SeededRng r1(4), r2(4);
    Eigen::Vector3d c1 = Eigen::Vector3d::Zero(), c2 = Eigen::Vector3d::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        c1[categorical_sample(r1, w)] += 1.0;
        c2[categorical_sample_log(r2, w.array().log().matrix())] += 1.0;
    }
    REQUIRE(((c1 / n) - w).cwiseAbs().maxCoeff() < 0.01);
    // Same uniform stream, same normalized weights: identical counts.
    REQUIRE(c1 == c2);
}

TEST_CASE("normal and multivariate normal logpdf agree in one dimension") {
    MvnParams p;
    p.mean = (Vector(1) << 0.7).finished();
    p.cov = (Matrix(1, 1) << 2.3).finished();
    const Vector x = (Vector(1) << -0.4).finished();
    REQUIRE(mvn_logpdf(x, p) == Approx(normal_logpdf(-0.4, 0.7, 2.3)).epsilon(1e-13));
}

TEST_CASE("gamma and inverse gamma logpdfs integrate consistent moments") {
    // IG(a, b) density at x equals Gamma(a, b) density at 1/x times x^{-2}.
    const double x = 0.8;
    REQUIRE(invgamma_logpdf(x, {3.0, 2.0}) ==
            Approx(gamma_logpdf(1.0 / x, {3.0, 2.0}) - 2.0 * std::log(x))
                .epsilon(1e-12));
}

TEST_CASE("dirichlet logpdf matches the symmetric closed form") {
    // Dir(1,1,1) is uniform on the simplex: density Gamma(3) = 2.
    DirichletParams flat{Vector::Ones(3)};
    const Vector x = (Vector(3) << 0.2, 0.3, 0.5).finished();
    REQUIRE(dirichlet_logpdf(x, flat) == Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("natural parameter maps round-trip") {
    const GammaParams g{2.5, 1.7};
    const auto g2 = gamma_from_natural(gamma_natural(g));
    REQUIRE(g2.shape == Approx(g.shape).epsilon(1e-13));
    REQUIRE(g2.rate == Approx(g.rate).epsilon(1e-13));
    const InvGammaParams ig{3.1, 0.9};
    const auto ig2 = invgamma_from_natural(invgamma_natural(ig));
    REQUIRE(ig2.shape == Approx(ig.shape).epsilon(1e-13));
    REQUIRE(ig2.scale == Approx(ig.scale).epsilon(1e-13));
}

TEST_CASE("inverse gamma expectation formulas match Monte Carlo within 3 SE") {
    const InvGammaParams p{4.0, 3.0};
    const auto e = invgamma_expectations(p);
    SeededRng rng(5);
    const int n = 100000;
    auto chk = [&](double expect, auto&& f) {
        SeededRng local = rng.stream(static_cast<std::uint64_t>(expect * 1e6));
        const auto m = mc(n, [&] { return f(invgamma_sample(local, p)); });
        REQUIRE(std::abs(m.mean - expect) < 3.0 * m.se);
    };
    chk(e.e_x, [](double x) { return x; });
    chk(e.e_inv, [](double x) { return 1.0 / x; });
    chk(e.e_log, [](double x) { return std::log(x); });
    REQUIRE(e.e_x == Approx(p.scale / (p.shape - 1.0)).epsilon(1e-13));
    REQUIRE(invgamma_mean(p) == Approx(e.e_x).epsilon(1e-13));
}

TEST_CASE("gamma expectation formulas match Monte Carlo within 3 SE") {
    const GammaParams p{2.2, 0.7};
    const auto e = gamma_expectations(p);
    SeededRng rng(6);
    const int n = 100000;
    {
        SeededRng local = rng.stream(0);
        const auto m = mc(n, [&] { return gamma_sample(local, p); });
        REQUIRE(std::abs(m.mean - e.e_x) < 3.0 * m.se);
    }
    {
        SeededRng local = rng.stream(1);
        const auto m = mc(n, [&] { return std::log(gamma_sample(local, p)); });
        REQUIRE(std::abs(m.mean - e.e_log) < 3.0 * m.se);
    }
}

TEST_CASE("inverse wishart expectations match Monte Carlo within 3 SE") {
    InvWishartParams p{6.0, (Matrix(2, 2) << 0.8, 0.2, 0.2, 0.6).finished()};
    SeededRng rng(7);
    const int n = 100000;
    {
        SeededRng local = rng.stream(0);
        const auto m = mc(n, [&] {
            return std::log(invwishart_sample(local, p).determinant());
        });
        REQUIRE(std::abs(m.mean - invwishart_elogdet(p)) < 3.0 * m.se);
    }
    {
        const Matrix expect = invwishart_e_inv(p);
        Matrix s = Matrix::Zero(2, 2);
        SeededRng local = rng.stream(1);
        for (int i = 0; i < n; ++i)
            s += invwishart_sample(local, p).inverse();
        REQUIRE(((s / n) - expect).cwiseAbs().maxCoeff() < 0.05);
    }
    REQUIRE((invwishart_e_inv(p) - p.dof * p.scale).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dirichlet log expectations match Monte Carlo within 3 SE") {
    DirichletParams p{(Vector(3) << 1.5, 4.0, 2.5).finished()};
    const Vector expect = dirichlet_elog(p);
    SeededRng rng(8);
    const int n = 100000;
    for (int c = 0; c < 3; ++c) {
        SeededRng local = rng.stream(c);
        const auto m =
            mc(n, [&] { return std::log(dirichlet_sample(local, p)[c]); });
        REQUIRE(std::abs(m.mean - expect[c]) < 3.0 * m.se);
    }
}

TEST_CASE("gaussian KL is zero at equality and positive otherwise") {
    MvnParams p;
    p.mean = (Vector(2) << 0.0, 1.0).finished();
    p.cov = (Matrix(2, 2) << 1.0, 0.2, 0.2, 2.0).finished();
    REQUIRE(gaussian_kl(p, p) == Approx(0.0).margin(1e-12));
    MvnParams q = p;
    q.mean[0] += 1.0;
    // KL for equal covariances: 0.5 * delta' cov^{-1} delta
    const Vector d = q.mean - p.mean;
    const double expect = 0.5 * d.dot(inverse_spd(p.cov) * d);
    REQUIRE(gaussian_kl(p, q) == Approx(expect).epsilon(1e-12));
    REQUIRE(gaussian_kl(p, q) > 0.0);
}

TEST_CASE("parameter validation rejects bad inputs") {
    SeededRng rng(1);
    REQUIRE_THROWS_AS(gamma_sample(rng, GammaParams{-1.0, 1.0}), domain_error);
    REQUIRE_THROWS_AS(invgamma_sample(rng, InvGammaParams{1.0, 0.0}),
                      domain_error);
    MvnParams p;
    p.mean = Vector::Zero(2);
    p.cov = (Matrix(2, 2) << 1.0, 2.0, 2.0, 1.0).finished();
    REQUIRE_THROWS_AS(mvn_sample(rng, p), not_spd_error);
}
