#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <hlmvi/csv.hpp>
#include <hlmvi/data.hpp>
#include <hlmvi/simulate.hpp>
#include <hlmvi/store.hpp>

using namespace hlmvi;
using Catch::Approx;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

SimulationSpec mixture_spec() {
    SimulationSpec spec;
    spec.model = "chlrm";
    spec.k = 3;
    spec.m = 15;
    spec.n_j = 20;
    spec.p = 3;
    spec.betas = {(Vector(3) << -5, 8, 3).finished(),
                  (Vector(3) << 10, -1, -2).finished(),
                  (Vector(3) << 35, -8, -2).finished()};
    spec.sigma_sqs = {16, 9, 4};
    spec.omega = (Vector(3) << 0.4, 0.3, 0.3).finished();
    spec.seed = 42;
    return spec;
}

}  // namespace

TEST_CASE("regression data validation catches malformed inputs") {
    RegressionData d;
    d.X = Matrix::Ones(3, 1);
    d.y = (Vector(3) << 1, 2, 3).finished();
    REQUIRE_NOTHROW(d.validate());
    d.y[0] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(d.validate(), domain_error);
    d.y[0] = 1.0;
    d.X = Matrix::Ones(3, 3);  // rank deficient and n < p + 1
    REQUIRE_THROWS_AS(d.validate(), domain_error);
}

TEST_CASE("ols recovers the intercept-only mean and residual variance") {
    RegressionData d;
    d.X = Matrix::Ones(3, 1);
    d.y = (Vector(3) << 1, 2, 3).finished();
    const OlsFit fit = ols(d);
    REQUIRE(fit.beta[0] == Approx(2.0));
    REQUIRE(fit.sigma_sq == Approx(1.0));  // SSE 2 over n - p = 2
}

TEST_CASE("grouped dataset stacks back to one regression problem") {
    const auto [data, truth] = simulate(mixture_spec());
    REQUIRE(data.m() == 15);
    REQUIRE(data.total_n() == 300);
    const RegressionData flat = data.stacked();
    REQUIRE(flat.n() == 300);
    REQUIRE(flat.p() == 3);
    REQUIRE(flat.X.col(0).isOnes());
}

TEST_CASE("mixture simulation realizes every component and stores the truth") {
    const auto [data, truth] = simulate(mixture_spec());
    std::vector<int> counts(3, 0);
    for (int g : truth.gamma) counts[g]++;
    REQUIRE(counts[0] > 0);
    REQUIRE(counts[1] > 0);
    REQUIRE(counts[2] > 0);
    REQUIRE(truth.betas.size() == 3);
    // Deterministic in the seed.
    const auto [data2, truth2] = simulate(mixture_spec());
    REQUIRE(truth2.gamma == truth.gamma);
    REQUIRE((data2.stacked().y - data.stacked().y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate mixture weights put every group in one component") {
    SimulationSpec spec = mixture_spec();
    spec.omega = (Vector(3) << 1.0, 0.0, 0.0).finished();
    const auto [data, truth] = simulate(spec);
    for (int g : truth.gamma) REQUIRE(g == 0);
}

TEST_CASE("single-group simulation supports OLS recovery within 3 SE") {
    SimulationSpec spec;
    spec.model = "lrm";
    spec.m = 1;
    spec.n_j = 1000;
    spec.p = 3;
    spec.betas = {(Vector(3) << 25, 10, -30).finished()};
    spec.sigma_sqs = {100.0 * 100.0};
    spec.seed = 9;
    const auto [data, truth] = simulate(spec);
    const RegressionData flat = data.stacked();
    const OlsFit fit = ols(flat);
    const Matrix cov = fit.sigma_sq * inverse_spd(fit.xtx);
    for (int j = 0; j < 3; ++j) {
        const double se = std::sqrt(cov(j, j));
        REQUIRE(std::abs(fit.beta[j] - spec.betas[0][j]) < 3.0 * se);
    }
}

TEST_CASE("simulation spec validation rejects inconsistent inputs") {
    SimulationSpec spec = mixture_spec();
    spec.omega = (Vector(3) << 0.5, 0.3, 0.1).finished();  // sums to 0.9
    REQUIRE_THROWS_AS(spec.validate(), domain_error);
    spec = mixture_spec();
    spec.betas.pop_back();
    REQUIRE_THROWS_AS(spec.validate(), domain_error);
}

TEST_CASE("csv loader groups rows by first appearance and prepends intercept") {
    const std::string path = tmp_path("hlmvi_groups.csv");
    write_file(path,
               "farm,yield,nitrogen\n"
               "b,1.5,0.1\n"
               "a,2.5,0.2\n"
               "b,3.5,0.3\n"
               "a,4.5,0.4\n");
    DatasetSchema sch;
    sch.response_col = "yield";
    sch.predictor_cols = {"nitrogen"};
    sch.group_col = "farm";
    const auto data = load_csv(path, sch);
    REQUIRE(data.m() == 2);
    REQUIRE(data.labels == std::vector<std::string>{"b", "a"});
    REQUIRE(data.groups[0].X(0, 0) == 1.0);
    REQUIRE(data.groups[0].y[1] == Approx(3.5));
    REQUIRE(data.groups[1].X(1, 1) == Approx(0.4));
}

TEST_CASE("csv loader reports the offending cell for bad values") {
    const std::string path = tmp_path("hlmvi_badcell.csv");
    write_file(path, "y,x\n1.0,2.0\noops,3.0\n");
    DatasetSchema sch;
    sch.response_col = "y";
    sch.predictor_cols = {"x"};
    try {
        load_csv(path, sch);
        FAIL("expected io_error");
    } catch (const io_error& e) {
        const std::string what = e.what();
        REQUIRE(what.find("y") != std::string::npos);
        REQUIRE(what.find("3") != std::string::npos);  // file line number
    }
}

TEST_CASE("csv loader rejects missing columns and quoted fields parse") {
    const std::string path = tmp_path("hlmvi_quoted.csv");
    write_file(path, "\"y\",\"x\"\n\"1.0\",\"2.0\"\n4,5\n");
    DatasetSchema sch;
    sch.response_col = "y";
    sch.predictor_cols = {"x"};
    const auto data = load_csv(path, sch);
    REQUIRE(data.groups[0].y[0] == Approx(1.0));
    sch.predictor_cols = {"missing"};
    REQUIRE_THROWS_AS(load_csv(path, sch), io_error);
}

TEST_CASE("schema validation rejects response listed among predictors") {
    DatasetSchema sch;
    sch.response_col = "y";
    sch.predictor_cols = {"y"};
    REQUIRE_THROWS_AS(sch.validate(), domain_error);
}

TEST_CASE("save then load reproduces a simulated dataset exactly") {
    const auto [data, truth] = simulate(mixture_spec());
    DatasetSchema sch;
    sch.response_col = "y";
    sch.predictor_cols = {"x1", "x2"};
    sch.group_col = "group";
    const std::string path = tmp_path("hlmvi_roundtrip.csv");
    save_csv(path, data, sch);
    const auto data2 = load_csv(path, sch);
    REQUIRE(data2.m() == data.m());
    for (int j = 0; j < data.m(); ++j) {
        REQUIRE((data2.groups[j].y - data.groups[j].y).cwiseAbs().maxCoeff() ==
                0.0);
        REQUIRE((data2.groups[j].X - data.groups[j].X).cwiseAbs().maxCoeff() ==
                0.0);
    }
}

TEST_CASE("draw store round-trips mixture chains bit-exactly") {
    const auto [data, truth] = simulate(mixture_spec());
    ChlrmGibbsConfig cfg;
    cfg.n_samples = 600;
    cfg.burn_in = 100;
    cfg.seed = 3;
    const ChlrmDraws draws =
        chlrm_gibbs(data, chlrm_default_prior(data, 3), 3, cfg);
    const std::string path = tmp_path("hlmvi_draws.bin");
    save_draws(path, draws);
    const ChlrmDraws back = load_chlrm_draws(path);
    REQUIRE(back.seed == draws.seed);
    REQUIRE(back.burn_in == draws.burn_in);
    REQUIRE((back.gamma - draws.gamma).cwiseAbs().maxCoeff() == 0);
    REQUIRE((back.betas - draws.betas).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((back.Sigma - draws.Sigma).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((back.xi_sq - draws.xi_sq).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("variational state store round-trips bit-exactly") {
    const auto [data, truth] = simulate(mixture_spec());
    ChlrmCaviConfig cfg;
    cfg.seed = 5;
    const ChlrmVarState s = chlrm_cavi(data, chlrm_default_prior(data, 3), 3, cfg);
    const std::string path = tmp_path("hlmvi_state.bin");
    save_state(path, s);
    const ChlrmVarState back = load_chlrm_state(path);
    REQUIRE((back.rho - s.rho).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.elbo_trace == s.elbo_trace);
    REQUIRE((back.S_Sigma - s.S_Sigma).cwiseAbs().maxCoeff() == 0.0);
    for (int c = 0; c < 3; ++c)
        REQUIRE((back.Sigma_beta_k[c] - s.Sigma_beta_k[c]).cwiseAbs().maxCoeff() ==
                0.0);
}

TEST_CASE("store rejects version bumps, model mismatches, and truncation") {
    RegressionData rd;
    rd.X = Matrix::Ones(5, 1);
    rd.y = (Vector(5) << 1, 2, 3, 4, 5).finished();
    LrmGibbsConfig cfg;
    cfg.n_samples = 100;
    const PosteriorDraws draws = lrm_gibbs(rd, unit_info_prior(rd), cfg);
    const std::string path = tmp_path("hlmvi_lrm_draws.bin");
    save_draws(path, draws);
    REQUIRE_NOTHROW(load_lrm_draws(path));

    // Bump the version field in the JSON header line.
    {
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        std::string bytes = buf.str();
        const std::string key = "\"format_version\":1";
        bytes.replace(bytes.find(key), key.size(), "\"format_version\":9");
        std::ofstream out(tmp_path("hlmvi_bumped.bin"), std::ios::binary);
        out << bytes;
    }
    REQUIRE_THROWS_AS(load_lrm_draws(tmp_path("hlmvi_bumped.bin")), io_error);

    // Wrong model tag.
    REQUIRE_THROWS_AS(load_chlrm_draws(path), io_error);

    // Truncated payload.
    {
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        std::string bytes = buf.str();
        bytes.resize(bytes.size() - 64);
        std::ofstream out(tmp_path("hlmvi_truncated.bin"), std::ios::binary);
        out << bytes;
    }
    REQUIRE_THROWS_AS(load_lrm_draws(tmp_path("hlmvi_truncated.bin")), io_error);
}

TEST_CASE("a long mixture chain round-trips with byte-identical floats") {
    const auto [data, truth] = simulate(mixture_spec());
    ChlrmGibbsConfig cfg;
    cfg.n_samples = 50000;
    cfg.burn_in = 0;
    cfg.seed = 11;
    const ChlrmDraws draws =
        chlrm_gibbs(data, chlrm_default_prior(data, 3), 3, cfg);
    REQUIRE(draws.b() == 50000);
    const std::string path = tmp_path("hlmvi_big.bin");
    save_draws(path, draws);
    const ChlrmDraws back = load_chlrm_draws(path);
    REQUIRE(std::memcmp(back.betas.data(), draws.betas.data(),
                        sizeof(double) * draws.betas.size()) == 0);
    REQUIRE(std::memcmp(back.Sigma.data(), draws.Sigma.data(),
                        sizeof(double) * draws.Sigma.size()) == 0);
    std::remove(path.c_str());
}
