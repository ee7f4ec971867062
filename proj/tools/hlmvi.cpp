// Command-line front end: simulate datasets, fit models by MCMC / VI / SVI,
// sweep the number of clusters, and compare fit reports.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <hlmvi/chlrm.hpp>
#include <hlmvi/csv.hpp>
#include <hlmvi/data.hpp>
#include <hlmvi/diagnostics.hpp>
#include <hlmvi/lrm.hpp>
#include <hlmvi/simulate.hpp>
#include <hlmvi/store.hpp>

namespace fs = std::filesystem;
using namespace hlmvi;

namespace {

/// Command-line misuse distinct from engine failures (exit 2 vs exit 1).
struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Small file helpers
// ---------------------------------------------------------------------------

/// Flat key-value file: one `key = value` (or `key value`) pair per line,
/// '#' comments, blank lines ignored.
std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto sep = line.find('=');
        if (sep == std::string::npos) sep = line.find_first_of(" \t");
        if (sep == std::string::npos)
            throw io_error("'" + path + "': malformed line '" + line + "'");
        kv[trim(line.substr(0, sep))] = trim(line.substr(sep + 1));
    }
    return kv;
}

std::vector<double> parse_number_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw usage_error(what + ": cannot parse number '" + tok + "'");
        }
    }
    if (out.empty()) throw usage_error(what + ": empty list");
    return out;
}

std::vector<std::string> parse_name_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

DatasetSchema read_schema(const std::string& path) {
    const auto kv = read_kv(path);
    DatasetSchema schema;
    if (!kv.count("response")) throw usage_error("schema '" + path + "': missing 'response'");
    schema.response_col = kv.at("response");
    if (kv.count("predictors")) schema.predictor_cols = parse_name_list(kv.at("predictors"));
    if (kv.count("group")) schema.group_col = kv.at("group");
    if (kv.count("intercept")) {
        const std::string& v = kv.at("intercept");
        if (v == "true" || v == "1") schema.intercept = true;
        else if (v == "false" || v == "0") schema.intercept = false;
        else throw usage_error("schema '" + path + "': intercept must be true/false");
    }
    schema.validate();
    return schema;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw io_error("write failed for '" + path + "'");
}

void write_trace(const std::string& path, const std::vector<double>& values) {
    std::ostringstream os;
    os.precision(10);
    for (std::size_t i = 0; i < values.size(); ++i)
        os << (i + 1) << " " << values[i] << "\n";
    write_text(path, os.str());
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

SimulationSpec read_sim_spec(const std::string& path) {
    const auto kv = read_kv(path);
    SimulationSpec spec;
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw usage_error("spec '" + path + "': missing '" + key + "'");
        return it->second;
    };
    spec.model = need("model");
    spec.m = std::stoi(need("m"));
    spec.n_j = std::stoi(need("n_j"));
    spec.p = std::stoi(need("p"));
    if (kv.count("seed")) spec.seed = std::stoull(kv.at("seed"));
    const int k = spec.model == "lrm" ? 1 : std::stoi(need("k"));
    spec.k = k;
    for (int c = 1; c <= k; ++c) {
        const std::string suffix = "_" + std::to_string(c);
        const std::string bkey = kv.count("beta" + suffix) ? "beta" + suffix : "beta";
        const std::string skey =
            kv.count("sigma_sq" + suffix) ? "sigma_sq" + suffix : "sigma_sq";
        const auto b = parse_number_list(need(bkey), bkey);
        spec.betas.push_back(Eigen::Map<const Vector>(b.data(), b.size()));
        spec.sigma_sqs.push_back(std::stod(need(skey)));
    }
    if (spec.model == "chlrm") {
        const auto w = parse_number_list(need("omega"), "omega");
        spec.omega = Eigen::Map<const Vector>(w.data(), w.size());
    }
    return spec;
}

DatasetSchema simulated_schema(int p, bool grouped) {
    DatasetSchema schema;
    schema.response_col = "y";
    for (int j = 1; j < p; ++j)
        schema.predictor_cols.push_back("x" + std::to_string(j));
    if (grouped) schema.group_col = "group";
    schema.intercept = true;
    return schema;
}

std::string schema_text(const DatasetSchema& schema) {
    std::ostringstream os;
    os << "response = " << schema.response_col << "\n";
    if (!schema.predictor_cols.empty()) {
        os << "predictors = ";
        for (std::size_t j = 0; j < schema.predictor_cols.size(); ++j)
            os << (j ? "," : "") << schema.predictor_cols[j];
        os << "\n";
    }
    if (!schema.group_col.empty()) os << "group = " << schema.group_col << "\n";
    os << "intercept = " << (schema.intercept ? "true" : "false") << "\n";
    return os.str();
}

int cmd_simulate(const std::string& spec_path, const std::string& out_dir) {
    const SimulationSpec spec = read_sim_spec(spec_path);
    const auto [data, truth] = simulate(spec);
    fs::create_directories(out_dir);
    const DatasetSchema schema = simulated_schema(spec.p, spec.model == "chlrm");
    save_csv(out_dir + "/data.csv", data, schema);
    write_text(out_dir + "/schema.txt", schema_text(schema));

    std::ostringstream os;
    os.precision(17);
    os << "model " << spec.model << "\nseed " << spec.seed << "\n";
    if (spec.model == "chlrm") {
        os << "gamma";
        for (int g : truth.gamma) os << " " << (g + 1);
        os << "\nomega";
        for (int c = 0; c < truth.omega.size(); ++c) os << " " << truth.omega[c];
        os << "\n";
    }
    for (std::size_t c = 0; c < truth.betas.size(); ++c) {
        os << "beta_" << (c + 1);
        for (int j = 0; j < truth.betas[c].size(); ++j) os << " " << truth.betas[c][j];
        os << "\nsigma_sq_" << (c + 1) << " " << truth.sigma_sqs[c] << "\n";
    }
    write_text(out_dir + "/truth.txt", os.str());
    std::cout << "wrote " << data.total_n() << " rows in " << data.m()
              << " group(s) to " << out_dir << "/data.csv\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitOptions {
    std::string model, method, data, schema, out;
    int k = 0;
    int samples = 10000, burn_in = -1, thin = 1;
    double tol = 1e-9;
    int max_iter = 0;  // 0: per-method default
    int minibatch = 0;
    double chi = 0.7, tau = 1.0;
    std::uint64_t seed = 0;
    int restarts = 5;
    int report_draws = 1000;
};

double elapsed_sec(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

/// Log joint density of one LRM draw under the fitting prior; used for the
/// MCMC trace series.
double lrm_log_joint(const RegressionData& data, const LrmPrior& prior,
                     const Vector& beta, double sigma_sq) {
    double lp = mvn_logpdf(beta, {prior.beta0, prior.Sigma0}) +
                invgamma_logpdf(sigma_sq,
                                {prior.nu0 / 2.0, prior.nu0 * prior.sigma0_sq / 2.0});
    const Vector resid = data.y - data.X * beta;
    const int n = static_cast<int>(data.y.size());
    lp += -0.5 * n * std::log(2.0 * M_PI * sigma_sq) -
          0.5 * resid.squaredNorm() / sigma_sq;
    return lp;
}

std::string fit_settings(const FitOptions& opt) {
    std::ostringstream os;
    if (opt.method == "mcmc") {
        os << "samples:" << opt.samples << " burn-in:" << opt.burn_in
           << " thin:" << opt.thin;
    } else if (opt.method == "vi") {
        if (opt.max_iter > 0) os << "max-iter:" << opt.max_iter << " ";
        os << "tol:" << opt.tol << " restarts:" << opt.restarts;
    } else {
        os << "iters:" << (opt.max_iter > 0 ? opt.max_iter : 100)
           << " minibatch:" << opt.minibatch
           << " chi:" << opt.chi << " tau:" << opt.tau;
    }
    return os.str();
}

void write_report(const FitOptions& opt, const FitReport& rep) {
    std::ostringstream os;
    os << rep.to_text() << "model " << opt.model << "\nmethod " << opt.method
       << "\ndataset " << opt.data << "\nsettings " << fit_settings(opt) << "\n";
    write_text(opt.out + "/report.txt", os.str());
    std::cout << "method " << opt.method << "  waic " << rep.waic << "  dic "
              << rep.dic << "  mse " << rep.mse << "  r2 " << rep.r2
              << "  time " << rep.runtime_sec << "s\n";
}

int fit_lrm(const FitOptions& opt, const GroupedDataset& gd) {
    RegressionData data = gd.stacked();
    data.validate();
    const LrmPrior prior = unit_info_prior(data);
    FitReport rep;
    PosteriorDraws report_draws;
    const auto t0 = std::chrono::steady_clock::now();
    if (opt.method == "mcmc") {
        LrmGibbsConfig cfg;
        cfg.n_samples = opt.samples;
        cfg.burn_in = opt.burn_in;
        cfg.thin = opt.thin;
        cfg.seed = opt.seed;
        PosteriorDraws draws = lrm_gibbs(data, prior, cfg);
        rep.runtime_sec = elapsed_sec(t0);
        std::vector<double> trace(draws.b());
        for (int b = 0; b < draws.b(); ++b) {
            const int p = static_cast<int>(draws.draws.cols()) - 1;
            trace[b] = lrm_log_joint(data, prior,
                                     draws.draws.row(b).head(p).transpose(),
                                     draws.draws(b, p));
        }
        write_trace(opt.out + "/trace.txt", trace);
        save_draws(opt.out + "/draws.bin", draws);
        report_draws = subsample(draws, opt.report_draws);
        rep.mse = fit_metrics(data.y, lrm_yhat(data, report_draws)).first;
        rep.r2 = fit_metrics(data.y, lrm_yhat(data, report_draws)).second;
    } else {  // vi
        LrmCaviConfig cfg;
        cfg.rel_tol = opt.tol;
        if (opt.max_iter > 0) cfg.max_iter = opt.max_iter;
        LrmVarState state = lrm_cavi(data, prior, cfg);
        rep.runtime_sec = elapsed_sec(t0);
        write_trace(opt.out + "/trace.txt", state.elbo_trace);
        save_state(opt.out + "/state.bin", state);
        report_draws = lrm_sample_variational(state, opt.report_draws, opt.seed);
        const Vector yhat = data.X * state.mu_beta;
        std::tie(rep.mse, rep.r2) = fit_metrics(data.y, yhat);
    }
    const LogLikMatrix ll = lrm_loglik_matrix(data, report_draws);
    rep.waic = waic(ll);
    rep.dic = dic(ll, lrm_loglik_at_mean(data, report_draws));
    rep.ppp_summary = ppp(data, report_draws, 1000, opt.seed);
    write_report(opt, rep);
    return 0;
}

int fit_chlrm(const FitOptions& opt, const GroupedDataset& gd) {
    if (opt.k < 1) throw usage_error("fit: chlrm requires --k >= 1");
    const ChlrmPrior prior = chlrm_default_prior(gd, opt.k);
    FitReport rep;
    ChlrmDraws report_draws;
    const auto t0 = std::chrono::steady_clock::now();
    if (opt.method == "mcmc") {
        ChlrmGibbsConfig cfg;
        cfg.n_samples = opt.samples;
        cfg.burn_in = opt.burn_in;
        cfg.thin = opt.thin;
        cfg.seed = opt.seed;
        std::vector<double> trace;
        ChlrmDraws draws = chlrm_gibbs(gd, prior, opt.k, cfg, &trace);
        rep.runtime_sec = elapsed_sec(t0);
        write_trace(opt.out + "/trace.txt", trace);
        save_draws(opt.out + "/draws.bin", draws);
        report_draws = subsample(draws, opt.report_draws);
        std::tie(rep.mse, rep.r2) =
            fit_metrics(gd.stacked().y, chlrm_yhat(gd, report_draws));
        rep.cocluster = cocluster_matrix(report_draws.gamma);
    } else {
        ChlrmVarState state;
        if (opt.method == "vi") {
            ChlrmCaviConfig cfg;
            cfg.rel_tol = opt.tol;
            if (opt.max_iter > 0) cfg.max_iter = opt.max_iter;
            cfg.seed = opt.seed;
            cfg.restarts = opt.restarts;
            state = chlrm_cavi(gd, prior, opt.k, cfg);
        } else {
            SviConfig cfg;
            cfg.minibatch = opt.minibatch > 0 ? opt.minibatch : gd.m();
            cfg.chi = opt.chi;
            cfg.tau = opt.tau;
            cfg.iters = opt.max_iter > 0 ? opt.max_iter : 100;
            cfg.seed = opt.seed;
            if (!(cfg.chi > 0.5) || !(cfg.chi <= 1.0))
                throw usage_error("fit: --chi must lie in (0.5, 1]");
            if (cfg.minibatch < 1 || cfg.minibatch > gd.m())
                throw usage_error("fit: --minibatch must lie in 1.." +
                                  std::to_string(gd.m()));
            state = chlrm_svi(gd, prior, opt.k, cfg);
        }
        rep.runtime_sec = elapsed_sec(t0);
        write_trace(opt.out + "/trace.txt", state.elbo_trace);
        save_state(opt.out + "/state.bin", state);
        report_draws = chlrm_sample_variational(state, opt.report_draws, opt.seed);
        std::tie(rep.mse, rep.r2) =
            fit_metrics(gd.stacked().y, chlrm_yhat(gd, state));
        rep.cocluster = cocluster_matrix(state.rho);
    }
    const LogLikMatrix ll = chlrm_loglik_matrix(gd, report_draws);
    rep.waic = waic(ll);
    rep.dic = dic(ll, chlrm_loglik_at_mean(gd, report_draws));
    rep.ppp_summary = ppp(gd, report_draws, 1000, opt.seed);
    rep.k_posterior = k_posterior(report_draws.gamma, opt.k);
    write_report(opt, rep);
    return 0;
}

/// Fill in fit options from a flat key-value file. Values given on the
/// command line (count > 0 for the matching flag) always win.
void apply_fit_config(const CLI::App& fit, FitOptions& fo,
                      const std::string& path) {
    const auto kv = read_kv(path);
    auto to_int = [](const std::string& k, const std::string& v) {
        try {
            return std::stoi(v);
        } catch (...) {
            throw usage_error("config: cannot parse integer '" + v + "' for '" +
                              k + "'");
        }
    };
    auto to_double = [](const std::string& k, const std::string& v) {
        try {
            return std::stod(v);
        } catch (...) {
            throw usage_error("config: cannot parse number '" + v + "' for '" +
                              k + "'");
        }
    };
    for (const auto& [key, value] : kv) {
        if (fit.count("--" + key) > 0) continue;  // command line overrides
        if (key == "model") fo.model = value;
        else if (key == "method") fo.method = value;
        else if (key == "data") fo.data = value;
        else if (key == "schema") fo.schema = value;
        else if (key == "out") fo.out = value;
        else if (key == "k") fo.k = to_int(key, value);
        else if (key == "samples") fo.samples = to_int(key, value);
        else if (key == "burn-in") fo.burn_in = to_int(key, value);
        else if (key == "thin") fo.thin = to_int(key, value);
        else if (key == "max-iter") fo.max_iter = to_int(key, value);
        else if (key == "minibatch") fo.minibatch = to_int(key, value);
        else if (key == "restarts") fo.restarts = to_int(key, value);
        else if (key == "tol") fo.tol = to_double(key, value);
        else if (key == "chi") fo.chi = to_double(key, value);
        else if (key == "tau") fo.tau = to_double(key, value);
        else if (key == "seed")
            fo.seed = static_cast<std::uint64_t>(std::stoull(value));
        else
            throw usage_error("config: unknown key '" + key + "'");
    }
}

int cmd_fit(const FitOptions& opt) {
    if (opt.data.empty() || opt.schema.empty() || opt.out.empty())
        throw usage_error("fit: --data, --schema, and --out are required");
    if (opt.model != "lrm" && opt.model != "chlrm")
        throw usage_error("fit: --model must be lrm or chlrm");
    if (opt.method != "mcmc" && opt.method != "vi" && opt.method != "svi")
        throw usage_error("fit: --method must be mcmc, vi, or svi");
    if (opt.model == "lrm" && opt.method == "svi")
        throw usage_error("fit: svi is only available for the chlrm model");
    const DatasetSchema schema = read_schema(opt.schema);
    const GroupedDataset gd = load_csv(opt.data, schema);
    fs::create_directories(opt.out);
    return opt.model == "lrm" ? fit_lrm(opt, gd) : fit_chlrm(opt, gd);
}

// ---------------------------------------------------------------------------
// select-k
// ---------------------------------------------------------------------------

struct SelectKOptions {
    std::string data, schema, out;
    std::string k_range;
    std::uint64_t seed = 0;
    int restarts = 5;
    int max_iter = 0;
    double tol = 1e-9;
    bool with_mcmc = false;
    int samples = 10000, burn_in = -1, thin = 1;
};

std::pair<int, int> parse_k_range(const std::string& s) {
    const auto sep = s.find(':');
    try {
        if (sep == std::string::npos) {
            const int k = std::stoi(s);
            return {k, k};
        }
        return {std::stoi(s.substr(0, sep)), std::stoi(s.substr(sep + 1))};
    } catch (const std::exception&) {
        throw usage_error("select-k: cannot parse --k-range '" + s + "'");
    }
}

int cmd_select_k(const SelectKOptions& opt) {
    const auto [k_lo, k_hi] = parse_k_range(opt.k_range);
    if (k_lo < 1 || k_hi < k_lo)
        throw usage_error("select-k: need 1 <= lo <= hi in --k-range");
    const DatasetSchema schema = read_schema(opt.schema);
    const GroupedDataset gd = load_csv(opt.data, schema);
    fs::create_directories(opt.out);

    std::ostringstream table;
    table.precision(10);
    int best_k = k_lo;
    double best_elbo = -std::numeric_limits<double>::infinity();
    for (int k = k_lo; k <= k_hi; ++k) {
        ChlrmCaviConfig cfg;
        cfg.rel_tol = opt.tol;
        if (opt.max_iter > 0) cfg.max_iter = opt.max_iter;
        cfg.seed = opt.seed;
        cfg.restarts = opt.restarts;
        const ChlrmVarState state =
            chlrm_cavi(gd, chlrm_default_prior(gd, k), k, cfg);
        const double elbo = state.elbo_trace.back();
        table << k << " " << elbo << "\n";
        std::cout << "K=" << k << "  elbo " << elbo << "\n";
        if (elbo > best_elbo) {
            best_elbo = elbo;
            best_k = k;
        }
    }
    write_text(opt.out + "/elbo_by_k.txt", table.str());
    std::cout << "elbo maximum at K=" << best_k << "\n";

    if (opt.with_mcmc) {
        ChlrmGibbsConfig cfg;
        cfg.n_samples = opt.samples;
        cfg.burn_in = opt.burn_in;
        cfg.thin = opt.thin;
        cfg.seed = opt.seed;
        const ChlrmDraws draws =
            chlrm_gibbs(gd, chlrm_default_prior(gd, k_hi), k_hi, cfg);
        const Vector hist = k_posterior(subsample(draws, 1000).gamma, k_hi);
        std::ostringstream os;
        os.precision(10);
        int mode = 0;
        for (int c = 0; c < hist.size(); ++c) {
            os << (c + 1) << " " << hist[c] << "\n";
            if (hist[c] > hist[mode]) mode = c;
        }
        write_text(opt.out + "/k_posterior.txt", os.str());
        std::cout << "posterior mode of occupied clusters: " << (mode + 1) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

int cmd_compare(const std::vector<std::string>& report_paths,
                const std::string& out_path) {
    if (report_paths.size() < 2)
        throw usage_error("compare: need at least two report files");
    std::vector<std::map<std::string, std::string>> reports;
    for (const auto& path : report_paths) reports.push_back(read_kv(path));

    bool same_dataset = true;
    for (const auto& r : reports)
        if (r.count("dataset") && r.at("dataset") != reports[0]["dataset"])
            same_dataset = false;
    if (!same_dataset)
        std::cout << "WARNING: reports come from different datasets; "
                     "rows are not directly comparable\n";

    const std::vector<std::string> cols = {"method", "settings", "waic",
                                           "dic",    "mse",      "r2",
                                           "runtime_sec"};
    std::vector<std::size_t> width(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) width[c] = cols[c].size();
    auto cell = [](const std::map<std::string, std::string>& r,
                   const std::string& key) {
        auto it = r.find(key);
        return it == r.end() ? std::string("-") : it->second;
    };
    for (const auto& r : reports)
        for (std::size_t c = 0; c < cols.size(); ++c)
            width[c] = std::max(width[c], cell(r, cols[c]).size());

    std::ostringstream os;
    for (std::size_t c = 0; c < cols.size(); ++c)
        os << std::left << std::setw(static_cast<int>(width[c]) + 2) << cols[c];
    os << "\n";
    for (const auto& r : reports) {
        for (std::size_t c = 0; c < cols.size(); ++c)
            os << std::left << std::setw(static_cast<int>(width[c]) + 2)
               << cell(r, cols[c]);
        os << "\n";
    }
    std::cout << os.str();
    if (!out_path.empty()) {
        std::ostringstream machine;
        for (std::size_t i = 0; i < reports.size(); ++i)
            for (const auto& col : cols)
                machine << "row" << (i + 1) << "_" << col << " "
                        << cell(reports[i], col) << "\n";
        write_text(out_path, machine.str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seedable Bayesian inference for linear regression and "
                 "clustered hierarchical linear regression"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a dataset from a spec file");
    std::string sim_spec, sim_out;
    sim->add_option("--spec", sim_spec, "Simulation spec (key-value file)")->required();
    sim->add_option("--out", sim_out, "Output directory")->required();

    // fit
    auto* fit = app.add_subcommand("fit", "Fit one model with one method");
    FitOptions fo;
    std::string fit_config;
    fit->add_option("--config", fit_config,
                    "Flat key-value config; command line overrides");
    fit->add_option("--model", fo.model, "lrm or chlrm");
    fit->add_option("--method", fo.method, "mcmc, vi, or svi");
    fit->add_option("--data", fo.data, "CSV dataset");
    fit->add_option("--schema", fo.schema, "Schema file");
    fit->add_option("--k", fo.k, "Number of clusters (chlrm)");
    fit->add_option("--samples", fo.samples, "MCMC iterations");
    fit->add_option("--burn-in", fo.burn_in, "Burn-in (default 10%)");
    fit->add_option("--thin", fo.thin, "Thinning interval");
    fit->add_option("--tol", fo.tol, "VI relative convergence tolerance");
    fit->add_option("--max-iter", fo.max_iter, "VI/SVI iteration cap");
    fit->add_option("--minibatch", fo.minibatch, "SVI minibatch size (default m)");
    fit->add_option("--chi", fo.chi, "SVI forgetting rate, in (0.5, 1]");
    fit->add_option("--tau", fo.tau, "SVI delay");
    fit->add_option("--seed", fo.seed, "Root RNG seed");
    fit->add_option("--out", fo.out, "Output directory");
    fit->add_option("--restarts", fo.restarts, "VI restarts");

    // select-k
    auto* sel = app.add_subcommand("select-k", "ELBO-vs-K sweep (chlrm, VI)");
    SelectKOptions so;
    sel->add_option("--data", so.data, "CSV dataset")->required();
    sel->add_option("--schema", so.schema, "Schema file")->required();
    sel->add_option("--k-range", so.k_range, "lo:hi (or single K)")->required();
    sel->add_option("--seed", so.seed, "Root RNG seed");
    sel->add_option("--restarts", so.restarts, "VI restarts");
    sel->add_option("--max-iter", so.max_iter, "VI iteration cap");
    sel->add_option("--tol", so.tol, "VI relative convergence tolerance");
    sel->add_flag("--mcmc", so.with_mcmc,
                  "Also run MCMC at the top K and emit the occupied-cluster histogram");
    sel->add_option("--samples", so.samples, "MCMC iterations (with --mcmc)");
    sel->add_option("--burn-in", so.burn_in, "Burn-in (with --mcmc)");
    sel->add_option("--thin", so.thin, "Thinning (with --mcmc)");
    sel->add_option("--out", so.out, "Output directory")->required();

    // compare
    auto* cmp = app.add_subcommand("compare", "Consolidate fit reports into a table");
    std::vector<std::string> cmp_reports;
    std::string cmp_out;
    cmp->add_option("reports", cmp_reports, "Report files (>= 2)")->required();
    cmp->add_option("--out", cmp_out, "Machine-readable output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sim_spec, sim_out);
        if (fit->parsed()) {
            if (!fit_config.empty()) apply_fit_config(*fit, fo, fit_config);
            return cmd_fit(fo);
        }
        if (sel->parsed()) return cmd_select_k(so);
        return cmd_compare(cmp_reports, cmp_out);
    } catch (const usage_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
