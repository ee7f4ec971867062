#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chlrm.hpp"
#include "core.hpp"
#include "lrm.hpp"

namespace hlmvi {

/// Persistence format: one line of JSON metadata (format version, model tag,
/// seed, dimensions, array directory), then the arrays as raw column-major
/// little-endian payloads in directory order. The JSON line keeps the files
/// human-inspectable; the raw payload round-trips floats bit-exactly.

inline constexpr int kStoreFormatVersion = 1;

namespace detail {

using json = nlohmann::json;

inline void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::ifstream& in, void* data, std::size_t n,
                       const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw io_error("load: truncated file '" + path + "'");
}

struct ArrayRef {
    std::string name;
    const double* f64 = nullptr;
    const int* i32 = nullptr;
    long rows = 0, cols = 0;
};

inline json directory_entry(const ArrayRef& a) {
    return json{{"name", a.name},
                {"rows", a.rows},
                {"cols", a.cols},
                {"type", a.f64 ? "f64" : "i32"}};
}

inline void save_file(const std::string& path, json header,
                      const std::vector<ArrayRef>& arrays) {
    json dir = json::array();
    for (const auto& a : arrays) dir.push_back(directory_entry(a));
    header["format_version"] = kStoreFormatVersion;
    header["arrays"] = dir;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("save: cannot open '" + path + "'");
    const std::string line = header.dump();
    out << line << "\n";
    for (const auto& a : arrays) {
        const std::size_t count = static_cast<std::size_t>(a.rows) * a.cols;
        if (a.f64)
            write_bytes(out, a.f64, count * sizeof(double));
        else
            write_bytes(out, a.i32, count * sizeof(int));
    }
    if (!out) throw io_error("save: write failed for '" + path + "'");
}

inline json open_file(const std::string& path, std::ifstream& in,
                      const std::string& expected_model) {
    in.open(path, std::ios::binary);
    if (!in) throw io_error("load: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw io_error("load: missing header in '" + path + "'");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw io_error("load: bad header in '" + path + "': " + e.what());
    }
    const int version = header.value("format_version", -1);
    if (version != kStoreFormatVersion)
        throw io_error("load: '" + path + "' has format version " +
                       std::to_string(version) + ", expected " +
                       std::to_string(kStoreFormatVersion));
    if (header.value("model", "") != expected_model)
        throw io_error("load: '" + path + "' holds model '" +
                       header.value("model", "") + "', expected '" +
                       expected_model + "'");
    return header;
}

inline Matrix read_matrix(std::ifstream& in, const json& entry,
                          const std::string& path) {
    Matrix m(entry.at("rows").get<long>(), entry.at("cols").get<long>());
    read_bytes(in, m.data(), m.size() * sizeof(double), path);
    return m;
}

inline Eigen::MatrixXi read_int_matrix(std::ifstream& in, const json& entry,
                                       const std::string& path) {
    Eigen::MatrixXi m(entry.at("rows").get<long>(), entry.at("cols").get<long>());
    read_bytes(in, m.data(), m.size() * sizeof(int), path);
    return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Draws
// ---------------------------------------------------------------------------

inline void save_draws(const std::string& path, const PosteriorDraws& d) {
    detail::json header{{"model", "lrm_draws"},
                        {"seed", d.seed},
                        {"burn_in", d.burn_in},
                        {"thin", d.thin},
                        {"names", d.names}};
    detail::save_file(path, header,
                      {{"draws", d.draws.data(), nullptr, d.draws.rows(),
                        d.draws.cols()}});
}

inline PosteriorDraws load_lrm_draws(const std::string& path) {
    std::ifstream in;
    const auto header = detail::open_file(path, in, "lrm_draws");
    PosteriorDraws d;
    d.seed = header.at("seed").get<std::uint64_t>();
    d.burn_in = header.at("burn_in").get<int>();
    d.thin = header.at("thin").get<int>();
    d.names = header.at("names").get<std::vector<std::string>>();
    d.draws = detail::read_matrix(in, header.at("arrays").at(0), path);
    return d;
}

inline void save_draws(const std::string& path, const ChlrmDraws& d) {
    detail::json header{{"model", "chlrm_draws"}, {"seed", d.seed},
                        {"burn_in", d.burn_in},  {"thin", d.thin},
                        {"k", d.k},              {"p", d.p},
                        {"m", d.m}};
    detail::save_file(
        path, header,
        {{"gamma", nullptr, d.gamma.data(), d.gamma.rows(), d.gamma.cols()},
         {"omega", d.omega.data(), nullptr, d.omega.rows(), d.omega.cols()},
         {"betas", d.betas.data(), nullptr, d.betas.rows(), d.betas.cols()},
         {"sigma_sqs", d.sigma_sqs.data(), nullptr, d.sigma_sqs.rows(),
          d.sigma_sqs.cols()},
         {"beta", d.beta.data(), nullptr, d.beta.rows(), d.beta.cols()},
         {"Sigma", d.Sigma.data(), nullptr, d.Sigma.rows(), d.Sigma.cols()},
         {"xi_sq", d.xi_sq.data(), nullptr, d.xi_sq.size(), 1}});
}

inline ChlrmDraws load_chlrm_draws(const std::string& path) {
    std::ifstream in;
    const auto header = detail::open_file(path, in, "chlrm_draws");
    ChlrmDraws d;
    d.seed = header.at("seed").get<std::uint64_t>();
    d.burn_in = header.at("burn_in").get<int>();
    d.thin = header.at("thin").get<int>();
    d.k = header.at("k").get<int>();
    d.p = header.at("p").get<int>();
    d.m = header.at("m").get<int>();
    const auto& dir = header.at("arrays");
    d.gamma = detail::read_int_matrix(in, dir.at(0), path);
    d.omega = detail::read_matrix(in, dir.at(1), path);
    d.betas = detail::read_matrix(in, dir.at(2), path);
    d.sigma_sqs = detail::read_matrix(in, dir.at(3), path);
    d.beta = detail::read_matrix(in, dir.at(4), path);
    d.Sigma = detail::read_matrix(in, dir.at(5), path);
    d.xi_sq = detail::read_matrix(in, dir.at(6), path);
    return d;
}

// ---------------------------------------------------------------------------
// Variational states
// ---------------------------------------------------------------------------

inline void save_state(const std::string& path, const LrmVarState& s) {
    detail::json header{{"model", "lrm_state"},
                        {"a", s.a},
                        {"b", s.b},
                        {"pinned_sigma_sq", s.pinned_sigma_sq},
                        {"elbo_trace", s.elbo_trace}};
    detail::save_file(
        path, header,
        {{"mu_beta", s.mu_beta.data(), nullptr, s.mu_beta.size(), 1},
         {"Sigma_beta", s.Sigma_beta.data(), nullptr, s.Sigma_beta.rows(),
          s.Sigma_beta.cols()}});
}

inline LrmVarState load_lrm_state(const std::string& path) {
    std::ifstream in;
    const auto header = detail::open_file(path, in, "lrm_state");
    LrmVarState s;
    s.a = header.at("a").get<double>();
    s.b = header.at("b").get<double>();
    s.pinned_sigma_sq = header.at("pinned_sigma_sq").get<double>();
    s.elbo_trace = header.at("elbo_trace").get<std::vector<double>>();
    const auto& dir = header.at("arrays");
    s.mu_beta = detail::read_matrix(in, dir.at(0), path);
    s.Sigma_beta = detail::read_matrix(in, dir.at(1), path);
    return s;
}

inline void save_state(const std::string& path, const ChlrmVarState& s) {
    const int k = s.k();
    detail::json header{{"model", "chlrm_state"},
                        {"k", k},
                        {"nu_Sigma", s.nu_Sigma},
                        {"a_xi", s.a_xi},
                        {"b_xi", s.b_xi},
                        {"elbo_trace", s.elbo_trace}};
    std::vector<detail::ArrayRef> arrays{
        {"rho", s.rho.data(), nullptr, s.rho.rows(), s.rho.cols()},
        {"alpha_omega", s.alpha_omega.data(), nullptr, s.alpha_omega.size(), 1},
        {"a_sig", s.a_sig.data(), nullptr, s.a_sig.size(), 1},
        {"b_sig", s.b_sig.data(), nullptr, s.b_sig.size(), 1},
        {"mu_beta", s.mu_beta.data(), nullptr, s.mu_beta.size(), 1},
        {"Sigma_beta", s.Sigma_beta.data(), nullptr, s.Sigma_beta.rows(),
         s.Sigma_beta.cols()},
        {"S_Sigma", s.S_Sigma.data(), nullptr, s.S_Sigma.rows(),
         s.S_Sigma.cols()}};
    for (int c = 0; c < k; ++c) {
        arrays.push_back({"mu_beta_" + std::to_string(c),
                          s.mu_beta_k[c].data(), nullptr,
                          s.mu_beta_k[c].size(), 1});
        arrays.push_back({"Sigma_beta_" + std::to_string(c),
                          s.Sigma_beta_k[c].data(), nullptr,
                          s.Sigma_beta_k[c].rows(), s.Sigma_beta_k[c].cols()});
    }
    detail::save_file(path, header, arrays);
}

inline ChlrmVarState load_chlrm_state(const std::string& path) {
    std::ifstream in;
    const auto header = detail::open_file(path, in, "chlrm_state");
    ChlrmVarState s;
    const int k = header.at("k").get<int>();
    s.nu_Sigma = header.at("nu_Sigma").get<double>();
    s.a_xi = header.at("a_xi").get<double>();
    s.b_xi = header.at("b_xi").get<double>();
    s.elbo_trace = header.at("elbo_trace").get<std::vector<double>>();
    const auto& dir = header.at("arrays");
    s.rho = detail::read_matrix(in, dir.at(0), path);
    s.alpha_omega = detail::read_matrix(in, dir.at(1), path);
    s.a_sig = detail::read_matrix(in, dir.at(2), path);
    s.b_sig = detail::read_matrix(in, dir.at(3), path);
    s.mu_beta = detail::read_matrix(in, dir.at(4), path);
    s.Sigma_beta = detail::read_matrix(in, dir.at(5), path);
    s.S_Sigma = detail::read_matrix(in, dir.at(6), path);
    for (int c = 0; c < k; ++c) {
        s.mu_beta_k.push_back(detail::read_matrix(in, dir.at(7 + 2 * c), path));
        s.Sigma_beta_k.push_back(
            detail::read_matrix(in, dir.at(8 + 2 * c), path));
    }
    return s;
}

}  // namespace hlmvi
