#pragma once

#include <string>
#include <vector>

#include "core.hpp"
#include "data.hpp"
#include "distributions.hpp"
#include "rng.hpp"

namespace hlmvi {

/// Synthetic-data scenario. For model "lrm" a single group of n_j
/// observations is produced from one (beta, sigma_sq); for model "chlrm"
/// each of m groups draws a cluster from omega and generates from that
/// cluster's regression line. Covariates are standard normal with a
/// leading intercept column.
struct SimulationSpec {
    std::string model = "chlrm";  // "lrm" or "chlrm"
    int k = 1;                    // clusters (chlrm)
    int m = 1;                    // groups
    int n_j = 0;                  // observations per group
    int p = 0;                    // columns incl. intercept
    std::vector<Vector> betas;    // K vectors of length p (one for lrm)
    std::vector<double> sigma_sqs;
    Vector omega;                 // simplex of length K (chlrm)
    std::uint64_t seed = 0;

    void validate() const {
        if (model != "lrm" && model != "chlrm")
            throw domain_error("SimulationSpec: unknown model '" + model + "'");
        if (m < 1 || n_j < 1 || p < 1)
            throw domain_error("SimulationSpec: m, n_j, p must be positive");
        const int kk = model == "lrm" ? 1 : k;
        if (kk < 1) throw domain_error("SimulationSpec: K must be positive");
        if (static_cast<int>(betas.size()) != kk ||
            static_cast<int>(sigma_sqs.size()) != kk)
            throw domain_error("SimulationSpec: need one beta and sigma_sq per cluster");
        for (const auto& b : betas)
            if (b.size() != p) throw domain_error("SimulationSpec: beta length != p");
        for (double s : sigma_sqs)
            if (!(s > 0.0)) throw domain_error("SimulationSpec: sigma_sq must be positive");
        if (model == "chlrm") {
            if (omega.size() != kk)
                throw domain_error("SimulationSpec: omega length != K");
            if ((omega.array() < 0.0).any() || std::abs(omega.sum() - 1.0) > 1e-8)
                throw domain_error("SimulationSpec: omega must lie on the simplex");
        }
    }
};

/// Ground truth stored next to a simulated dataset.
struct SimulationTruth {
    std::vector<int> gamma;  // realized cluster per group (0-based)
    std::vector<Vector> betas;
    std::vector<double> sigma_sqs;
    Vector omega;
};

inline std::pair<GroupedDataset, SimulationTruth> simulate(const SimulationSpec& spec) {
    spec.validate();
    SeededRng rng(spec.seed);
    SeededRng assign_rng = rng.stream(1);
    SeededRng covariate_rng = rng.stream(2);
    SeededRng noise_rng = rng.stream(3);

    GroupedDataset data;
    SimulationTruth truth;
    truth.betas = spec.betas;
    truth.sigma_sqs = spec.sigma_sqs;
    truth.omega = spec.model == "lrm" ? Vector::Ones(1) : spec.omega;

    for (int j = 0; j < spec.m; ++j) {
        int cluster = 0;
        if (spec.model == "chlrm") cluster = categorical_sample(assign_rng, spec.omega);
        truth.gamma.push_back(cluster);

        GroupedDataset::Group g;
        g.X.resize(spec.n_j, spec.p);
        g.y.resize(spec.n_j);
        const Vector& beta = spec.betas[cluster];
        const double sd = std::sqrt(spec.sigma_sqs[cluster]);
        for (int i = 0; i < spec.n_j; ++i) {
            g.X(i, 0) = 1.0;
            for (int c = 1; c < spec.p; ++c) g.X(i, c) = covariate_rng.normal();
            g.y[i] = g.X.row(i).dot(beta) + sd * noise_rng.normal();
        }
        data.groups.push_back(std::move(g));
        data.labels.push_back("g" + std::to_string(j + 1));
    }
    data.validate();
    return {std::move(data), std::move(truth)};
}

}  // namespace hlmvi
