#pragma once

#include <string>
#include <vector>

#include "core.hpp"

namespace hlmvi {

/// Single-group regression data: n responses and an n x p design matrix.
struct RegressionData {
    Vector y;
    Matrix X;

    int n() const { return static_cast<int>(y.size()); }
    int p() const { return static_cast<int>(X.cols()); }

    void validate() const {
        if (X.rows() != y.size()) throw domain_error("RegressionData: row mismatch");
        if (!y.allFinite() || !X.allFinite())
            throw domain_error("RegressionData: non-finite entries");
        if (n() < p() + 1)
            throw domain_error("RegressionData: need n >= p + 1 observations");
        Eigen::ColPivHouseholderQR<Matrix> qr(X);
        if (qr.rank() < p())
            throw domain_error("RegressionData: design matrix is rank deficient");
    }
};

/// Responses and design matrices partitioned into m groups. A single group
/// degenerates to plain regression data.
struct GroupedDataset {
    struct Group {
        Vector y;
        Matrix X;
        int n() const { return static_cast<int>(y.size()); }
    };

    std::vector<Group> groups;
    std::vector<std::string> labels;  // group identifiers, first-appearance order

    int m() const { return static_cast<int>(groups.size()); }
    int p() const { return groups.empty() ? 0 : static_cast<int>(groups[0].X.cols()); }
    int total_n() const {
        int n = 0;
        for (const auto& g : groups) n += g.n();
        return n;
    }

    void validate() const {
        if (groups.empty()) throw domain_error("GroupedDataset: no groups");
        const int pp = p();
        for (const auto& g : groups) {
            if (g.n() < 1) throw domain_error("GroupedDataset: empty group");
            if (g.X.cols() != pp)
                throw domain_error("GroupedDataset: groups disagree on p");
            if (g.X.rows() != g.y.size())
                throw domain_error("GroupedDataset: row mismatch in a group");
            if (!g.y.allFinite() || !g.X.allFinite())
                throw domain_error("GroupedDataset: non-finite entries");
        }
    }

    /// All groups stacked into one regression problem (validation deferred).
    RegressionData stacked() const {
        const int n = total_n();
        RegressionData out;
        out.y.resize(n);
        out.X.resize(n, p());
        int row = 0;
        for (const auto& g : groups) {
            out.y.segment(row, g.n()) = g.y;
            out.X.middleRows(row, g.n()) = g.X;
            row += g.n();
        }
        return out;
    }

    static GroupedDataset from_regression(const RegressionData& d,
                                          std::string label = "all") {
        GroupedDataset out;
        out.groups.push_back({d.y, d.X});
        out.labels.push_back(std::move(label));
        return out;
    }
};

/// Ordinary least squares estimates; the building block of the default priors.
struct OlsFit {
    Vector beta;
    double sigma_sq;  // residual sum of squares / (n - p)
    Matrix xtx;
};

inline OlsFit ols(const RegressionData& data) {
    data.validate();
    OlsFit fit;
    fit.xtx = data.X.transpose() * data.X;
    Eigen::LLT<Matrix> llt(fit.xtx);
    if (llt.info() != Eigen::Success)
        throw domain_error("ols: X'X is not positive definite");
    fit.beta = llt.solve(data.X.transpose() * data.y);
    const Vector resid = data.y - data.X * fit.beta;
    fit.sigma_sq = resid.squaredNorm() / static_cast<double>(data.n() - data.p());
    return fit;
}

}  // namespace hlmvi
