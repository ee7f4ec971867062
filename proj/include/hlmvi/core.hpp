#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace hlmvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for all errors thrown by this library.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument or parameter outside its domain.
class domain_error : public error {
public:
    explicit domain_error(const std::string& msg) : error(msg) {}
};

/// A matrix that must be symmetric positive definite is not.
/// `leading_minor` is the 1-based order of the first non-positive leading
/// principal minor, when known (0 otherwise).
class not_spd_error : public error {
public:
    not_spd_error(const std::string& what_matrix, int leading_minor)
        : error(what_matrix + ": not symmetric positive definite" +
                (leading_minor > 0
                     ? " (leading minor of order " + std::to_string(leading_minor) +
                           " is not positive)"
                     : "")),
          leading_minor_(leading_minor) {}
    int leading_minor() const { return leading_minor_; }

private:
    int leading_minor_;
};

/// I/O and serialization failures (missing columns, version mismatch, ...).
class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error(msg) {}
};

namespace detail {

inline int first_bad_leading_minor(const Matrix& a) {
    for (int k = 1; k <= a.rows(); ++k) {
        Eigen::LLT<Matrix> llt(a.topLeftCorner(k, k));
        if (llt.info() != Eigen::Success) return k;
    }
    return 0;
}

}  // namespace detail

/// Cholesky factor (lower) of a symmetric positive definite matrix.
/// Throws not_spd_error naming the first failing leading minor.
inline Matrix cholesky(const Matrix& a, const std::string& name = "matrix") {
    if (a.rows() != a.cols()) throw domain_error(name + ": not square");
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success)
        throw not_spd_error(name, detail::first_bad_leading_minor(a));
    return llt.matrixL();
}

/// Cholesky with a single jitter retry: on failure adds 1e-10 * trace/d to the
/// diagonal once, and throws if the factorization fails again.
inline Matrix cholesky_jittered(const Matrix& a, const std::string& name = "matrix") {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const double jitter = 1e-10 * a.trace() / static_cast<double>(a.rows());
    Matrix aj = a + jitter * Matrix::Identity(a.rows(), a.cols());
    Eigen::LLT<Matrix> llt2(aj);
    if (llt2.info() != Eigen::Success)
        throw not_spd_error(name, detail::first_bad_leading_minor(a));
    return llt2.matrixL();
}

/// log|A| for SPD A via its Cholesky factor.
inline double logdet_spd(const Matrix& a, const std::string& name = "matrix") {
    Matrix l = cholesky(a, name);
    return 2.0 * l.diagonal().array().log().sum();
}

/// Inverse of an SPD matrix via Cholesky.
inline Matrix inverse_spd(const Matrix& a, const std::string& name = "matrix") {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success)
        throw not_spd_error(name, detail::first_bad_leading_minor(a));
    return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace hlmvi
