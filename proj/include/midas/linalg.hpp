#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "errors.hpp"

namespace midas {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void symmetrize(Matrix& m)
{
    m = 0.5 * (m + m.transpose()).eval();
}

// Covariance stored together with its lower Cholesky factor. Built from a
// precision matrix, which is how every Gaussian block in this library arises.
class SpdCovariance {
public:
    SpdCovariance() = default;

    static SpdCovariance from_precision(Matrix precision, const std::string& what = "precision")
    {
        symmetrize(precision);
        Eigen::LLT<Matrix> llt(precision);
        if (llt.info() != Eigen::Success)
            throw NumericalError(what + " matrix is not positive definite");
        SpdCovariance out;
        out.cov_ = llt.solve(Matrix::Identity(precision.rows(), precision.cols()));
        symmetrize(out.cov_);
        if (!out.factorize())
            throw NumericalError(what + " inverse is not numerically positive definite");
        return out;
    }

    // Accepts semidefinite input (e.g. a hand-set zero covariance); the factor
    // is only present when the matrix is positive definite.
    static SpdCovariance from_covariance(Matrix cov)
    {
        symmetrize(cov);
        SpdCovariance out;
        out.cov_ = std::move(cov);
        out.factorize();
        return out;
    }

    const Matrix& matrix() const { return cov_; }
    const Matrix& lower() const
    {
        if (!pd_) throw NumericalError("covariance matrix is not positive definite");
        return lower_;
    }
    Eigen::Index dim() const { return cov_.rows(); }
    bool positive_definite() const { return pd_; }

    double log_det() const
    {
        if (!pd_) return -std::numeric_limits<double>::infinity();
        return 2.0 * lower_.diagonal().array().log().sum();
    }

private:
    bool factorize()
    {
        pd_ = false;
        if (cov_.size() == 0) {
            lower_.resize(0, 0);
            pd_ = true;
            return true;
        }
        Eigen::LLT<Matrix> llt(cov_);
        if (llt.info() != Eigen::Success) return false;
        lower_ = llt.matrixL();
        pd_ = (lower_.diagonal().array() > 0.0).all();
        return pd_;
    }

    Matrix cov_;
    Matrix lower_;
    bool pd_ = false;
};

// log|A| for a symmetric positive semidefinite matrix; -inf when singular.
inline double log_det_psd(const Matrix& a)
{
    if (a.size() == 0) return 0.0;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

} // namespace midas
