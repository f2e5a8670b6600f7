#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "basis.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "special.hpp"

namespace midas {

struct Predictor {
    Matrix x;  // T x K lag block, column k is lag k
    BasisMatrix basis;
    Reparam rep;
    ReducedRegressors reduced;
    Matrix r_gram;  // sum_t r_t r_t^T

    Eigen::Index lags() const { return basis.lags(); }
    Eigen::Index free_dim() const { return rep.free_dim(); }
};

struct PredictorInput {
    Matrix x;
    BasisMatrix basis;
};

/// Low-frequency response plus J high-frequency lag blocks, with the reduced
/// regressors precomputed.
class MidasDataset {
public:
    MidasDataset() = default;

    MidasDataset(Vector y, std::vector<PredictorInput> inputs) : y_(std::move(y))
    {
        const Eigen::Index t = y_.size();
        if (t < 1) throw DimensionError("MidasDataset: empty response");
        if (!y_.allFinite()) throw DataError("MidasDataset: response has nonfinite values");
        predictors_.reserve(inputs.size());
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            auto& in = inputs[j];
            if (in.x.rows() != t)
                throw DimensionError("MidasDataset: predictor " + std::to_string(j + 1) + " has " +
                                     std::to_string(in.x.rows()) + " rows, response has " +
                                     std::to_string(t));
            if (!in.x.allFinite())
                throw DataError("MidasDataset: predictor " + std::to_string(j + 1) +
                                " has nonfinite values");
            Predictor p;
            p.rep = reparameterize(in.basis);
            p.reduced = reduced_regressors(in.x, in.basis, p.rep);
            p.r_gram = p.reduced.r.transpose() * p.reduced.r;
            p.x = std::move(in.x);
            p.basis = std::move(in.basis);
            spot_check(p, j);
            predictors_.push_back(std::move(p));
        }
    }

    const Vector& y() const { return y_; }
    const std::vector<Predictor>& predictors() const { return predictors_; }
    const Predictor& predictor(std::size_t j) const { return predictors_.at(j); }
    Eigen::Index T() const { return y_.size(); }
    std::size_t J() const { return predictors_.size(); }

private:
    static void spot_check(const Predictor& p, std::size_t j)
    {
        const Eigen::Index rows = p.x.rows();
        for (Eigen::Index t : {Eigen::Index{0}, rows / 2, rows - 1}) {
            const double direct = p.x.row(t).dot(p.basis.values * p.rep.theta0);
            const double stored = p.reduced.c(t);
            if (std::abs(direct - stored) > 1e-10 * std::max(1.0, std::abs(direct)))
                throw NumericalError("MidasDataset: reduced regressors inconsistent for predictor " +
                                     std::to_string(j + 1));
        }
    }

    Vector y_;
    std::vector<Predictor> predictors_;
};

struct Priors {
    double var_alpha = 100.0;
    double var_beta = 10.0;
    double var_eta = 1.0;
    double a0 = 0.01;
    double b0 = 0.01;

    void validate() const
    {
        if (!(var_alpha > 0 && var_beta > 0 && var_eta > 0 && a0 > 0 && b0 > 0))
            throw ConfigError("priors: all hyperparameters must be strictly positive");
    }

    // Lambda_xi = diag(1/var_alpha, 1/var_beta, ..., 1/var_beta).
    Vector xi_precision_diag(std::size_t j_count) const
    {
        Vector d = Vector::Constant(static_cast<Eigen::Index>(j_count) + 1, 1.0 / var_beta);
        d(0) = 1.0 / var_alpha;
        return d;
    }
};

// q(xi) = N(mu, Sigma), xi ordered (alpha, beta_1, ..., beta_J).
struct XiBlock {
    Vector mu;
    SpdCovariance cov;

    const Matrix& Sigma() const { return cov.matrix(); }
};

struct EtaBlock {
    Vector mu;
    SpdCovariance cov;

    const Matrix& Sigma() const { return cov.matrix(); }
};

// q(sigma^2) = Inverse-Gamma(a, b).
struct SigmaBlock {
    double a = 1.0;
    double b = 1.0;

    double inv_mean() const { return a / b; }
    double log_mean() const { return std::log(b) - digamma(a); }
    double mean() const { return a > 1.0 ? b / (a - 1.0) : std::numeric_limits<double>::infinity(); }
};

struct VariationalState {
    XiBlock xi;
    std::vector<EtaBlock> etas;
    SigmaBlock sigma;
    bool init_fallback = false;
};

struct AggregateMoments {
    double mean = 0.0;
    double var = 0.0;

    double second_moment() const { return mean * mean + var; }
};

/// Mean and variance of x~_t^{(j)} = c_t + r_t^T eta_j under q(eta_j).
inline AggregateMoments expected_aggregate(const MidasDataset& data, const std::vector<EtaBlock>& etas,
                                           std::size_t j, Eigen::Index t)
{
    const auto& red = data.predictor(j).reduced;
    const auto& eta = etas.at(j);
    const auto r = red.r.row(t).transpose();
    return {red.c(t) + r.dot(eta.mu), r.dot(eta.Sigma() * r)};
}

/// Design moments of x~_t = (1, x~^{(1)}, ..., x~^{(J)}).
///
/// Under the mean-field factorization distinct predictors are independent, so
///   E[x~_t x~_t^T] = g_t g_t^T + diag(0, v_t1, ..., v_tJ),  v_tj = r_t^T Sigma_eta_j r_t.
struct DesignMoments {
    Matrix g;    // T x (J+1), E[x~_t] as rows
    Matrix var;  // T x (J+1), column 0 is zero

    Matrix second_moment(Eigen::Index t) const
    {
        Matrix m = g.row(t).transpose() * g.row(t);
        m.diagonal() += var.row(t).transpose();
        return m;
    }

    // sum_t E[x~_t x~_t^T]
    Matrix second_moment_sum() const
    {
        Matrix m = g.transpose() * g;
        m.diagonal() += var.colwise().sum().transpose();
        return m;
    }

    std::vector<Matrix> second_moments() const
    {
        std::vector<Matrix> out;
        out.reserve(static_cast<std::size_t>(g.rows()));
        for (Eigen::Index t = 0; t < g.rows(); ++t) out.push_back(second_moment(t));
        return out;
    }
};

inline Vector aggregate_mean(const Predictor& p, const Vector& eta_mu)
{
    return p.reduced.c + p.reduced.r * eta_mu;
}

inline Vector aggregate_variance(const Predictor& p, const Matrix& eta_cov)
{
    return ((p.reduced.r * eta_cov).array() * p.reduced.r.array()).rowwise().sum().matrix();
}

inline DesignMoments expected_design_moments(const MidasDataset& data, const std::vector<EtaBlock>& etas)
{
    if (etas.size() != data.J())
        throw DimensionError("expected_design_moments: need one eta block per predictor");
    const Eigen::Index t = data.T();
    const auto cols = static_cast<Eigen::Index>(data.J()) + 1;
    DesignMoments out{Matrix(t, cols), Matrix::Zero(t, cols)};
    out.g.col(0).setOnes();
    for (std::size_t j = 0; j < data.J(); ++j) {
        const auto col = static_cast<Eigen::Index>(j) + 1;
        const auto& p = data.predictor(j);
        out.g.col(col) = aggregate_mean(p, etas[j].mu);
        out.var.col(col) = aggregate_variance(p, etas[j].Sigma());
    }
    return out;
}

} // namespace midas
