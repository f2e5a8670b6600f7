#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "midas/midas.hpp"

namespace testing_support {

using midas::Matrix;
using midas::Vector;

inline Matrix random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(gen);
    return m;
}

inline Vector random_vector(std::mt19937_64& gen, Eigen::Index n)
{
    return random_matrix(gen, n, 1).col(0);
}

inline Matrix random_spd(std::mt19937_64& gen, Eigen::Index n, double ridge = 0.1)
{
    const Matrix a = random_matrix(gen, n, n);
    Matrix s = a * a.transpose() / static_cast<double>(n);
    s.diagonal().array() += ridge;
    return s;
}

struct InstanceSpec {
    Eigen::Index J = 1;
    Eigen::Index T = 20;
    Eigen::Index K = 9;
    Eigen::Index P = 3;
    midas::BasisKind kind = midas::BasisKind::Almon;
};

// Random regression data whose response loosely follows the model.
inline midas::MidasDataset random_dataset(std::mt19937_64& gen, const InstanceSpec& s)
{
    std::vector<midas::PredictorInput> inputs;
    Vector y = Vector::Constant(s.T, 0.5) + random_vector(gen, s.T);
    for (Eigen::Index j = 0; j < s.J; ++j) {
        Matrix x = random_matrix(gen, s.T, s.K);
        y += (j % 2 ? -1.0 : 1.5) * x.rowwise().mean();
        inputs.push_back({std::move(x), midas::make_basis(s.kind, s.K, s.P)});
    }
    return midas::MidasDataset(std::move(y), std::move(inputs));
}

// A random variational state with PD covariances.
inline midas::VariationalState random_state(std::mt19937_64& gen, const midas::MidasDataset& data)
{
    midas::VariationalState s;
    const auto d = static_cast<Eigen::Index>(data.J()) + 1;
    s.xi.mu = random_vector(gen, d);
    s.xi.cov = midas::SpdCovariance::from_covariance(random_spd(gen, d));
    for (const auto& p : data.predictors()) {
        midas::EtaBlock e;
        e.mu = 0.3 * random_vector(gen, p.free_dim());
        e.cov = midas::SpdCovariance::from_covariance(random_spd(gen, p.free_dim()));
        s.etas.push_back(e);
    }
    std::uniform_real_distribution<double> u(1.0, 5.0);
    s.sigma = {u(gen) + static_cast<double>(data.T()) / 2.0, u(gen) * static_cast<double>(data.T()) / 2.0};
    return s;
}

// E_q[(y_t - xi^T x~_t)^2] evaluated slot by slot from raw blocks:
// E[x~_a x~_b] is a product of means off the diagonal and mean^2 + var on it.
inline double oracle_expected_sq_residual(const midas::VariationalState& s, const midas::MidasDataset& data,
                                          Eigen::Index t)
{
    const auto d = static_cast<std::size_t>(data.J()) + 1;
    std::vector<double> mean(d, 1.0), var(d, 0.0);
    for (std::size_t j = 0; j < data.J(); ++j) {
        const auto& p = data.predictor(j);
        const Vector w_map_mean = p.basis.values * (p.rep.theta0 + p.rep.null * s.etas[j].mu);
        mean[j + 1] = p.x.row(t).dot(w_map_mean);
        const Vector a = (p.x.row(t) * p.basis.values * p.rep.null).transpose();
        var[j + 1] = a.dot(s.etas[j].Sigma() * a);
    }
    const Matrix exx = s.xi.Sigma() + s.xi.mu * s.xi.mu.transpose();
    double second = 0.0, first = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        first += s.xi.mu(static_cast<Eigen::Index>(a)) * mean[a];
        for (std::size_t b = 0; b < d; ++b) {
            const double m = a == b ? mean[a] * mean[a] + var[a] : mean[a] * mean[b];
            second += exx(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * m;
        }
    }
    const double y = data.y()(t);
    return y * y - 2.0 * y * first + second;
}

// ELBO assembled independently from the density definitions.
inline double oracle_elbo(const midas::VariationalState& s, const midas::MidasDataset& data, const midas::Priors& pr)
{
    const double pi2 = 2.0 * std::numbers::pi;
    const double a = s.sigma.a, b = s.sigma.b;
    const double e_inv = a / b;
    const double e_log = std::log(b) - boost::math::digamma(a);
    double total = 0.0;

    for (Eigen::Index t = 0; t < data.T(); ++t)
        total += -0.5 * std::log(pi2) - 0.5 * e_log - 0.5 * e_inv * oracle_expected_sq_residual(s, data, t);

    // log N(xi | 0, diag(v)) expectations
    const auto d = s.xi.mu.size();
    for (Eigen::Index i = 0; i < d; ++i) {
        const double v = i == 0 ? pr.var_alpha : pr.var_beta;
        total += -0.5 * std::log(pi2 * v) - (s.xi.mu(i) * s.xi.mu(i) + s.xi.Sigma()(i, i)) / (2.0 * v);
    }
    for (const auto& e : s.etas)
        for (Eigen::Index i = 0; i < e.mu.size(); ++i)
            total += -0.5 * std::log(pi2 * pr.var_eta) - (e.mu(i) * e.mu(i) + e.Sigma()(i, i)) / (2.0 * pr.var_eta);

    // log IG(sigma^2 | a0, b0) expectation
    total += pr.a0 * std::log(pr.b0) - std::lgamma(pr.a0) - (pr.a0 + 1.0) * e_log - pr.b0 * e_inv;

    auto gauss_entropy = [&](const Matrix& cov) {
        return 0.5 * static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi * std::numbers::e) +
               0.5 * std::log(cov.determinant());
    };
    total += gauss_entropy(s.xi.Sigma());
    for (const auto& e : s.etas) total += gauss_entropy(e.Sigma());
    total += a + std::log(b) + std::lgamma(a) - (1.0 + a) * boost::math::digamma(a);
    return total;
}

inline double rel_diff(double a, double b)
{
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace testing_support
