#pragma once

// Coordinate ascent variational inference for the Bayesian MIDAS regression
//   y_t = alpha + sum_j beta_j (c_t^{(j)} + r_t^{(j)T} eta_j) + eps_t
// under q(xi) prod_j q(eta_j) q(sigma^2). Every block update is the exact
// maximizer of the ELBO given the other factors, so the ELBO never decreases.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "model.hpp"
#include "special.hpp"

namespace midas {

enum class InitKind { OlsUniform, Zero, Custom };

struct CaviOptions {
    double tol = 1e-8;
    int max_iters = 500;
    InitKind init = InitKind::OlsUniform;
    std::optional<VariationalState> custom_init;  // used when init == Custom

    void validate() const
    {
        if (!(tol > 0.0)) throw ConfigError("cavi: tol must be positive");
        if (max_iters < 1) throw ConfigError("cavi: max_iters must be at least 1");
        if (init == InitKind::Custom && !custom_init)
            throw ConfigError("cavi: custom initialization requested without a state");
    }
};

struct CaviFit {
    XiBlock xi;
    std::vector<EtaBlock> etas;
    SigmaBlock sigma;
    std::vector<double> elbo_trace;
    int iters = 0;
    bool converged = false;
    bool init_fallback = false;
    double wall_time = 0.0;  // seconds

    VariationalState state() const { return {xi, etas, sigma, init_fallback}; }
    double elbo() const { return elbo_trace.empty() ? std::numeric_limits<double>::quiet_NaN() : elbo_trace.back(); }
};

namespace detail {

inline Matrix design_means(const MidasDataset& data, const std::vector<EtaBlock>& etas)
{
    Matrix g(data.T(), static_cast<Eigen::Index>(data.J()) + 1);
    g.col(0).setOnes();
    for (std::size_t j = 0; j < data.J(); ++j)
        g.col(static_cast<Eigen::Index>(j) + 1) = aggregate_mean(data.predictor(j), etas.at(j).mu);
    return g;
}

// Uniform-weight aggregates (1, mean_k x_{t,k}^{(1)}, ...).
inline Matrix uniform_design(const MidasDataset& data)
{
    Matrix x(data.T(), static_cast<Eigen::Index>(data.J()) + 1);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < data.J(); ++j)
        x.col(static_cast<Eigen::Index>(j) + 1) = data.predictor(j).x.rowwise().mean();
    return x;
}

inline std::vector<EtaBlock> prior_etas(const MidasDataset& data, const Priors& priors)
{
    std::vector<EtaBlock> etas;
    etas.reserve(data.J());
    for (const auto& p : data.predictors()) {
        const auto d = p.free_dim();
        etas.push_back({Vector::Zero(d),
                        SpdCovariance::from_covariance(priors.var_eta * Matrix::Identity(d, d))});
    }
    return etas;
}

} // namespace detail

/// E_q[e_t^2] for every t, written as a sum of nonnegative terms:
///   (y_t - g_t^T mu)^2 + g_t^T Sigma g_t + sum_j v_tj (mu_j^2 + Sigma_jj),
/// which equals y_t^2 - 2 y_t g_t^T mu + tr(E[x~ x~^T] (mu mu^T + Sigma)).
inline Vector expected_sq_residuals(const VariationalState& state, const MidasDataset& data)
{
    const DesignMoments dm = expected_design_moments(data, state.etas);
    const Vector& mu = state.xi.mu;
    const Matrix& sigma = state.xi.Sigma();
    const Vector resid = data.y() - dm.g * mu;
    const Vector quad = ((dm.g * sigma).array() * dm.g.array()).rowwise().sum().matrix();
    const Vector second = mu.array().square().matrix() + sigma.diagonal();
    return resid.array().square().matrix() + quad + dm.var * second;
}

/// Default starting point: mu_xi by OLS on uniform-weight aggregates, eta at
/// the prior, a~ = a0 + T/2 and b~ = b0 + RSS/2. Falls back to a ridge solve
/// with the prior precision when the uniform design is rank deficient.
inline VariationalState init_state(const MidasDataset& data, const Priors& priors)
{
    priors.validate();
    const std::size_t j_count = data.J();
    const Matrix x = detail::uniform_design(data);
    const Vector lambda = priors.xi_precision_diag(j_count);

    VariationalState s;
    Vector coef;
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (data.T() > x.cols() && qr.rank() == x.cols()) {
        coef = qr.solve(data.y());
    } else {
        Matrix gram = x.transpose() * x;
        gram.diagonal() += lambda;
        coef = gram.llt().solve(x.transpose() * data.y());
        s.init_fallback = true;
    }
    const double rss = (data.y() - x * coef).squaredNorm();

    s.xi.mu = coef;
    s.xi.cov = SpdCovariance::from_covariance(lambda.cwiseInverse().asDiagonal());
    s.etas = detail::prior_etas(data, priors);
    s.sigma = {priors.a0 + 0.5 * static_cast<double>(data.T()), priors.b0 + 0.5 * rss};
    return s;
}

// Zero-mean start used for sensitivity runs.
inline VariationalState zero_state(const MidasDataset& data, const Priors& priors)
{
    priors.validate();
    const Vector lambda = priors.xi_precision_diag(data.J());
    VariationalState s;
    s.xi.mu = Vector::Zero(lambda.size());
    s.xi.cov = SpdCovariance::from_covariance(lambda.cwiseInverse().asDiagonal());
    s.etas = detail::prior_etas(data, priors);
    s.sigma = {priors.a0 + 0.5 * static_cast<double>(data.T()), priors.b0 + 0.5 * data.y().squaredNorm()};
    return s;
}

/// q*(eta_j): precision E[s^-2] E[beta_j^2] sum_t r_t r_t^T + I / var_eta and linear term
///   E[s^-2] (mu_bj sum_t r_t ebar_t - sum_t r_t h_t^T Sigma_xi e_{j+1}).
/// h_t is E[x~_t] with slot j replaced by c_t^{(j)}, the part of x~_t^{(j)}
/// that does not depend on eta_j; ebar_t = y_t - h_t^T mu_xi is the partial residual.
inline EtaBlock update_eta(const VariationalState& state, const MidasDataset& data, const Priors& priors,
                           std::size_t j)
{
    if (j >= data.J()) throw std::out_of_range("update_eta: predictor index out of range");
    const auto& p = data.predictor(j);
    const auto col = static_cast<Eigen::Index>(j) + 1;
    Matrix h = detail::design_means(data, state.etas);
    h.col(col) = p.reduced.c;

    const double inv_s2 = state.sigma.inv_mean();
    const double mu_beta = state.xi.mu(col);
    const double beta_sq = mu_beta * mu_beta + state.xi.Sigma()(col, col);

    Matrix precision = (inv_s2 * beta_sq) * p.r_gram;
    precision.diagonal().array() += 1.0 / priors.var_eta;

    const Vector partial = data.y() - h * state.xi.mu;
    const Vector correction = h * state.xi.Sigma().col(col);
    const Vector linear = inv_s2 * (p.reduced.r.transpose() * (mu_beta * partial - correction));

    EtaBlock out;
    out.cov = SpdCovariance::from_precision(precision, "eta_" + std::to_string(j + 1) + " precision");
    out.mu = out.cov.matrix() * linear;
    return out;
}

/// q*(xi): Sigma = (E[s^-2] sum_t E[x~_t x~_t^T] + Lambda)^-1, mu = Sigma E[s^-2] sum_t y_t E[x~_t].
inline XiBlock update_xi(const VariationalState& state, const MidasDataset& data, const Priors& priors)
{
    const DesignMoments dm = expected_design_moments(data, state.etas);
    const double inv_s2 = state.sigma.inv_mean();
    Matrix precision = inv_s2 * dm.second_moment_sum();
    precision.diagonal() += priors.xi_precision_diag(data.J());
    XiBlock out;
    out.cov = SpdCovariance::from_precision(precision, "xi precision");
    out.mu = out.cov.matrix() * (inv_s2 * (dm.g.transpose() * data.y()));
    return out;
}

/// q*(sigma^2) = IG(a0 + T/2, b0 + sum_t E[e_t^2] / 2).
inline SigmaBlock update_sigma2(const VariationalState& state, const MidasDataset& data, const Priors& priors)
{
    const Vector e2 = expected_sq_residuals(state, data);
    if (!e2.allFinite()) throw NumericalError("update_sigma2: nonfinite expected squared residuals");
    return {priors.a0 + 0.5 * static_cast<double>(data.T()), priors.b0 + 0.5 * e2.sum()};
}

struct ElboTerms {
    double loglik = 0.0;
    double log_prior_xi = 0.0;
    double log_prior_eta = 0.0;
    double log_prior_sigma = 0.0;
    double entropy_xi = 0.0;
    double entropy_eta = 0.0;
    double entropy_sigma = 0.0;

    double total() const
    {
        return loglik + log_prior_xi + log_prior_eta + log_prior_sigma + entropy_xi + entropy_eta +
               entropy_sigma;
    }
};

inline double gaussian_entropy(Eigen::Index dim, double log_det)
{
    constexpr double log_two_pi = 1.8378770664093454836;
    return 0.5 * static_cast<double>(dim) * (1.0 + log_two_pi) + 0.5 * log_det;
}

inline double inverse_gamma_entropy(double a, double b)
{
    return a + std::log(b) + std::lgamma(a) - (1.0 + a) * digamma(a);
}

inline ElboTerms elbo_terms(const VariationalState& state, const MidasDataset& data, const Priors& priors)
{
    constexpr double log_two_pi = 1.8378770664093454836;
    const double t = static_cast<double>(data.T());
    const double a = state.sigma.a;
    const double b = state.sigma.b;
    const double inv_s2 = a / b;
    const double log_s2 = std::log(b) - digamma(a);

    ElboTerms out;
    out.loglik = -0.5 * t * log_two_pi - 0.5 * t * log_s2 - 0.5 * inv_s2 * expected_sq_residuals(state, data).sum();

    const Vector lambda = priors.xi_precision_diag(data.J());
    const Vector& mu = state.xi.mu;
    const Matrix& sigma = state.xi.Sigma();
    out.log_prior_xi = -0.5 * static_cast<double>(lambda.size()) * log_two_pi + 0.5 * lambda.array().log().sum() -
                       0.5 * (lambda.array() * (mu.array().square() + sigma.diagonal().array())).sum();

    for (const auto& eta : state.etas) {
        const auto d = static_cast<double>(eta.mu.size());
        out.log_prior_eta += -0.5 * d * std::log(2.0 * std::numbers::pi * priors.var_eta) -
                             (eta.mu.squaredNorm() + eta.Sigma().trace()) / (2.0 * priors.var_eta);
        out.entropy_eta += gaussian_entropy(eta.mu.size(), eta.cov.log_det());
    }

    out.log_prior_sigma = priors.a0 * std::log(priors.b0) - std::lgamma(priors.a0) - (priors.a0 + 1.0) * log_s2 -
                          priors.b0 * inv_s2;
    out.entropy_xi = gaussian_entropy(mu.size(), state.xi.cov.log_det());
    out.entropy_sigma = inverse_gamma_entropy(a, b);
    return out;
}

inline double compute_elbo(const VariationalState& state, const MidasDataset& data, const Priors& priors)
{
    const double value = elbo_terms(state, data, priors).total();
    if (!std::isfinite(value)) throw NumericalError("compute_elbo: nonfinite ELBO (degenerate covariance?)");
    return value;
}

/// Runs sweeps of (eta_1..eta_J, xi, sigma^2, ELBO) until the relative ELBO
/// change drops below tol or max_iters sweeps have run.
inline CaviFit fit_cavi(const MidasDataset& data, const Priors& priors, const CaviOptions& options = {})
{
    options.validate();
    priors.validate();
    const auto start = std::chrono::steady_clock::now();

    VariationalState state;
    switch (options.init) {
    case InitKind::OlsUniform: state = init_state(data, priors); break;
    case InitKind::Zero: state = zero_state(data, priors); break;
    case InitKind::Custom: state = *options.custom_init; break;
    }
    if (state.etas.size() != data.J()) throw DimensionError("fit_cavi: initial state has wrong block count");

    CaviFit fit;
    fit.init_fallback = state.init_fallback;
    for (int sweep = 1; sweep <= options.max_iters; ++sweep) {
        for (std::size_t j = 0; j < data.J(); ++j) state.etas[j] = update_eta(state, data, priors, j);
        state.xi = update_xi(state, data, priors);
        state.sigma = update_sigma2(state, data, priors);
        const double elbo = compute_elbo(state, data, priors);
        fit.elbo_trace.push_back(elbo);
        fit.iters = sweep;
        const auto n = fit.elbo_trace.size();
        if (n >= 2 && std::abs(elbo - fit.elbo_trace[n - 2]) < options.tol * std::abs(elbo)) {
            fit.converged = true;
            break;
        }
    }

    fit.xi = std::move(state.xi);
    fit.etas = std::move(state.etas);
    fit.sigma = state.sigma;
    fit.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return fit;
}

// Selects a scalar parameter. Indices are zero-based (beta(0) is beta_1).
struct Param {
    enum class Kind { Alpha, Beta, Eta, Sigma2 };
    Kind kind = Kind::Alpha;
    std::size_t j = 0;
    std::size_t i = 0;

    static Param alpha() { return {Kind::Alpha, 0, 0}; }
    static Param beta(std::size_t j) { return {Kind::Beta, j, 0}; }
    static Param eta(std::size_t j, std::size_t i) { return {Kind::Eta, j, i}; }
    static Param sigma2() { return {Kind::Sigma2, 0, 0}; }

    std::string name() const
    {
        switch (kind) {
        case Kind::Alpha: return "alpha";
        case Kind::Beta: return "beta" + std::to_string(j + 1);
        case Kind::Eta: return "eta" + std::to_string(j + 1) + "_" + std::to_string(i + 1);
        case Kind::Sigma2: return "sigma2";
        }
        return {};
    }
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const { return lo <= x && x <= hi; }
    double width() const { return hi - lo; }
};

struct GaussianMarginal {
    double mean = 0.0;
    double sd = 0.0;
};

inline GaussianMarginal marginal(const CaviFit& fit, const Param& param)
{
    switch (param.kind) {
    case Param::Kind::Alpha:
        return {fit.xi.mu(0), std::sqrt(fit.xi.Sigma()(0, 0))};
    case Param::Kind::Beta: {
        if (param.j + 1 >= static_cast<std::size_t>(fit.xi.mu.size()))
            throw std::out_of_range("unknown parameter " + param.name());
        const auto k = static_cast<Eigen::Index>(param.j) + 1;
        return {fit.xi.mu(k), std::sqrt(fit.xi.Sigma()(k, k))};
    }
    case Param::Kind::Eta: {
        if (param.j >= fit.etas.size() || param.i >= static_cast<std::size_t>(fit.etas[param.j].mu.size()))
            throw std::out_of_range("unknown parameter " + param.name());
        const auto k = static_cast<Eigen::Index>(param.i);
        const auto& eta = fit.etas[param.j];
        return {eta.mu(k), std::sqrt(eta.Sigma()(k, k))};
    }
    case Param::Kind::Sigma2:
        break;
    }
    throw std::out_of_range("marginal: sigma2 is not Gaussian");
}

/// Equal-tailed credible interval. Gaussian blocks use mu +/- z * kappa * sd;
/// sigma^2 uses Inverse-Gamma quantiles and ignores kappa.
inline Interval credible_interval(const CaviFit& fit, const Param& param, double level, double kappa = 1.0)
{
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("credible_interval: level must be in (0,1)");
    if (!(kappa >= 1.0)) throw std::invalid_argument("credible_interval: kappa must be >= 1");
    if (param.kind == Param::Kind::Sigma2) {
        const double tail = 0.5 * (1.0 - level);
        return {inverse_gamma_quantile(fit.sigma.a, fit.sigma.b, tail),
                inverse_gamma_quantile(fit.sigma.a, fit.sigma.b, 1.0 - tail)};
    }
    const auto m = marginal(fit, param);
    const double half = normal_quantile(0.5 * (1.0 + level)) * kappa * m.sd;
    return {m.mean - half, m.mean + half};
}

struct WeightBand {
    Vector mean;
    Vector lo;
    Vector hi;
};

/// Posterior-mean lag weights of predictor j with pointwise Gaussian bands.
inline WeightBand cavi_weight_band(const CaviFit& fit, const MidasDataset& data, std::size_t j, double level,
                                   double kappa = 1.0)
{
    const auto& p = data.predictor(j);
    const auto& eta = fit.etas.at(j);
    const Matrix map = p.basis.values * p.rep.null;  // K x (P-1)
    WeightBand out;
    out.mean = weights_from_eta(p.basis, p.rep, eta.mu);
    const Vector sd = ((map * eta.Sigma()).array() * map.array()).rowwise().sum().max(0.0).sqrt().matrix();
    const double z = normal_quantile(0.5 * (1.0 + level)) * kappa;
    out.lo = out.mean - z * sd;
    out.hi = out.mean + z * sd;
    return out;
}

} // namespace midas
