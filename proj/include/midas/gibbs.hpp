#pragma once

// Block Gibbs sampler for the MIDAS regression. Conditioning on eta makes the
// model linear in xi; conditioning on xi makes it linear in each eta_j. Each
// conditional is a conjugate Gaussian or Inverse-Gamma.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavi.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace midas {

struct GibbsOptions {
    int n_draws = 5000;
    int burn_in = 1000;
    std::uint64_t seed = 1;
    int thin = 1;

    void validate() const
    {
        if (n_draws < 1) throw ConfigError("gibbs: n_draws must be at least 1");
        if (burn_in < 0) throw ConfigError("gibbs: burn_in must be nonnegative");
        if (thin < 1) throw ConfigError("gibbs: thin must be at least 1");
    }
};

struct GibbsChain {
    Matrix xi_draws;                // n x (J+1)
    std::vector<Matrix> eta_draws;  // per predictor, n x (P_j - 1)
    Vector sigma2_draws;            // n
    double wall_time = 0.0;         // seconds

    Eigen::Index size() const { return sigma2_draws.size(); }
};

struct GaussianConditional {
    Vector mean;
    SpdCovariance cov;
};

struct InverseGammaParams {
    double shape = 1.0;
    double rate = 1.0;
};

inline Vector draw_gaussian(const GaussianConditional& g, Rng& rng)
{
    Vector z(g.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return g.mean + g.cov.lower() * z;
}

namespace detail {

// Plug-in design (1, x~^{(1)}, ..., x~^{(J)}) at fixed eta values.
inline Matrix plugin_design(const MidasDataset& data, const std::vector<Vector>& etas)
{
    if (etas.size() != data.J()) throw DimensionError("gibbs: need one eta vector per predictor");
    Matrix x(data.T(), static_cast<Eigen::Index>(data.J()) + 1);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < data.J(); ++j)
        x.col(static_cast<Eigen::Index>(j) + 1) = aggregate_mean(data.predictor(j), etas[j]);
    return x;
}

inline GaussianConditional xi_conditional_given_design(const Matrix& design, double sigma2,
                                                      const MidasDataset& data, const Priors& priors)
{
    const double inv = 1.0 / sigma2;
    Matrix precision = inv * (design.transpose() * design);
    precision.diagonal() += priors.xi_precision_diag(data.J());
    GaussianConditional out;
    out.cov = SpdCovariance::from_precision(precision, "xi conditional precision");
    out.mean = out.cov.matrix() * (inv * (design.transpose() * data.y()));
    return out;
}

inline GaussianConditional eta_conditional_given_design(std::size_t j, const Vector& xi, const Matrix& design,
                                                       double sigma2, const MidasDataset& data,
                                                       const Priors& priors)
{
    const auto& p = data.predictor(j);
    const auto col = static_cast<Eigen::Index>(j) + 1;
    const double beta = xi(col);
    const double inv = 1.0 / sigma2;
    // y - alpha - sum_{j' != j} beta_j' x~^{(j')} - beta_j c^{(j)}
    Vector partial = data.y() - design * xi;
    partial += beta * (design.col(col) - p.reduced.c);

    Matrix precision = (inv * beta * beta) * p.r_gram;
    precision.diagonal().array() += 1.0 / priors.var_eta;
    GaussianConditional out;
    out.cov = SpdCovariance::from_precision(precision, "eta conditional precision");
    out.mean = out.cov.matrix() * ((inv * beta) * (p.reduced.r.transpose() * partial));
    return out;
}

inline InverseGammaParams sigma2_conditional_given_design(const Vector& xi, const Matrix& design,
                                                         const MidasDataset& data, const Priors& priors)
{
    const double sse = (data.y() - design * xi).squaredNorm();
    return {priors.a0 + 0.5 * static_cast<double>(data.T()), priors.b0 + 0.5 * sse};
}

} // namespace detail

/// p(xi | eta, sigma^2, y): Gaussian with V = (X^T X / s2 + Lambda)^-1, m = V X^T y / s2.
inline GaussianConditional xi_conditional(const std::vector<Vector>& etas, double sigma2, const MidasDataset& data,
                                          const Priors& priors)
{
    return detail::xi_conditional_given_design(detail::plugin_design(data, etas), sigma2, data, priors);
}

inline Vector draw_xi(const std::vector<Vector>& etas, double sigma2, const MidasDataset& data,
                      const Priors& priors, Rng& rng)
{
    return draw_gaussian(xi_conditional(etas, sigma2, data, priors), rng);
}

/// p(eta_j | xi, eta_-j, sigma^2, y): regression of the partial residual on beta_j r_t.
inline GaussianConditional eta_conditional(std::size_t j, const Vector& xi, const std::vector<Vector>& etas,
                                           double sigma2, const MidasDataset& data, const Priors& priors)
{
    if (j >= data.J()) throw std::out_of_range("eta_conditional: predictor index out of range");
    return detail::eta_conditional_given_design(j, xi, detail::plugin_design(data, etas), sigma2, data, priors);
}

inline Vector draw_eta(std::size_t j, const Vector& xi, const std::vector<Vector>& etas, double sigma2,
                       const MidasDataset& data, const Priors& priors, Rng& rng)
{
    return draw_gaussian(eta_conditional(j, xi, etas, sigma2, data, priors), rng);
}

/// p(sigma^2 | xi, eta, y) = IG(a0 + T/2, b0 + SSE/2).
inline InverseGammaParams sigma2_conditional(const Vector& xi, const std::vector<Vector>& etas,
                                             const MidasDataset& data, const Priors& priors)
{
    return detail::sigma2_conditional_given_design(xi, detail::plugin_design(data, etas), data, priors);
}

inline double draw_sigma2(const Vector& xi, const std::vector<Vector>& etas, const MidasDataset& data,
                          const Priors& priors, Rng& rng)
{
    const auto ig = sigma2_conditional(xi, etas, data, priors);
    return rng.inverse_gamma(ig.shape, ig.rate);
}

/// Scans (eta_1..eta_J, xi, sigma^2) from the same OLS starting point as CAVI,
/// discarding burn_in scans and keeping every thin-th scan afterwards.
inline GibbsChain run_gibbs(const MidasDataset& data, const Priors& priors, const GibbsOptions& options = {})
{
    options.validate();
    priors.validate();
    const auto start = std::chrono::steady_clock::now();

    const VariationalState init = init_state(data, priors);
    Vector xi = init.xi.mu;
    std::vector<Vector> etas;
    for (const auto& e : init.etas) etas.push_back(e.mu);
    double sigma2 = init.sigma.b / init.sigma.a;

    Rng rng(options.seed);
    Matrix design = detail::plugin_design(data, etas);

    const auto n = static_cast<Eigen::Index>(options.n_draws);
    GibbsChain chain;
    chain.xi_draws.resize(n, xi.size());
    for (const auto& e : etas) chain.eta_draws.emplace_back(n, e.size());
    chain.sigma2_draws.resize(n);

    const long total = static_cast<long>(options.burn_in) + static_cast<long>(options.n_draws) * options.thin;
    Eigen::Index kept = 0;
    for (long scan = 0; scan < total; ++scan) {
        for (std::size_t j = 0; j < data.J(); ++j) {
            const auto cond = detail::eta_conditional_given_design(j, xi, design, sigma2, data, priors);
            etas[j] = draw_gaussian(cond, rng);
            design.col(static_cast<Eigen::Index>(j) + 1) = aggregate_mean(data.predictor(j), etas[j]);
        }
        xi = draw_gaussian(detail::xi_conditional_given_design(design, sigma2, data, priors), rng);
        const auto ig = detail::sigma2_conditional_given_design(xi, design, data, priors);
        sigma2 = rng.inverse_gamma(ig.shape, ig.rate);

        const long post = scan - options.burn_in;
        if (post >= 0 && (post + 1) % options.thin == 0) {
            chain.xi_draws.row(kept) = xi.transpose();
            for (std::size_t j = 0; j < etas.size(); ++j) chain.eta_draws[j].row(kept) = etas[j].transpose();
            chain.sigma2_draws(kept) = sigma2;
            ++kept;
        }
    }
    chain.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return chain;
}

/// Effective sample size n / (1 + 2 sum_k rho_k), truncating the autocorrelation
/// sum with Geyer's initial positive sequence. A constant series returns n.
inline double ess(std::span<const double> draws)
{
    const std::size_t n = draws.size();
    if (n < 10) throw std::invalid_argument("ess: need at least 10 draws");
    const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(n);
    std::vector<double> centered(n);
    std::transform(draws.begin(), draws.end(), centered.begin(), [mean](double v) { return v - mean; });

    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t) s += centered[t] * centered[t + lag];
        return s / static_cast<double>(n);
    };

    const double gamma0 = autocov(0);
    if (!(gamma0 > 0.0)) return static_cast<double>(n);

    // tau = -1 + 2 sum_m (rho_2m + rho_2m+1) over the initial positive pairs.
    double tau = -1.0;
    for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
        const double pair = (autocov(2 * m) + autocov(2 * m + 1)) / gamma0;
        if (pair <= 0.0) break;
        tau += 2.0 * pair;
    }
    return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

inline double ess(const Vector& draws)
{
    return ess(std::span<const double>(draws.data(), static_cast<std::size_t>(draws.size())));
}

// Type-7 (linear interpolation) empirical quantile of a sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double p)
{
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline Interval quantile_interval(const Vector& draws, double level)
{
    std::vector<double> sorted(draws.data(), draws.data() + draws.size());
    std::sort(sorted.begin(), sorted.end());
    return {sorted_quantile(sorted, 0.5 * (1.0 - level)), sorted_quantile(sorted, 0.5 * (1.0 + level))};
}

struct ParamSummary {
    Param param;
    double mean = 0.0;
    double sd = 0.0;
    Interval interval;
    double ess = 0.0;
};

struct ChainSummary {
    std::vector<ParamSummary> params;  // alpha, betas, etas (by predictor), sigma2
    double min_ess = 0.0;

    const ParamSummary& find(const Param& p) const
    {
        for (const auto& s : params)
            if (s.param.kind == p.kind && s.param.j == p.j && s.param.i == p.i) return s;
        throw std::out_of_range("chain_summary: unknown parameter " + p.name());
    }
};

inline Vector chain_column(const GibbsChain& chain, const Param& p)
{
    switch (p.kind) {
    case Param::Kind::Alpha: return chain.xi_draws.col(0);
    case Param::Kind::Beta: return chain.xi_draws.col(static_cast<Eigen::Index>(p.j) + 1);
    case Param::Kind::Eta: return chain.eta_draws.at(p.j).col(static_cast<Eigen::Index>(p.i));
    case Param::Kind::Sigma2: return chain.sigma2_draws;
    }
    return {};
}

inline ChainSummary chain_summary(const GibbsChain& chain, double level = 0.95)
{
    if (chain.size() < 1) throw std::invalid_argument("chain_summary: empty chain");
    std::vector<Param> params{Param::alpha()};
    for (Eigen::Index j = 1; j < chain.xi_draws.cols(); ++j) params.push_back(Param::beta(static_cast<std::size_t>(j - 1)));
    for (std::size_t j = 0; j < chain.eta_draws.size(); ++j)
        for (Eigen::Index i = 0; i < chain.eta_draws[j].cols(); ++i) params.push_back(Param::eta(j, static_cast<std::size_t>(i)));
    params.push_back(Param::sigma2());

    ChainSummary out;
    out.min_ess = std::numeric_limits<double>::infinity();
    const auto n = static_cast<double>(chain.size());
    for (const auto& p : params) {
        const Vector col = chain_column(chain, p);
        ParamSummary s;
        s.param = p;
        s.mean = col.mean();
        s.sd = n > 1 ? std::sqrt((col.array() - s.mean).square().sum() / (n - 1.0)) : 0.0;
        s.interval = quantile_interval(col, level);
        s.ess = chain.size() >= 10 ? ess(col) : n;
        out.min_ess = std::min(out.min_ess, s.ess);
        out.params.push_back(s);
    }
    return out;
}

/// Posterior-mean weights of predictor j with pointwise quantile bands over draws.
inline WeightBand gibbs_weight_band(const GibbsChain& chain, const MidasDataset& data, std::size_t j, double level)
{
    const auto& p = data.predictor(j);
    const Matrix& etas = chain.eta_draws.at(j);
    // Row i holds the weights implied by draw i.
    const Matrix w = (etas * (p.basis.values * p.rep.null).transpose()).rowwise() +
                     (p.basis.values * p.rep.theta0).transpose();
    WeightBand out{w.colwise().mean().transpose(), Vector(w.cols()), Vector(w.cols())};
    for (Eigen::Index k = 0; k < w.cols(); ++k) {
        const auto iv = quantile_interval(w.col(k), level);
        out.lo(k) = iv.lo;
        out.hi(k) = iv.hi;
    }
    return out;
}

} // namespace midas
