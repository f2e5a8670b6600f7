#pragma once

// Synthetic MIDAS datasets for the Monte Carlo study.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "basis.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace midas {

enum class Profile { Decreasing, Hump, UShape };

inline std::string to_string(Profile p)
{
    switch (p) {
    case Profile::Decreasing: return "decreasing";
    case Profile::Hump: return "hump";
    case Profile::UShape: return "ushape";
    }
    return {};
}

inline Profile profile_from_string(const std::string& s)
{
    if (s == "decreasing") return Profile::Decreasing;
    if (s == "hump") return Profile::Hump;
    if (s == "ushape") return Profile::UShape;
    throw ConfigError("unknown weight profile '" + s + "' (expected decreasing, hump or ushape)");
}

/// Normalized lag-weight profile of length K:
///   Decreasing  w_k ~ exp(-0.3 k)
///   Hump        w_k ~ exp(-(k - K/3)^2 / (2 (K/5)^2))
///   UShape      w_k ~ exp(-0.4 k) + exp(-0.4 (K - 1 - k))
inline Vector make_profile(Profile shape, Eigen::Index lags)
{
    if (lags < 3) throw DimensionError("make_profile: need K >= 3");
    Vector w(lags);
    const double k_count = static_cast<double>(lags);
    for (Eigen::Index k = 0; k < lags; ++k) {
        const double kk = static_cast<double>(k);
        switch (shape) {
        case Profile::Decreasing: w(k) = std::exp(-0.3 * kk); break;
        case Profile::Hump: {
            const double centre = k_count / 3.0;
            const double width = k_count / 5.0;
            w(k) = std::exp(-(kk - centre) * (kk - centre) / (2.0 * width * width));
            break;
        }
        case Profile::UShape: w(k) = std::exp(-0.4 * kk) + std::exp(-0.4 * (k_count - 1.0 - kk)); break;
        }
    }
    return w / w.sum();
}

struct DgpConfig {
    std::string id = "custom";
    int tier = 0;
    Eigen::Index J = 1;
    Eigen::Index T = 200;
    Eigen::Index K = 9;
    Eigen::Index P = 3;
    std::vector<Profile> profiles;  // one per predictor
    std::vector<double> beta;       // one per predictor
    double alpha = 1.0;
    double sigma2 = 1.0;
    double x_rho = 0.5;  // AR(1) coefficient of the high-frequency predictor stream
    BasisKind basis = BasisKind::Almon;
    std::string frequency = "monthly";
    std::uint64_t seed = 0;
    std::string note;

    void validate() const
    {
        if (J < 1 || T < 1) throw ConfigError("dgp '" + id + "': J and T must be positive");
        if (K < 3) throw ConfigError("dgp '" + id + "': K must be at least 3");
        if (P < 1 || P > K) throw ConfigError("dgp '" + id + "': need 1 <= P <= K");
        if (basis == BasisKind::BSpline && P < 4) throw ConfigError("dgp '" + id + "': B-spline basis needs P >= 4");
        if (static_cast<Eigen::Index>(profiles.size()) != J || static_cast<Eigen::Index>(beta.size()) != J)
            throw ConfigError("dgp '" + id + "': need one profile and one beta per predictor");
        if (!(sigma2 >= 0.0)) throw ConfigError("dgp '" + id + "': sigma2 must be nonnegative");
        if (!(x_rho > -1.0 && x_rho < 1.0)) throw ConfigError("dgp '" + id + "': x_rho must lie in (-1, 1)");
    }
};

// Reference coefficients (2.0, -1.0, 0.5) repeated; with `null_pattern` the
// trailing ceil(J/2) coefficients are set to zero.
inline std::vector<double> default_betas(Eigen::Index j_count, bool null_pattern)
{
    static constexpr double base[] = {2.0, -1.0, 0.5};
    std::vector<double> b(static_cast<std::size_t>(j_count));
    for (Eigen::Index j = 0; j < j_count; ++j) b[static_cast<std::size_t>(j)] = base[j % 3];
    if (null_pattern) {
        const Eigen::Index zeros = (j_count + 1) / 2;
        for (Eigen::Index j = j_count - zeros; j < j_count; ++j) b[static_cast<std::size_t>(j)] = 0.0;
    }
    return b;
}

// Reference profile pattern (decreasing, hump, decreasing) repeated.
inline std::vector<Profile> default_profiles(Eigen::Index j_count)
{
    static constexpr Profile base[] = {Profile::Decreasing, Profile::Hump, Profile::Decreasing};
    std::vector<Profile> p(static_cast<std::size_t>(j_count));
    for (Eigen::Index j = 0; j < j_count; ++j) p[static_cast<std::size_t>(j)] = base[j % 3];
    return p;
}

/// Baseline design: K=9, P=3 Almon, alpha=1, sigma^2=1, reference betas and
/// profiles; predictor sets larger than three use the half-null pattern.
inline DgpConfig baseline_config(std::string id, Eigen::Index j_count, Eigen::Index t_count)
{
    DgpConfig c;
    c.id = std::move(id);
    c.J = j_count;
    c.T = t_count;
    c.profiles = default_profiles(j_count);
    c.beta = default_betas(j_count, j_count > 3);
    return c;
}

struct Truth {
    double alpha = 0.0;
    std::vector<double> beta;
    std::vector<Vector> profiles;
    std::vector<Vector> eta;           // least-squares projection of each profile
    std::vector<double> projection_rmse;  // weight-space residual of that projection
    double sigma2 = 0.0;

    bool active(std::size_t j) const { return beta.at(j) != 0.0; }
};

struct SyntheticDataset {
    MidasDataset dataset;
    Truth truth;
    Vector noise;
    DgpConfig config;
};

/// Forward simulation. Each predictor is a stationary unit-variance AR(1)
/// high-frequency stream z with coefficient x_rho (x_rho = 0 gives iid N(0,1));
/// period t owns K consecutive stream values and lag 0 is the most recent, so
/// x_{t,k} = z_{tK + K-1-k}. Then y_t = alpha + sum_j beta_j x_t^T w_j + eps_t,
/// eps_t ~ N(0, sigma^2).
inline SyntheticDataset simulate(const DgpConfig& config)
{
    config.validate();
    Rng rng(config.seed);
    const Eigen::Index t_count = config.T;

    SyntheticDataset out;
    out.config = config;
    out.truth.alpha = config.alpha;
    out.truth.beta = config.beta;
    out.truth.sigma2 = config.sigma2;

    Vector signal = Vector::Constant(t_count, config.alpha);
    std::vector<PredictorInput> inputs;
    for (Eigen::Index j = 0; j < config.J; ++j) {
        Matrix x(t_count, config.K);
        const double innovation_sd = std::sqrt(1.0 - config.x_rho * config.x_rho);
        double z = rng.normal();
        for (Eigen::Index t = 0; t < t_count; ++t) {
            for (Eigen::Index k = config.K - 1; k >= 0; --k) {
                z = config.x_rho * z + innovation_sd * rng.normal();
                x(t, k) = z;
            }
        }
        const Vector w = make_profile(config.profiles[static_cast<std::size_t>(j)], config.K);
        signal += config.beta[static_cast<std::size_t>(j)] * (x * w);

        BasisMatrix basis = make_basis(config.basis, config.K, config.P);
        const Reparam rep = reparameterize(basis);
        const Vector eta = project_profile(basis, rep, w);
        const Vector fitted = weights_from_eta(basis, rep, eta);
        out.truth.profiles.push_back(w);
        out.truth.eta.push_back(eta);
        out.truth.projection_rmse.push_back(std::sqrt((fitted - w).squaredNorm() / static_cast<double>(config.K)));
        inputs.push_back({std::move(x), std::move(basis)});
    }

    out.noise.resize(t_count);
    const double sd = std::sqrt(config.sigma2);
    for (Eigen::Index t = 0; t < t_count; ++t) out.noise(t) = sd * rng.normal();
    out.dataset = MidasDataset(signal + out.noise, std::move(inputs));
    return out;
}

/// The 21 Monte Carlo configurations.
///
/// Tier 1: J in {1,3,5,10,25,50} at T=200 (1A-1..6) and T in {50,100,400} at J=3
/// (1B-1..3; T=200 is 1A-2). Tier 2: profile shapes (2A-1..3), noise variance
/// 0.25 / 4 (2B-1..2), cubic B-spline basis (2C-1), K in {5, 22, 65} (2D-1..3).
/// Tier 3: (T=50, J=10), (T=200, J=10, sigma^2=4), (T=50, J=3).
inline std::vector<DgpConfig> tier_configs()
{
    std::vector<DgpConfig> out;
    auto add = [&](DgpConfig c, int tier) {
        c.tier = tier;
        out.push_back(std::move(c));
    };

    const Eigen::Index js[] = {1, 3, 5, 10, 25, 50};
    for (int i = 0; i < 6; ++i) add(baseline_config("1A-" + std::to_string(i + 1), js[i], 200), 1);
    const Eigen::Index ts[] = {50, 100, 400};
    for (int i = 0; i < 3; ++i) add(baseline_config("1B-" + std::to_string(i + 1), 3, ts[i]), 1);

    const Profile shapes[] = {Profile::Decreasing, Profile::Hump, Profile::UShape};
    for (int i = 0; i < 3; ++i) {
        auto c = baseline_config("2A-" + std::to_string(i + 1), 3, 200);
        c.profiles.assign(3, shapes[i]);
        add(c, 2);
    }
    const double noise[] = {0.25, 4.0};
    for (int i = 0; i < 2; ++i) {
        auto c = baseline_config("2B-" + std::to_string(i + 1), 3, 200);
        c.sigma2 = noise[i];
        add(c, 2);
    }
    {
        auto c = baseline_config("2C-1", 3, 200);
        c.basis = BasisKind::BSpline;
        c.P = 4;
        add(c, 2);
    }
    const Eigen::Index ks[] = {5, 22, 65};
    const char* freq[] = {"quarterly-monthly", "monthly-daily", "quarterly-daily"};
    for (int i = 0; i < 3; ++i) {
        auto c = baseline_config("2D-" + std::to_string(i + 1), 3, 200);
        c.K = ks[i];
        c.frequency = freq[i];
        if (i == 1) c.note = "K=22 slot reconstructed; only K=5 and K=65 are named explicitly";
        add(c, 2);
    }

    add(baseline_config("3A-1", 10, 50), 3);
    {
        auto c = baseline_config("3A-2", 10, 200);
        c.sigma2 = 4.0;
        c.note = "low-SNR J=10 variant fills the ambiguous stress slot";
        add(c, 3);
    }
    add(baseline_config("3A-3", 3, 50), 3);
    return out;
}

inline DgpConfig find_config(const std::string& id)
{
    for (auto& c : tier_configs())
        if (c.id == id) return c;
    throw ConfigError("unknown configuration id '" + id + "'");
}

} // namespace midas
