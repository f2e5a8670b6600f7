#pragma once

// Replicated CAVI / Gibbs experiments over DGP configurations and the summary
// metrics reported per configuration.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cavi.hpp"
#include "dgp.hpp"
#include "gibbs.hpp"
#include "rng.hpp"

namespace midas {

enum class Method { Cavi, Gibbs };

inline std::string to_string(Method m)
{
    return m == Method::Cavi ? "CAVI" : "Gibbs";
}

struct HarnessOptions {
    Priors priors;
    CaviOptions cavi;
    GibbsOptions gibbs;  // seed is replaced per replication
    double level = 0.95;
    double kappa = 1.0;
};

struct MethodResult {
    Method method = Method::Cavi;
    bool ok = false;
    std::string error;
    double alpha = 0.0;
    std::vector<double> beta_mean, beta_sd, beta_lo, beta_hi;
    std::vector<double> eta_mean, eta_lo, eta_hi;  // flattened over predictors
    double seconds = 0.0;
    double min_ess = std::numeric_limits<double>::quiet_NaN();
    int iters = 0;
    bool converged = true;
    double elbo = std::numeric_limits<double>::quiet_NaN();
};

struct RepResult {
    std::string config_id;
    int rep = 0;
    std::uint64_t seed = 0;
    std::vector<double> beta_true;
    std::vector<double> eta_true;       // flattened over predictors
    std::vector<std::size_t> eta_owner;  // predictor index of each eta_true entry
    std::optional<MethodResult> cavi;
    std::optional<MethodResult> gibbs;

    const std::optional<MethodResult>& result(Method m) const { return m == Method::Cavi ? cavi : gibbs; }
};

/// Gibbs is left out for J >= 25 unless the caller asks for it.
inline std::vector<Method> default_methods(const DgpConfig& config)
{
    if (config.J >= 25) return {Method::Cavi};
    return {Method::Cavi, Method::Gibbs};
}

inline std::uint64_t replication_seed(std::uint64_t master, const std::string& config_id, int rep)
{
    return derive_seed(master, config_id, static_cast<std::uint64_t>(rep));
}

namespace detail {

inline MethodResult summarize_cavi(const CaviFit& fit, const HarnessOptions& opt)
{
    MethodResult r;
    r.method = Method::Cavi;
    r.ok = true;
    r.alpha = fit.xi.mu(0);
    for (std::size_t j = 0; j + 1 < static_cast<std::size_t>(fit.xi.mu.size()); ++j) {
        const auto m = marginal(fit, Param::beta(j));
        const auto iv = credible_interval(fit, Param::beta(j), opt.level, opt.kappa);
        r.beta_mean.push_back(m.mean);
        r.beta_sd.push_back(m.sd);
        r.beta_lo.push_back(iv.lo);
        r.beta_hi.push_back(iv.hi);
    }
    for (std::size_t j = 0; j < fit.etas.size(); ++j) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(fit.etas[j].mu.size()); ++i) {
            const auto iv = credible_interval(fit, Param::eta(j, i), opt.level, opt.kappa);
            r.eta_mean.push_back(fit.etas[j].mu(static_cast<Eigen::Index>(i)));
            r.eta_lo.push_back(iv.lo);
            r.eta_hi.push_back(iv.hi);
        }
    }
    r.seconds = fit.wall_time;
    r.iters = fit.iters;
    r.converged = fit.converged;
    r.elbo = fit.elbo();
    return r;
}

inline MethodResult summarize_gibbs(const GibbsChain& chain, const HarnessOptions& opt)
{
    const ChainSummary s = chain_summary(chain, opt.level);
    MethodResult r;
    r.method = Method::Gibbs;
    r.ok = true;
    for (const auto& p : s.params) {
        switch (p.param.kind) {
        case Param::Kind::Alpha: r.alpha = p.mean; break;
        case Param::Kind::Beta:
            r.beta_mean.push_back(p.mean);
            r.beta_sd.push_back(p.sd);
            r.beta_lo.push_back(p.interval.lo);
            r.beta_hi.push_back(p.interval.hi);
            break;
        case Param::Kind::Eta:
            r.eta_mean.push_back(p.mean);
            r.eta_lo.push_back(p.interval.lo);
            r.eta_hi.push_back(p.interval.hi);
            break;
        case Param::Kind::Sigma2: break;
        }
    }
    r.seconds = chain.wall_time;
    r.min_ess = s.min_ess;
    r.iters = static_cast<int>(chain.size());
    return r;
}

template <typename Fn>
MethodResult guarded(Method m, Fn&& fn)
{
    try {
        return fn();
    } catch (const std::exception& e) {
        MethodResult r;
        r.method = m;
        r.ok = false;
        r.error = e.what();
        return r;
    }
}

// Runs body(i) for i in [0, n) on up to `threads` workers.
template <typename Body>
void parallel_for(int n, int threads, Body&& body)
{
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) body(i);
        });
    for (auto& t : pool) t.join();
}

} // namespace detail

/// Simulates one dataset for (config, rep_seed) and fits each requested method.
/// A failing method is recorded in its MethodResult; it does not throw.
inline RepResult run_replication(const DgpConfig& config, std::uint64_t rep_seed, std::span<const Method> methods,
                                 const HarnessOptions& options = {}, int rep = 0)
{
    DgpConfig cfg = config;
    cfg.seed = derive_seed(rep_seed, "data");
    const SyntheticDataset sim = simulate(cfg);

    RepResult out;
    out.config_id = config.id;
    out.rep = rep;
    out.seed = rep_seed;
    out.beta_true = sim.truth.beta;
    for (std::size_t j = 0; j < sim.truth.eta.size(); ++j) {
        for (Eigen::Index i = 0; i < sim.truth.eta[j].size(); ++i) {
            out.eta_true.push_back(sim.truth.eta[j](i));
            out.eta_owner.push_back(j);
        }
    }

    for (Method m : methods) {
        if (m == Method::Cavi) {
            out.cavi = detail::guarded(m, [&] {
                return detail::summarize_cavi(fit_cavi(sim.dataset, options.priors, options.cavi), options);
            });
        } else {
            out.gibbs = detail::guarded(m, [&] {
                GibbsOptions g = options.gibbs;
                g.seed = derive_seed(rep_seed, "gibbs");
                return detail::summarize_gibbs(run_gibbs(sim.dataset, options.priors, g), options);
            });
        }
    }
    return out;
}

/// All replications of one configuration, ordered by replication index.
inline std::vector<RepResult> run_config(const DgpConfig& config, int reps, std::uint64_t master_seed,
                                         std::span<const Method> methods, const HarnessOptions& options = {},
                                         int threads = 1)
{
    std::vector<RepResult> out(static_cast<std::size_t>(std::max(reps, 0)));
    detail::parallel_for(reps, threads, [&](int r) {
        out[static_cast<std::size_t>(r)] =
            run_replication(config, replication_seed(master_seed, config.id, r), methods, options, r);
    });
    return out;
}

struct MetricsRow {
    std::string config_id;
    Method method = Method::Cavi;
    int reps = 0;
    int failures = 0;
    double bias_beta = 0.0, bias_beta_se = 0.0;
    double signed_bias_beta = 0.0;
    double mae_beta = 0.0;
    double rmse_beta = 0.0, rmse_beta_se = 0.0;
    double cov95_beta = 0.0, cov95_beta_se = 0.0;
    double bias_eta = 0.0, bias_eta_se = 0.0;
    double cov95_eta = 0.0, cov95_eta_se = 0.0;
    double mean_time = 0.0, time_se = 0.0;
    double speedup = std::numeric_limits<double>::quiet_NaN();
    double min_ess = std::numeric_limits<double>::quiet_NaN();         // mean over reps
    double min_ess_median = std::numeric_limits<double>::quiet_NaN();  // median over reps
    double mean_iters = 0.0;
    double mean_elbo = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline double mean_of(const std::vector<double>& v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double se_of(const std::vector<double>& v)
{
    const auto n = static_cast<double>(v.size());
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / (n - 1.0) / n);
}

inline double median_of(std::vector<double> v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Per-coordinate accuracy summary over replications: bias is the mean over
// coordinates of |mean over reps of (estimate - truth)|.
struct CoordinateStats {
    double bias = 0.0, bias_se = 0.0, signed_bias = 0.0, mae = 0.0;
    double rmse = 0.0, rmse_se = 0.0, coverage = 0.0, coverage_se = 0.0;
};

inline CoordinateStats coordinate_stats(const std::vector<std::vector<double>>& err,  // [rep][coord]
                                        const std::vector<std::vector<double>>& hit)
{
    CoordinateStats s;
    const std::size_t reps = err.size();
    if (reps == 0 || err.front().empty()) return s;
    const std::size_t coords = err.front().size();
    std::vector<double> rep_sq(reps, 0.0), rep_cov(reps, 0.0);
    double abs_sum = 0.0, signed_sum = 0.0;
    for (std::size_t c = 0; c < coords; ++c) {
        std::vector<double> col(reps);
        for (std::size_t r = 0; r < reps; ++r) col[r] = err[r][c];
        const double m = mean_of(col);
        s.bias += std::abs(m);
        s.bias_se += se_of(col);
        signed_sum += m;
        for (double e : col) abs_sum += std::abs(e);
    }
    s.bias /= static_cast<double>(coords);
    s.bias_se /= static_cast<double>(coords);
    s.signed_bias = signed_sum / static_cast<double>(coords);
    s.mae = abs_sum / static_cast<double>(coords * reps);
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t c = 0; c < coords; ++c) {
            rep_sq[r] += err[r][c] * err[r][c];
            rep_cov[r] += hit[r][c];
        }
        rep_sq[r] /= static_cast<double>(coords);
        rep_cov[r] /= static_cast<double>(coords);
    }
    const double mse = mean_of(rep_sq);
    s.rmse = std::sqrt(mse);
    s.rmse_se = s.rmse > 0.0 ? se_of(rep_sq) / (2.0 * s.rmse) : 0.0;
    s.coverage = mean_of(rep_cov);
    s.coverage_se = se_of(rep_cov);
    return s;
}

} // namespace detail

/// One MetricsRow per method present in `results`. Accuracy metrics cover the
/// active coefficients (nonzero truth) and the eta blocks of those predictors.
/// The CAVI row carries the Gibbs/CAVI speedup when both methods ran.
inline std::vector<MetricsRow> aggregate(const std::vector<RepResult>& results)
{
    if (results.size() < 2) throw std::invalid_argument("aggregate: need at least 2 replications");
    std::vector<MetricsRow> rows;
    for (Method m : {Method::Cavi, Method::Gibbs}) {
        std::vector<std::vector<double>> beta_err, beta_hit, eta_err, eta_hit;
        std::vector<double> times, ess, iters, elbos;
        int failures = 0;
        bool present = false;
        for (const auto& rep : results) {
            const auto& res = rep.result(m);
            if (!res) continue;
            present = true;
            if (!res->ok) {
                ++failures;
                continue;
            }
            std::vector<double> be, bh, ee, eh;
            for (std::size_t j = 0; j < rep.beta_true.size(); ++j) {
                if (rep.beta_true[j] == 0.0) continue;
                be.push_back(res->beta_mean[j] - rep.beta_true[j]);
                bh.push_back(res->beta_lo[j] <= rep.beta_true[j] && rep.beta_true[j] <= res->beta_hi[j] ? 1.0 : 0.0);
            }
            for (std::size_t i = 0; i < rep.eta_true.size(); ++i) {
                if (rep.beta_true[rep.eta_owner[i]] == 0.0) continue;
                ee.push_back(res->eta_mean[i] - rep.eta_true[i]);
                eh.push_back(res->eta_lo[i] <= rep.eta_true[i] && rep.eta_true[i] <= res->eta_hi[i] ? 1.0 : 0.0);
            }
            beta_err.push_back(std::move(be));
            beta_hit.push_back(std::move(bh));
            eta_err.push_back(std::move(ee));
            eta_hit.push_back(std::move(eh));
            times.push_back(res->seconds);
            iters.push_back(res->iters);
            if (std::isfinite(res->min_ess)) ess.push_back(res->min_ess);
            if (std::isfinite(res->elbo)) elbos.push_back(res->elbo);
        }
        if (!present) continue;

        MetricsRow row;
        row.config_id = results.front().config_id;
        row.method = m;
        row.reps = static_cast<int>(times.size());
        row.failures = failures;
        const auto b = detail::coordinate_stats(beta_err, beta_hit);
        row.bias_beta = b.bias;
        row.bias_beta_se = b.bias_se;
        row.signed_bias_beta = b.signed_bias;
        row.mae_beta = b.mae;
        row.rmse_beta = b.rmse;
        row.rmse_beta_se = b.rmse_se;
        row.cov95_beta = b.coverage;
        row.cov95_beta_se = b.coverage_se;
        const auto e = detail::coordinate_stats(eta_err, eta_hit);
        row.bias_eta = e.bias;
        row.bias_eta_se = e.bias_se;
        row.cov95_eta = e.coverage;
        row.cov95_eta_se = e.coverage_se;
        row.mean_time = detail::mean_of(times);
        row.time_se = detail::se_of(times);
        if (!ess.empty()) {
            row.min_ess = detail::mean_of(ess);
            row.min_ess_median = detail::median_of(ess);
        }
        row.mean_iters = detail::mean_of(iters);
        if (!elbos.empty()) row.mean_elbo = detail::mean_of(elbos);
        rows.push_back(row);
    }
    if (rows.size() == 2 && rows[0].mean_time > 0.0) rows[0].speedup = rows[1].mean_time / rows[0].mean_time;
    return rows;
}

struct SpeedupRow {
    std::string config_id;
    double cavi_time = 0.0;
    double gibbs_time = 0.0;
    double speedup = 0.0;
    bool anomaly = false;  // CAVI slower than Gibbs
};

/// Pairs CAVI and Gibbs rows by configuration; unpaired configurations are omitted.
inline std::vector<SpeedupRow> speedup_table(const std::vector<MetricsRow>& rows)
{
    std::map<std::string, std::pair<const MetricsRow*, const MetricsRow*>> pairs;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        auto [it, inserted] = pairs.try_emplace(r.config_id, nullptr, nullptr);
        if (inserted) order.push_back(r.config_id);
        (r.method == Method::Cavi ? it->second.first : it->second.second) = &r;
    }
    std::vector<SpeedupRow> out;
    for (const auto& id : order) {
        const auto [c, g] = pairs[id];
        if (!c || !g || !(c->mean_time > 0.0)) continue;
        SpeedupRow s{id, c->mean_time, g->mean_time, g->mean_time / c->mean_time, false};
        s.anomaly = s.speedup < 1.0;
        out.push_back(s);
    }
    return out;
}

struct CalibrationRow {
    double kappa = 1.0;
    double coverage = 0.0;
    double coverage_se = 0.0;
};

/// Coverage of the active betas when CAVI intervals are mu +/- z kappa sd.
inline CalibrationRow coverage_at_kappa(const std::vector<RepResult>& results, double kappa, double level = 0.95)
{
    const double z = normal_quantile(0.5 * (1.0 + level)) * kappa;
    std::vector<double> per_rep;
    for (const auto& rep : results) {
        if (!rep.cavi || !rep.cavi->ok) continue;
        double hits = 0.0;
        int n = 0;
        for (std::size_t j = 0; j < rep.beta_true.size(); ++j) {
            if (rep.beta_true[j] == 0.0) continue;
            const double half = z * rep.cavi->beta_sd[j];
            const double truth = rep.beta_true[j];
            hits += rep.cavi->beta_mean[j] - half <= truth && truth <= rep.cavi->beta_mean[j] + half ? 1.0 : 0.0;
            ++n;
        }
        if (n > 0) per_rep.push_back(hits / n);
    }
    return {kappa, detail::mean_of(per_rep), detail::se_of(per_rep)};
}

inline std::vector<CalibrationRow> calibration_sweep(const DgpConfig& config, std::span<const double> kappas, int reps,
                                                     std::uint64_t master_seed, const HarnessOptions& options = {},
                                                     int threads = 1)
{
    if (kappas.empty()) throw std::invalid_argument("calibration_sweep: no kappa values");
    const Method cavi_only[] = {Method::Cavi};
    const auto results = run_config(config, reps, master_seed, cavi_only, options, threads);
    std::vector<CalibrationRow> out;
    for (double k : kappas) out.push_back(coverage_at_kappa(results, k, options.level));
    return out;
}

} // namespace midas
