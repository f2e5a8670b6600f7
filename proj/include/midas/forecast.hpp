#pragma once

// Monthly realized-volatility forecasting with MIDAS regressions on daily
// squared returns, plus the usual low-frequency benchmarks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "basis.hpp"
#include "cavi.hpp"
#include "errors.hpp"
#include "gibbs.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace midas {

using Date = std::chrono::year_month_day;
using Month = std::chrono::year_month;

/// Parses YYYY-MM-DD.
inline Date parse_date(const std::string& s)
{
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
        throw DataError("invalid date '" + s + "' (expected YYYY-MM-DD)");
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw DataError("invalid calendar date '" + s + "'");
    return date;
}

inline std::string format_date(const Date& d)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

inline std::string format_month(const Month& m)
{
    char buf[12];
    std::snprintf(buf, sizeof buf, "%04d-%02u", static_cast<int>(m.year()), static_cast<unsigned>(m.month()));
    return buf;
}

struct DailyReturns {
    std::vector<Date> dates;
    std::vector<double> returns;

    std::size_t size() const { return dates.size(); }

    void validate() const
    {
        if (dates.size() != returns.size()) throw DataError("daily returns: dates and returns differ in length");
        for (std::size_t i = 0; i < dates.size(); ++i) {
            if (!std::isfinite(returns[i])) throw DataError("daily returns: nonfinite return on " + format_date(dates[i]));
            if (i > 0 && !(std::chrono::sys_days{dates[i - 1]} < std::chrono::sys_days{dates[i]}))
                throw DataError("daily returns: dates not strictly increasing at " + format_date(dates[i]));
        }
    }
};

struct RvSeries {
    std::vector<Month> months;
    Vector rv;
    Vector log_rv;
    std::vector<std::size_t> first_day;  // index into the daily series
    std::vector<std::size_t> last_day;
    std::vector<Month> dropped;          // months with zero realized variance
    std::vector<std::string> warnings;

    std::size_t size() const { return months.size(); }
};

/// Groups returns by calendar month: rv = sum r^2, log_rv = ln rv. Months whose
/// rv is zero are dropped and listed in `dropped`.
inline RvSeries realized_volatility(const DailyReturns& daily)
{
    daily.validate();
    RvSeries out;
    std::vector<double> rv, log_rv;
    std::size_t i = 0;
    while (i < daily.size()) {
        const Month month = daily.dates[i].year() / daily.dates[i].month();
        const std::size_t first = i;
        double sum = 0.0;
        for (; i < daily.size() && daily.dates[i].year() / daily.dates[i].month() == month; ++i)
            sum += daily.returns[i] * daily.returns[i];
        if (!(sum > 0.0)) {
            out.dropped.push_back(month);
            out.warnings.push_back("month " + format_month(month) + " has zero realized variance; dropped");
            continue;
        }
        if (!out.months.empty()) {
            const auto gap = (month - out.months.back()).count();
            if (gap > 1)
                out.warnings.push_back("no trading days between " + format_month(out.months.back()) + " and " +
                                       format_month(month));
        }
        out.months.push_back(month);
        out.first_day.push_back(first);
        out.last_day.push_back(i - 1);
        rv.push_back(sum);
        log_rv.push_back(std::log(sum));
    }
    out.rv = Eigen::Map<const Vector>(rv.data(), static_cast<Eigen::Index>(rv.size()));
    out.log_rv = Eigen::Map<const Vector>(log_rv.data(), static_cast<Eigen::Index>(log_rv.size()));
    return out;
}

struct RvDatasetOptions {
    Eigen::Index K = 22;
    Eigen::Index J = 1;
    Eigen::Index P = 3;
    BasisKind basis = BasisKind::Almon;
    std::size_t warmup = 12;  // minimum months of log-RV history before the first target
    double scale = 1e4;       // squared returns in percent^2
};

/// MIDAS-RV regression data. Row t targets month `target[t]` (an index into the
/// RV series); predictor block j (1-based) holds the K most recent scaled
/// squared daily returns up to the last trading day of month target - j,
/// most recent first, reaching back into earlier months when needed.
struct RvDataset {
    MidasDataset dataset;
    RvSeries rv;
    std::vector<std::size_t> target;
    RvDatasetOptions options;

    Eigen::Index T() const { return dataset.T(); }
};

inline RvDataset build_midas_rv_dataset(const RvSeries& rv, const DailyReturns& daily, const RvDatasetOptions& options = {})
{
    if (options.K < 1 || options.J < 1) throw ConfigError("build_midas_rv_dataset: K and J must be positive");
    const std::size_t J = static_cast<std::size_t>(options.J);
    const auto K = static_cast<std::size_t>(options.K);
    std::vector<std::size_t> targets;
    for (std::size_t m = std::max(J, options.warmup); m < rv.size(); ++m)
        if (rv.last_day[m - J] + 1 >= K) targets.push_back(m);
    if (targets.empty()) throw DataError("build_midas_rv_dataset: insufficient history for K*J daily lags");

    const auto rows = static_cast<Eigen::Index>(targets.size());
    Vector y(rows);
    std::vector<PredictorInput> inputs;
    for (std::size_t j = 1; j <= J; ++j) {
        Matrix x(rows, options.K);
        for (Eigen::Index t = 0; t < rows; ++t) {
            const std::size_t end = rv.last_day[targets[static_cast<std::size_t>(t)] - j];
            for (Eigen::Index k = 0; k < options.K; ++k) {
                const double r = daily.returns[end - static_cast<std::size_t>(k)];
                x(t, k) = options.scale * r * r;
            }
        }
        inputs.push_back({std::move(x), make_basis(options.basis, options.K, options.P)});
    }
    for (Eigen::Index t = 0; t < rows; ++t) y(t) = rv.log_rv(static_cast<Eigen::Index>(targets[static_cast<std::size_t>(t)]));
    return {MidasDataset(std::move(y), std::move(inputs)), rv, std::move(targets), options};
}

enum class ForecastModel { MidasCavi, MidasGibbs, HarRv, Ar1, Ar4, HistAvg };

inline std::string to_string(ForecastModel m)
{
    switch (m) {
    case ForecastModel::MidasCavi: return "midas_cavi";
    case ForecastModel::MidasGibbs: return "midas_gibbs";
    case ForecastModel::HarRv: return "har";
    case ForecastModel::Ar1: return "ar1";
    case ForecastModel::Ar4: return "ar4";
    case ForecastModel::HistAvg: return "histavg";
    }
    return {};
}

inline ForecastModel forecast_model_from_string(const std::string& s)
{
    for (auto m : {ForecastModel::MidasCavi, ForecastModel::MidasGibbs, ForecastModel::HarRv, ForecastModel::Ar1,
                   ForecastModel::Ar4, ForecastModel::HistAvg})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown forecast model '" + s + "' (expected midas_cavi, midas_gibbs, har, ar1, ar4, histavg)");
}

struct LinearForecast {
    Vector coef;
    double forecast = 0.0;
    bool ridge = false;  // rank-deficient design, solved with a small ridge penalty
};

namespace detail {

// OLS with a ridge fallback (intercept unpenalized) for rank-deficient designs.
inline LinearForecast ols_forecast(const Matrix& X, const Vector& y, const Vector& x_new)
{
    LinearForecast out;
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() == X.cols()) {
        out.coef = qr.solve(y);
    } else {
        Matrix A = X.transpose() * X;
        const double lambda = 1e-8 * std::max(1.0, A.diagonal().tail(A.rows() - 1).sum());
        A.diagonal().tail(A.rows() - 1).array() += lambda;
        out.coef = A.ldlt().solve(X.transpose() * y);
        out.ridge = true;
    }
    out.forecast = x_new.dot(out.coef);
    return out;
}

inline double window_mean(std::span<const double> s, std::size_t end, std::size_t len)
{
    double sum = 0.0;
    for (std::size_t i = end - len; i < end; ++i) sum += s[i];
    return sum / static_cast<double>(len);
}

} // namespace detail

/// HAR-RV at monthly frequency: log RV_t on (1, RV_{t-1}, mean RV_{t-1..t-3},
/// mean RV_{t-1..t-12}), then a one-step forecast past the end of `training`.
inline LinearForecast har_rv_forecast(std::span<const double> training)
{
    const std::size_t n = training.size();
    if (n < 13) throw DataError("har_rv_forecast: need at least 13 training months");
    const auto rows = static_cast<Eigen::Index>(n - 12);
    Matrix X(rows, 4);
    Vector y(rows);
    for (std::size_t s = 12; s < n; ++s) {
        const auto r = static_cast<Eigen::Index>(s - 12);
        X.row(r) << 1.0, training[s - 1], detail::window_mean(training, s, 3), detail::window_mean(training, s, 12);
        y(r) = training[s];
    }
    Vector x_new(4);
    x_new << 1.0, training[n - 1], detail::window_mean(training, n, 3), detail::window_mean(training, n, 12);
    return detail::ols_forecast(X, y, x_new);
}

/// AR(p) by OLS with intercept, one step past the end of `training`.
inline LinearForecast ar_forecast(std::span<const double> training, std::size_t p)
{
    const std::size_t n = training.size();
    if (p < 1 || n < 2 * p + 2) throw DataError("ar_forecast: too few training months for AR(" + std::to_string(p) + ")");
    const auto rows = static_cast<Eigen::Index>(n - p);
    const auto cols = static_cast<Eigen::Index>(p) + 1;
    Matrix X(rows, cols);
    Vector y(rows);
    for (std::size_t s = p; s < n; ++s) {
        const auto r = static_cast<Eigen::Index>(s - p);
        X(r, 0) = 1.0;
        for (std::size_t l = 1; l <= p; ++l) X(r, static_cast<Eigen::Index>(l)) = training[s - l];
        y(r) = training[s];
    }
    Vector x_new(cols);
    x_new(0) = 1.0;
    for (std::size_t l = 1; l <= p; ++l) x_new(static_cast<Eigen::Index>(l)) = training[n - l];
    return detail::ols_forecast(X, y, x_new);
}

inline double hist_avg_forecast(std::span<const double> training)
{
    if (training.empty()) throw DataError("hist_avg_forecast: empty training sample");
    double s = 0.0;
    for (double v : training) s += v;
    return s / static_cast<double>(training.size());
}

struct PointForecast {
    double mean = 0.0;
    double variance = std::numeric_limits<double>::quiet_NaN();
};

/// Plug-in forecast alpha + sum_j beta_j (c + r^T eta_j) at posterior means, with
/// predictive variance E[sigma^2] + g^T Sigma_xi g + sum_j v_j (mu_beta_j^2 + Var beta_j).
inline PointForecast midas_cavi_predict(const CaviFit& fit, const MidasDataset& data, Eigen::Index row)
{
    const auto cols = static_cast<Eigen::Index>(data.J()) + 1;
    Vector g(cols);
    Vector v = Vector::Zero(cols);
    g(0) = 1.0;
    for (std::size_t j = 0; j < data.J(); ++j) {
        const auto& p = data.predictor(j);
        const auto col = static_cast<Eigen::Index>(j) + 1;
        const Vector r = p.reduced.r.row(row).transpose();
        g(col) = p.reduced.c(row) + r.dot(fit.etas[j].mu);
        v(col) = r.dot(fit.etas[j].Sigma() * r);
    }
    PointForecast out;
    out.mean = g.dot(fit.xi.mu);
    const Matrix& S = fit.xi.Sigma();
    out.variance = fit.sigma.mean() + g.dot(S * g) +
                   (v.array() * (fit.xi.mu.array().square() + S.diagonal().array())).sum();
    return out;
}

/// Plug-in forecast at Gibbs posterior means; the variance is the draw-wise
/// variance of the regression mean plus the mean sigma^2 draw.
inline PointForecast midas_gibbs_predict(const GibbsChain& chain, const MidasDataset& data, Eigen::Index row)
{
    const Vector xi = chain.xi_draws.colwise().mean().transpose();
    const Eigen::Index n = chain.size();
    double mean = xi(0);
    Vector draws = chain.xi_draws.col(0);
    for (std::size_t j = 0; j < data.J(); ++j) {
        const auto& p = data.predictor(j);
        const auto col = static_cast<Eigen::Index>(j) + 1;
        const Vector r = p.reduced.r.row(row).transpose();
        const Vector eta = chain.eta_draws[j].colwise().mean().transpose();
        mean += xi(col) * (p.reduced.c(row) + r.dot(eta));
        const Vector agg = (chain.eta_draws[j] * r).array() + p.reduced.c(row);
        draws += (chain.xi_draws.col(col).array() * agg.array()).matrix();
    }
    const double dm = draws.mean();
    const double var = n > 1 ? (draws.array() - dm).square().sum() / static_cast<double>(n - 1) : 0.0;
    return {mean, var + chain.sigma2_draws.mean()};
}

struct ForecastOptions {
    std::size_t initial_window = 120;  // dataset rows used for the first fit
    Priors priors;
    CaviOptions cavi;
    GibbsOptions gibbs;  // seed is derived per forecast origin
};

struct ForecastRun {
    ForecastModel model = ForecastModel::HistAvg;
    std::vector<Month> months;
    std::vector<double> forecast;  // NaN when the fit failed
    std::vector<double> variance;  // predictive variance, NaN for benchmarks
    std::vector<double> actual;
    std::vector<double> seconds;
    std::vector<std::string> errors;  // empty string when the fit succeeded
    int ridge_fallbacks = 0;

    std::size_t size() const { return forecast.size(); }
};

namespace detail {

inline MidasDataset head_rows(const MidasDataset& data, Eigen::Index rows)
{
    std::vector<PredictorInput> inputs;
    for (const auto& p : data.predictors()) inputs.push_back({p.x.topRows(rows), p.basis});
    return MidasDataset(data.y().head(rows), std::move(inputs));
}

} // namespace detail

/// One-step forecasts for dataset rows initial_window .. T-1. The MIDAS models
/// are fit on rows before the target; benchmarks use every log-RV month before
/// the target month. Fit failures leave a NaN forecast and an error message.
inline ForecastRun expanding_window_forecast(const RvDataset& data, ForecastModel model, const ForecastOptions& options = {})
{
    const auto T = static_cast<std::size_t>(data.T());
    if (options.initial_window < 1 || options.initial_window >= T)
        throw ConfigError("expanding_window_forecast: initial window must lie in [1, " + std::to_string(T) + ")");
    ForecastRun run;
    run.model = model;
    const std::span<const double> history(data.rv.log_rv.data(), static_cast<std::size_t>(data.rv.log_rv.size()));

    for (std::size_t i = options.initial_window; i < T; ++i) {
        const std::size_t month = data.target[i];
        run.months.push_back(data.rv.months[month]);
        run.actual.push_back(data.dataset.y()(static_cast<Eigen::Index>(i)));
        double value = std::numeric_limits<double>::quiet_NaN();
        double var = std::numeric_limits<double>::quiet_NaN();
        std::string error;
        const auto start = std::chrono::steady_clock::now();
        try {
            const auto training = history.first(month);
            switch (model) {
            case ForecastModel::MidasCavi: {
                const auto fit = fit_cavi(detail::head_rows(data.dataset, static_cast<Eigen::Index>(i)), options.priors,
                                          options.cavi);
                const auto p = midas_cavi_predict(fit, data.dataset, static_cast<Eigen::Index>(i));
                value = p.mean;
                var = p.variance;
                break;
            }
            case ForecastModel::MidasGibbs: {
                GibbsOptions g = options.gibbs;
                g.seed = derive_seed(options.gibbs.seed, "forecast", i);
                const auto chain = run_gibbs(detail::head_rows(data.dataset, static_cast<Eigen::Index>(i)),
                                             options.priors, g);
                const auto p = midas_gibbs_predict(chain, data.dataset, static_cast<Eigen::Index>(i));
                value = p.mean;
                var = p.variance;
                break;
            }
            case ForecastModel::HarRv: {
                const auto f = har_rv_forecast(training);
                value = f.forecast;
                run.ridge_fallbacks += f.ridge;
                break;
            }
            case ForecastModel::Ar1:
            case ForecastModel::Ar4: {
                const auto f = ar_forecast(training, model == ForecastModel::Ar1 ? 1 : 4);
                value = f.forecast;
                run.ridge_fallbacks += f.ridge;
                break;
            }
            case ForecastModel::HistAvg: value = hist_avg_forecast(training); break;
            }
            if (!std::isfinite(value)) throw NumericalError("nonfinite forecast");
        } catch (const std::exception& e) {
            value = std::numeric_limits<double>::quiet_NaN();
            error = e.what();
        }
        run.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        run.forecast.push_back(value);
        run.variance.push_back(var);
        run.errors.push_back(std::move(error));
    }
    return run;
}

struct DmResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Diebold-Mariano test on squared-error loss, d_t = e_a^2 - e_b^2, with a
/// Newey-West (Bartlett) long-run variance. Positive statistics mean model a is
/// less accurate.
inline DmResult dm_test(std::span<const double> errors_a, std::span<const double> errors_b, std::size_t lag = 4)
{
    if (errors_a.size() != errors_b.size()) throw DimensionError("dm_test: error series differ in length");
    const std::size_t n = errors_a.size();
    if (n < 10) throw DimensionError("dm_test: need at least 10 paired errors");
    std::vector<double> d(n);
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        d[t] = errors_a[t] * errors_a[t] - errors_b[t] * errors_b[t];
        mean += d[t];
    }
    mean /= static_cast<double>(n);
    auto autocov = [&](std::size_t l) {
        double s = 0.0;
        for (std::size_t t = l; t < n; ++t) s += (d[t] - mean) * (d[t - l] - mean);
        return s / static_cast<double>(n);
    };
    double lrv = autocov(0);
    for (std::size_t l = 1; l <= std::min(lag, n - 1); ++l)
        lrv += 2.0 * (1.0 - static_cast<double>(l) / static_cast<double>(lag + 1)) * autocov(l);
    if (!(lrv > 0.0)) return {};
    const double stat = mean / std::sqrt(lrv / static_cast<double>(n));
    return {stat, 2.0 * normal_cdf(-std::abs(stat))};
}

struct ForecastMetricsRow {
    ForecastModel model = ForecastModel::HistAvg;
    std::size_t n = 0;
    double mse = 0.0;
    double mae = 0.0;
    double rel_mse = 1.0;
    std::optional<DmResult> dm;  // absent for the baseline
    double time_per_month = 0.0;
};

/// Accuracy of each run on the months where every run has a forecast, relative
/// to `baseline`, which must be among the runs.
inline std::vector<ForecastMetricsRow> forecast_metrics(const std::vector<ForecastRun>& runs, ForecastModel baseline)
{
    if (runs.empty()) return {};
    const std::size_t n = runs.front().size();
    for (const auto& r : runs)
        if (r.size() != n || r.months != runs.front().months)
            throw DimensionError("forecast_metrics: runs do not share evaluation months");
    const auto base = std::find_if(runs.begin(), runs.end(), [&](const ForecastRun& r) { return r.model == baseline; });
    if (base == runs.end()) throw ConfigError("forecast_metrics: baseline '" + to_string(baseline) + "' not among runs");

    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < n; ++t) {
        bool ok = true;
        for (const auto& r : runs) ok = ok && std::isfinite(r.forecast[t]);
        if (ok) keep.push_back(t);
    }
    auto errors_of = [&](const ForecastRun& r) {
        std::vector<double> e;
        for (auto t : keep) e.push_back(r.forecast[t] - r.actual[t]);
        return e;
    };
    auto mse_of = [](const std::vector<double>& e) {
        double s = 0.0;
        for (double v : e) s += v * v;
        return e.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(e.size());
    };

    const auto base_errors = errors_of(*base);
    const double base_mse = mse_of(base_errors);
    std::vector<ForecastMetricsRow> out;
    for (const auto& r : runs) {
        ForecastMetricsRow row;
        row.model = r.model;
        row.n = keep.size();
        const auto e = errors_of(r);
        row.mse = mse_of(e);
        double abs_sum = 0.0;
        for (double v : e) abs_sum += std::abs(v);
        row.mae = e.empty() ? std::numeric_limits<double>::quiet_NaN() : abs_sum / static_cast<double>(e.size());
        row.rel_mse = &r == &*base ? 1.0 : row.mse / base_mse;
        if (&r != &*base && e.size() >= 10) row.dm = dm_test(e, base_errors);
        double secs = 0.0;
        for (double s : r.seconds) secs += s;
        row.time_per_month = r.seconds.empty() ? 0.0 : secs / static_cast<double>(r.seconds.size());
        out.push_back(row);
    }
    return out;
}

struct ReturnSimOptions {
    std::size_t months = 300;
    Month start = std::chrono::year{2000} / std::chrono::January;
    double mean_log_var = std::log(0.002);  // long-run log monthly variance
    double phi = 0.8;                       // monthly log-variance persistence
    double vol_of_var = 0.5;                // innovation sd of log monthly variance
    std::uint64_t seed = 1;
};

/// Gaussian daily returns on a weekday calendar whose monthly log variance
/// follows a stationary AR(1); each day of month m has variance exp(h_m) / D_m.
inline DailyReturns simulate_daily_returns(const ReturnSimOptions& options = {})
{
    if (options.months < 1) throw ConfigError("simulate_daily_returns: need at least one month");
    if (!(std::abs(options.phi) < 1.0)) throw ConfigError("simulate_daily_returns: phi must lie in (-1, 1)");
    Rng rng(options.seed);
    DailyReturns out;
    const double stationary_sd = options.vol_of_var / std::sqrt(1.0 - options.phi * options.phi);
    double h = options.mean_log_var + stationary_sd * rng.normal();
    for (std::size_t m = 0; m < options.months; ++m) {
        if (m > 0)
            h = options.mean_log_var + options.phi * (h - options.mean_log_var) + options.vol_of_var * rng.normal();
        const Month month = options.start + std::chrono::months{static_cast<int>(m)};
        std::vector<Date> days;
        for (unsigned d = 1; d <= static_cast<unsigned>((month / std::chrono::last).day()); ++d) {
            const Date date = month / std::chrono::day{d};
            const std::chrono::weekday wd{std::chrono::sys_days{date}};
            if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) days.push_back(date);
        }
        const double sd = std::sqrt(std::exp(h) / static_cast<double>(days.size()));
        for (const auto& date : days) {
            out.dates.push_back(date);
            out.returns.push_back(sd * rng.normal());
        }
    }
    return out;
}

} // namespace midas
