#include <gtest/gtest.h>

#include <random>

#include "midas/cavi.hpp"
#include "midas/dgp.hpp"
#include "midas/gibbs.hpp"
#include "support.hpp"

using namespace midas;
using testing_support::oracle_elbo;
using testing_support::random_dataset;
using testing_support::random_state;
using testing_support::rel_diff;

namespace {

EtaBlock eta_block(const Vector& mu, const Matrix& cov)
{
    EtaBlock e;
    e.mu = mu;
    e.cov = SpdCovariance::from_covariance(cov);
    return e;
}

XiBlock xi_block(const Vector& mu, const Matrix& cov)
{
    XiBlock x;
    x.mu = mu;
    x.cov = SpdCovariance::from_covariance(cov);
    return x;
}

} // namespace

TEST(InitState, ZeroResponseGivesZeroMean)
{
    std::mt19937_64 gen(1);
    auto raw = random_dataset(gen, {2, 200, 9, 3, BasisKind::Almon});
    std::vector<PredictorInput> in;
    for (const auto& p : raw.predictors()) in.push_back({p.x, p.basis});
    const MidasDataset data(Vector::Zero(200), std::move(in));
    const auto s = init_state(data, Priors{});
    EXPECT_EQ(s.xi.mu.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_NEAR(s.sigma.a, 0.01 + 100.0, 1e-12);
    EXPECT_NEAR(s.sigma.b, 0.01, 1e-15);
    for (const auto& e : s.etas) {
        EXPECT_EQ(e.mu.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(e.Sigma(), Matrix::Identity(2, 2));
    }
    EXPECT_FALSE(s.init_fallback);
    EXPECT_NEAR(s.xi.Sigma()(0, 0), 100.0, 1e-12);
    EXPECT_NEAR(s.xi.Sigma()(1, 1), 10.0, 1e-12);
}

TEST(InitState, OlsOnUniformAggregates)
{
    std::mt19937_64 gen(2);
    const auto data = random_dataset(gen, {2, 50, 9, 3, BasisKind::Almon});
    Matrix x(50, 3);
    x.col(0).setOnes();
    for (int j = 0; j < 2; ++j) x.col(j + 1) = data.predictor(static_cast<std::size_t>(j)).x.rowwise().mean();
    const Vector ols = (x.transpose() * x).ldlt().solve(x.transpose() * data.y());
    const auto s = init_state(data, Priors{});
    EXPECT_LT((s.xi.mu - ols).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(s.sigma.b, 0.01 + 0.5 * (data.y() - x * ols).squaredNorm(), 1e-9);
}

TEST(InitState, CollinearDesignFallsBack)
{
    const auto b = almon_basis(9, 3);
    std::mt19937_64 gen(3);
    const MidasDataset data(testing_support::random_vector(gen, 30), {{Matrix::Ones(30, 9), b}});
    EXPECT_TRUE(init_state(data, Priors{}).init_fallback);
}

TEST(UpdateEta, ScalarOracle)
{
    // T=1, K=2, P=2: Phi = [[1,0],[1,1]], Phi theta0 = (0.4, 0.6), Phi N = +-(-1, 1)/sqrt(5).
    const Matrix x = (Matrix(1, 2) << 0.7, -1.3).finished();
    const MidasDataset data(Vector::Constant(1, 0.9), {{x, almon_basis(2, 2)}});
    const double c = 0.4 * 0.7 + 0.6 * -1.3;
    const double r = data.predictor(0).reduced.r(0, 0);
    ASSERT_NEAR(data.predictor(0).reduced.c(0), c, 1e-15);
    ASSERT_NEAR(std::abs(r), 2.0 / std::sqrt(5.0), 1e-15);

    Priors pr;
    pr.var_eta = 0.7;
    VariationalState s;
    s.xi = xi_block(Eigen::Vector2d(0.3, 1.7), (Matrix(2, 2) << 0.5, 0.1, 0.1, 0.2).finished());
    s.etas = {eta_block(Vector::Constant(1, 0.4), Matrix::Constant(1, 1, 0.3))};
    s.sigma = {3.0, 2.0};
    const double y = 0.9, e_inv = 1.5;

    // exact expected log joint in eta: -E_inv/2 E_xi[(y - z^T xi)^2] - eta^2/(2 v), z = (1, c + r eta)
    auto f = [&](double eta) {
        const Eigen::Vector2d z(1.0, c + r * eta);
        const double m = y - z.dot(s.xi.mu);
        return -0.5 * e_inv * (m * m + z.dot(s.xi.Sigma() * z)) - eta * eta / (2.0 * pr.var_eta);
    };
    const double f2 = f(1.0) - 2.0 * f(0.0) + f(-1.0);
    const double f1 = 0.5 * (f(1.0) - f(-1.0));
    const auto upd = update_eta(s, data, pr, 0);
    EXPECT_NEAR(upd.Sigma()(0, 0), -1.0 / f2, 1e-12);
    EXPECT_NEAR(upd.mu(0), -f1 / f2, 1e-12);
}

TEST(UpdateEta, PriorReversionWithoutSignal)
{
    const auto b = almon_basis(9, 3);
    const MidasDataset data(Vector::Constant(5, 1.0), {{Matrix::Zero(5, 9), b}});
    VariationalState s;
    s.xi = xi_block(Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(100.0, 10.0).asDiagonal());
    s.etas = {eta_block(Eigen::Vector2d(0.5, 0.5), Matrix::Identity(2, 2) * 0.1)};
    s.sigma = {3.0, 2.0};
    const auto upd = update_eta(s, data, Priors{}, 0);
    EXPECT_LT((upd.Sigma() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(upd.mu.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(UpdateEta, ZeroXiCovarianceIsPlugInRegression)
{
    std::mt19937_64 gen(4);
    const auto data = random_dataset(gen, {2, 25, 9, 3, BasisKind::Almon});
    auto s = random_state(gen, data);
    s.xi.cov = SpdCovariance::from_covariance(Matrix::Zero(3, 3));
    const auto& p = data.predictor(1);
    const double beta = s.xi.mu(2), e_inv = s.sigma.inv_mean();
    // partial residual y - alpha - beta_1 x~1 - beta_2 c
    const Vector xt1 = data.predictor(0).x * weights_from_eta(data.predictor(0).basis, data.predictor(0).rep, s.etas[0].mu);
    const Vector ebar = data.y() - Vector::Constant(25, s.xi.mu(0)) - s.xi.mu(1) * xt1 - beta * p.reduced.c;
    Matrix prec = e_inv * beta * beta * p.reduced.r.transpose() * p.reduced.r;
    prec.diagonal().array() += 1.0;
    const Vector mu = prec.ldlt().solve(e_inv * beta * p.reduced.r.transpose() * ebar);
    const auto upd = update_eta(s, data, Priors{}, 1);
    EXPECT_LT((upd.mu - mu).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((upd.Sigma() - prec.inverse()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(UpdateXi, ConjugateOracle)
{
    std::mt19937_64 gen(5);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Index J = 1 + i % 4;
        const auto data = random_dataset(gen, {J, 10 + i % 30, 9, i % 2 ? 3 : 4, i % 2 ? BasisKind::Almon : BasisKind::BSpline});
        auto s = random_state(gen, data);
        for (auto& e : s.etas) e.cov = SpdCovariance::from_covariance(Matrix::Zero(e.mu.size(), e.mu.size()));
        const double e_inv = s.sigma.inv_mean();
        Matrix X(data.T(), J + 1);
        X.col(0).setOnes();
        for (Eigen::Index j = 0; j < J; ++j) {
            const auto& p = data.predictor(static_cast<std::size_t>(j));
            X.col(j + 1) = p.x * weights_from_eta(p.basis, p.rep, s.etas[static_cast<std::size_t>(j)].mu);
        }
        Matrix prec = e_inv * X.transpose() * X;
        prec.diagonal() += Priors{}.xi_precision_diag(static_cast<std::size_t>(J));
        const Matrix cov = prec.inverse();
        const Vector mu = cov * (e_inv * X.transpose() * data.y());
        const auto upd = update_xi(s, data, Priors{});
        EXPECT_LE((upd.mu - mu).norm(), 1e-10 * mu.norm());
        EXPECT_LE((upd.Sigma() - cov).norm(), 1e-10 * cov.norm());
    }
}

TEST(UpdateXi, ZeroResponseAndPriorDomination)
{
    std::mt19937_64 gen(6);
    const auto raw = random_dataset(gen, {2, 30, 9, 3, BasisKind::Almon});
    auto s = random_state(gen, raw);
    std::vector<PredictorInput> in;
    for (const auto& p : raw.predictors()) in.push_back({p.x, p.basis});
    const MidasDataset zero(Vector::Zero(30), std::move(in));
    EXPECT_EQ(update_xi(s, zero, Priors{}).mu.cwiseAbs().maxCoeff(), 0.0);

    Priors tight;
    tight.var_alpha = 1e-12;
    tight.var_beta = 1e-12;
    const auto upd = update_xi(s, raw, tight);
    EXPECT_LT(upd.mu.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((upd.Sigma() - Matrix::Identity(3, 3) * 1e-12).cwiseAbs().maxCoeff(), 1e-20);
}

TEST(UpdateSigma2, ScalarExample)
{
    const MidasDataset data(Vector::Constant(1, 2.0), {{Matrix::Ones(1, 9), almon_basis(9, 3)}});
    VariationalState s;
    s.xi = xi_block(Eigen::Vector2d(1.0, 0.0), Matrix::Zero(2, 2));
    s.etas = {eta_block(Vector::Zero(2), Matrix::Zero(2, 2))};
    s.sigma = {1.0, 1.0};
    const auto upd = update_sigma2(s, data, Priors{});
    EXPECT_NEAR(upd.b, 0.01 + 0.5, 1e-14);
    EXPECT_NEAR(upd.a, 0.01 + 0.5, 1e-15);
}

TEST(UpdateSigma2, ZeroResiduals)
{
    const MidasDataset data(Vector::Zero(4), {{Matrix::Ones(4, 9), almon_basis(9, 3)}});
    VariationalState s;
    s.xi = xi_block(Eigen::Vector2d(0.0, 0.0), Matrix::Zero(2, 2));
    s.etas = {eta_block(Vector::Zero(2), Matrix::Zero(2, 2))};
    s.sigma = {1.0, 1.0};
    EXPECT_EQ(update_sigma2(s, data, Priors{}).b, 0.01);
}

TEST(UpdateSigma2, MatchesSlotwiseOracle)
{
    std::mt19937_64 gen(7);
    for (int i = 0; i < 30; ++i) {
        const auto data = random_dataset(gen, {3, 15, 9, 3, BasisKind::Almon});
        const auto s = random_state(gen, data);
        double sum = 0.0;
        for (Eigen::Index t = 0; t < data.T(); ++t) sum += testing_support::oracle_expected_sq_residual(s, data, t);
        const auto upd = update_sigma2(s, data, Priors{});
        EXPECT_NEAR(upd.b, 0.01 + 0.5 * sum, 1e-9 * sum);
        EXPECT_GE(upd.b, 0.01);
    }
}

TEST(Elbo, GaussianEntropyOfIdentity)
{
    for (Eigen::Index d = 1; d <= 5; ++d)
        EXPECT_NEAR(gaussian_entropy(d, 0.0), 0.5 * static_cast<double>(d) * (1.0 + std::log(2.0 * std::numbers::pi)),
                    1e-14);
}

TEST(Elbo, TinyInstanceMatchesTermByTermOracle)
{
    const Matrix x = (Matrix(5, 2) << 0.3, 1.1, -0.4, 0.2, 1.5, -0.7, 0.0, 0.9, -1.2, -0.3).finished();
    const Vector y = (Vector(5) << 1.0, -0.5, 2.2, 0.4, -1.1).finished();
    const MidasDataset data(y, {{x, almon_basis(2, 2)}});
    VariationalState s;
    s.xi = xi_block(Eigen::Vector2d(0.2, 0.8), (Matrix(2, 2) << 0.3, -0.05, -0.05, 0.4).finished());
    s.etas = {eta_block(Vector::Constant(1, -0.25), Matrix::Constant(1, 1, 0.6))};
    s.sigma = {4.5, 3.2};
    const Priors pr;
    EXPECT_LT(rel_diff(compute_elbo(s, data, pr), oracle_elbo(s, data, pr)), 1e-12);
}

TEST(Elbo, RandomStatesMatchOracle)
{
    std::mt19937_64 gen(8);
    for (int i = 0; i < 50; ++i) {
        const auto data = random_dataset(gen, {1 + i % 4, 8 + i % 20, 9, 3 + i % 2, BasisKind::Almon});
        const auto s = random_state(gen, data);
        EXPECT_LT(rel_diff(compute_elbo(s, data, Priors{}), oracle_elbo(s, data, Priors{})), 1e-10);
    }
}

TEST(Elbo, ExpectedLogLikelihoodMatchesMonteCarlo)
{
    std::mt19937_64 gen(9);
    const auto data = random_dataset(gen, {2, 12, 9, 3, BasisKind::Almon});
    const auto s = random_state(gen, data);
    const double want = elbo_terms(s, data, Priors{}).loglik;

    Rng rng(99);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vector xi = s.xi.mu + s.xi.cov.lower() * Vector::NullaryExpr(3, [&](Eigen::Index) { return rng.normal(); });
        Vector fitted = Vector::Constant(data.T(), xi(0));
        for (std::size_t j = 0; j < 2; ++j) {
            const auto& e = s.etas[j];
            const Vector eta = e.mu + e.cov.lower() * Vector::NullaryExpr(2, [&](Eigen::Index) { return rng.normal(); });
            const auto& p = data.predictor(j);
            fitted += xi(static_cast<Eigen::Index>(j) + 1) * (p.x * weights_from_eta(p.basis, p.rep, eta));
        }
        const double s2 = rng.inverse_gamma(s.sigma.a, s.sigma.b);
        const double ll = -0.5 * static_cast<double>(data.T()) * std::log(2.0 * std::numbers::pi * s2) -
                          0.5 * (data.y() - fitted).squaredNorm() / s2;
        sum += ll;
        sum2 += ll * ll;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    EXPECT_NEAR(mean, want, 4.0 * se);
}

TEST(CoordinateUpdates, FixedPoints)
{
    std::mt19937_64 gen(10);
    for (int i = 0; i < 20; ++i) {
        const auto data = random_dataset(gen, {2, 20, 9, 3, BasisKind::Almon});
        auto s = random_state(gen, data);
        const Priors pr;
        s.etas[1] = update_eta(s, data, pr, 1);
        const auto again = update_eta(s, data, pr, 1);
        EXPECT_LT((again.mu - s.etas[1].mu).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((again.Sigma() - s.etas[1].Sigma()).cwiseAbs().maxCoeff(), 1e-12);
        s.xi = update_xi(s, data, pr);
        const auto xi2 = update_xi(s, data, pr);
        EXPECT_LT((xi2.mu - s.xi.mu).cwiseAbs().maxCoeff(), 1e-12);
        s.sigma = update_sigma2(s, data, pr);
        const auto sg = update_sigma2(s, data, pr);
        EXPECT_NEAR(sg.b, s.sigma.b, 1e-12 * s.sigma.b);
    }
}

TEST(CoordinateUpdates, LocalOptimalityUnderPerturbation)
{
    std::mt19937_64 gen(11);
    const double delta = 1e-4;
    for (int i = 0; i < 30; ++i) {
        const auto data = random_dataset(gen, {1 + i % 3, 15, 9, 3, BasisKind::Almon});
        auto s = random_state(gen, data);
        const Priors pr;

        s.xi = update_xi(s, data, pr);
        const double base = oracle_elbo(s, data, pr);
        for (Eigen::Index k = 0; k < s.xi.mu.size(); ++k)
            for (double sign : {-1.0, 1.0}) {
                auto p = s;
                p.xi.mu(k) += sign * delta;
                EXPECT_LE(oracle_elbo(p, data, pr), base + 1e-9 * std::abs(base));
            }

        s.etas[0] = update_eta(s, data, pr, 0);
        const double base_eta = oracle_elbo(s, data, pr);
        for (Eigen::Index k = 0; k < s.etas[0].mu.size(); ++k)
            for (double sign : {-1.0, 1.0}) {
                auto p = s;
                p.etas[0].mu(k) += sign * delta;
                EXPECT_LE(oracle_elbo(p, data, pr), base_eta + 1e-9 * std::abs(base_eta));
            }

        s.sigma = update_sigma2(s, data, pr);
        const double base_s = oracle_elbo(s, data, pr);
        for (double sign : {-1.0, 1.0}) {
            auto p = s;
            p.sigma.b *= 1.0 + sign * delta;
            EXPECT_LE(oracle_elbo(p, data, pr), base_s + 1e-9 * std::abs(base_s));
        }
    }
}

TEST(FitCavi, ElboMonotoneOnRandomInstances)
{
    std::mt19937_64 gen(12);
    int violations = 0;
    for (int i = 0; i < 200; ++i) {
        const BasisKind kind = i % 2 ? BasisKind::Almon : BasisKind::BSpline;
        const Eigen::Index P = kind == BasisKind::Almon ? 2 + i % 3 : 4;
        const auto data = random_dataset(gen, {1 + i % 5, 10 + (i * 7) % 90, 9, P, kind});
        const auto fit = fit_cavi(data, Priors{});
        for (std::size_t t = 1; t < fit.elbo_trace.size(); ++t)
            violations += fit.elbo_trace[t] < fit.elbo_trace[t - 1] - 1e-8 * std::abs(fit.elbo_trace[t - 1]);
    }
    EXPECT_EQ(violations, 0);
}

TEST(FitCavi, RecoversBetaOnLargeSample)
{
    auto cfg = baseline_config("t", 1, 400);
    cfg.sigma2 = 0.25;
    cfg.seed = 17;
    const auto sim = simulate(cfg);
    const auto fit = fit_cavi(sim.dataset, Priors{});
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.xi.mu(1), 2.0, 0.1);
}

TEST(FitCavi, BaselineSweepCounts)
{
    for (Eigen::Index J : {1, 3, 5, 10}) {
        auto cfg = baseline_config("t", J, 200);
        cfg.seed = 100 + static_cast<std::uint64_t>(J);
        const auto fit = fit_cavi(simulate(cfg).dataset, Priors{});
        EXPECT_TRUE(fit.converged);
        EXPECT_GE(fit.iters, 3);
        EXPECT_LE(fit.iters, 70);
    }
}

TEST(FitCavi, NonConvergenceIsReported)
{
    auto cfg = baseline_config("t", 3, 100);
    cfg.seed = 5;
    CaviOptions opt;
    opt.max_iters = 1;
    const auto fit = fit_cavi(simulate(cfg).dataset, Priors{}, opt);
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.iters, 1);
}

TEST(FitCavi, PriorReversionForVanishingSignal)
{
    auto cfg = baseline_config("t", 1, 100);
    cfg.seed = 6;
    const auto sim = simulate(cfg);
    std::vector<PredictorInput> in;
    for (const auto& p : sim.dataset.predictors()) in.push_back({p.x * 1e-8, p.basis});
    const MidasDataset data(sim.dataset.y(), std::move(in));
    const auto fit = fit_cavi(data, Priors{});
    EXPECT_LT(fit.etas[0].mu.cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((fit.etas[0].Sigma() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitCavi, OptionsValidation)
{
    CaviOptions o;
    o.tol = 0.0;
    EXPECT_THROW(o.validate(), ConfigError);
    o = {};
    o.max_iters = 0;
    EXPECT_THROW(o.validate(), ConfigError);
}

TEST(CredibleInterval, GaussianAndInverseGamma)
{
    CaviFit fit;
    fit.xi = xi_block(Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(1.0, 4.0).asDiagonal());
    fit.etas = {eta_block(Vector::Zero(2), Matrix::Identity(2, 2))};
    fit.sigma = {5.0, 2.0};
    const auto a = credible_interval(fit, Param::alpha(), 0.95, 1.0);
    EXPECT_NEAR(a.lo, -1.959963984540054, 1e-12);
    EXPECT_NEAR(a.hi, 1.959963984540054, 1e-12);
    const auto b1 = credible_interval(fit, Param::beta(0), 0.95, 1.0);
    const auto b2 = credible_interval(fit, Param::beta(0), 0.95, 2.0);
    EXPECT_NEAR(b2.width(), 2.0 * b1.width(), 1e-12);
    EXPECT_NEAR(0.5 * (b2.lo + b2.hi), 1.0, 1e-12);
    const auto s = credible_interval(fit, Param::sigma2(), 0.9, 3.0);
    EXPECT_NEAR(s.lo, inverse_gamma_quantile(5.0, 2.0, 0.05), 1e-14);
    EXPECT_NEAR(s.hi, inverse_gamma_quantile(5.0, 2.0, 0.95), 1e-14);
    EXPECT_THROW(credible_interval(fit, Param::beta(3), 0.95), std::out_of_range);
    EXPECT_THROW(credible_interval(fit, Param::eta(0, 2), 0.95), std::out_of_range);
    EXPECT_THROW(credible_interval(fit, Param::alpha(), 1.0), std::invalid_argument);
    EXPECT_THROW(credible_interval(fit, Param::alpha(), 0.95, 0.9), std::invalid_argument);
}

TEST(FitCavi, SingleBasisColumnGivesFixedWeights)
{
    auto cfg = baseline_config("flat", 1, 100);
    cfg.P = 1;
    cfg.seed = 17;
    const auto sim = simulate(cfg);
    EXPECT_EQ(sim.dataset.predictor(0).free_dim(), 0);

    const auto fit = fit_cavi(sim.dataset, Priors{}, {});
    EXPECT_TRUE(fit.converged);
    const auto band = cavi_weight_band(fit, sim.dataset, 0, 0.95);
    const double k = static_cast<double>(cfg.K);
    for (Eigen::Index i = 0; i < band.mean.size(); ++i) {
        EXPECT_NEAR(band.mean(i), 1.0 / k, 1e-14);
        EXPECT_EQ(band.lo(i), band.hi(i));
    }

    GibbsOptions o;
    o.n_draws = 200;
    o.burn_in = 50;
    const auto chain = run_gibbs(sim.dataset, Priors{}, o);
    EXPECT_EQ(chain.eta_draws[0].cols(), 0);
    EXPECT_NEAR(gibbs_weight_band(chain, sim.dataset, 0, 0.95).mean.sum(), 1.0, 1e-12);
}
