#include <gtest/gtest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "midas/special.hpp"

using namespace midas;

TEST(Digamma, MatchesBoostAcrossRange)
{
    for (double x = 1e-3; x < 2000.0; x *= 1.07) {
        const double want = boost::math::digamma(x);
        EXPECT_NEAR(digamma(x), want, 1e-12 * std::max(1.0, std::abs(want))) << "x=" << x;
    }
}

TEST(Digamma, KnownValues)
{
    EXPECT_NEAR(digamma(1.0), -0.57721566490153286, 1e-14);
    EXPECT_NEAR(digamma(0.5), -1.9635100260214235, 1e-14);
}

TEST(NormalQuantile, StandardValues)
{
    EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
    EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
    EXPECT_NEAR(normal_cdf(normal_quantile(0.2)), 0.2, 1e-14);
}

TEST(InverseGammaQuantile, InvertsTheDistributionFunction)
{
    for (double shape : {0.5, 2.0, 30.0})
        for (double rate : {0.01, 1.0, 7.5})
            for (double p : {0.025, 0.5, 0.975}) {
                const double q = inverse_gamma_quantile(shape, rate, p);
                // P(X <= q) = P(1/X >= 1/q) with 1/X ~ Gamma(shape, rate)
                EXPECT_NEAR(boost::math::gamma_q(shape, rate / q), p, 1e-12);
            }
}
