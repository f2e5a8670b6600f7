#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>

namespace midas {

/// Digamma function psi(x); NaN for x <= 0.
inline double digamma(double x)
{
    if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return boost::math::digamma(x);
}

inline double normal_quantile(double p)
{
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_cdf(double x)
{
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Quantile of Inverse-Gamma(shape, rate): if s2 ~ IG(a, b) then 1/s2 ~ Gamma(a, rate b).
inline double inverse_gamma_quantile(double shape, double rate, double p)
{
    if (!(shape > 0.0) || !(rate > 0.0) || !(p > 0.0) || !(p < 1.0))
        throw std::domain_error("inverse_gamma_quantile: invalid arguments");
    const boost::math::gamma_distribution<double> precision(shape, 1.0 / rate);
    return 1.0 / boost::math::quantile(precision, 1.0 - p);
}

} // namespace midas
