#include "icse/normal.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>

namespace icse {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double normal_quantile(double p)
{
    if (p <= 0.0) return -INFINITY;
    if (p >= 1.0) return INFINITY;
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double truncated_normal_lower(double mean, double sd, double lower, double u)
{
    const double a = (lower - mean) / sd;
    double z;
    if (a < 0.0) {
        // Lower bound below the mean: invert the CDF on [Phi(a), 1).
        const double pa = normal_cdf(a);
        z = normal_quantile(pa + u * (1.0 - pa));
    } else {
        // Invert through the upper tail to keep precision when Phi(a) ~ 1.
        const double qa = normal_sf(a);
        if (qa > 1e-300) {
            z = -normal_quantile(u * qa);
        } else {
            // Exponential approximation of the far tail.
            z = a - std::log(u) / a;
        }
    }
    if (z < a) z = a;
    return mean + sd * z;
}

double truncated_normal_mean(double mean, double sd, double lower)
{
    const double a = (lower - mean) / sd;
    const double tail = normal_sf(a);
    if (tail < 1e-300) return mean + sd * (a + 1.0 / a);  // Mills ratio asymptote
    return mean + sd * normal_pdf(a) / tail;
}

}  // namespace icse
