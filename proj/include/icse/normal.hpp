#pragma once

#include <cstdint>

namespace icse {

double normal_pdf(double x);
double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate for large x.
double normal_sf(double x);
double normal_quantile(double p);

/// Draw from N(mean, sd^2) truncated to [lower, +inf) by inverse CDF,
/// given a uniform u in (0,1).
double truncated_normal_lower(double mean, double sd, double lower, double u);

/// E[X | X >= lower] for X ~ N(mean, sd^2).
double truncated_normal_mean(double mean, double sd, double lower);

}  // namespace icse
