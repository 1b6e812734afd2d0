#pragma once

#include <utility>

namespace svi {

// ln C(n, k) via lgamma; exact-ish for the huge coefficients that appear in
// sample-size polynomials. Requires 0 <= k <= n.
double log_binomial(long n, long k);

// Standard normal CDF, survival function and quantile. The quantile is
// Wichura's PPND16 rational approximation (full double precision).
double normal_cdf(double z);
double normal_sf(double z);
double normal_quantile(double p);

// Regularized incomplete beta I_x(a, b) and its inverse in x.
double betainc(double a, double b, double x);
double betainc_inv(double a, double b, double p);

// Exact (Clopper-Pearson) two-sided binomial confidence interval for k
// successes out of n at the given confidence level.
std::pair<double, double> clopper_pearson(long k, long n, double confidence);

}  // namespace svi
