#pragma once

namespace spinescan::special {

double log_beta(double a, double b);

// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double incomplete_beta(double x, double a, double b);

double f_cdf(double x, double d1, double d2);
// Inverse of f_cdf by bisection on the beta variable.
double f_quantile(double p, double d1, double d2);

double normal_cdf(double z);

}  // namespace spinescan::special
