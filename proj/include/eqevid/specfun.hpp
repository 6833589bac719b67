#pragma once

// Scalar special functions for the Student-t likelihood and calibration CDFs.
// All throw DomainError outside their domain.

namespace eqevid {

/// log Gamma(x), x > 0. Lanczos, g = 7, nine coefficients.
double ln_gamma(double x);

/// d/dx log Gamma(x), x > 0.
double digamma(double x);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double reg_gamma_lower(double a, double x);

/// Regularized incomplete beta I_x(a, b), x in [0,1], a, b > 0.
double reg_beta(double x, double a, double b);

double softplus(double x);
/// Derivative of softplus.
double sigmoid(double x);

/// CDF of chi-squared with k degrees of freedom.
double chi2_cdf(double x, double k);

/// CDF of the F(d1, d2) distribution.
double f_cdf(double x, double d1, double d2);

} // namespace eqevid
