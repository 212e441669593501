#pragma once

namespace smm {

// Standard normal CDF built on a rational-approximation erfc (Cody's scheme,
// max relative error below 1e-15 in double precision, so the absolute error
// of the CDF stays under 1e-15 for |z| <= 8). For z >= 0 the value is
// 1 - 0.5*erfc(z/sqrt(2)) and for z < 0 it is 0.5*erfc(-z/sqrt(2)), which
// makes normal_cdf(z) + normal_cdf(-z) == 1 hold exactly in floating point.
double normal_cdf(double z);

// Error function / complementary error function used by normal_cdf.
double erf_rational(double x);
double erfc_rational(double x);

// Inverse of normal_cdf (Wichura's PPND16 rational approximation, relative
// error around 1e-15). p must lie in (0, 1).
double normal_quantile(double p);

// Standard normal log-density.
double normal_log_pdf(double z);

inline constexpr double kLogTwoPi = 1.8378770664093454836;

}  // namespace smm
