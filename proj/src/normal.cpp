#include "smm/normal.hpp"

#include <cmath>

#include "smm/errors.hpp"

namespace smm {
namespace {

constexpr double kInvSqrtPi = 5.6418958354775628695e-1;
constexpr double kInvSqrt2 = 7.0710678118654752440e-1;

// Rational coefficients for the three-region erf/erfc approximation
// (Cody, "Rational Chebyshev approximation for the error function").
constexpr double kA[5] = {3.16112374387056560e00, 1.13864154151050156e02,
                          3.77485237685302021e02, 3.20937758913846947e03,
                          1.85777706184603153e-1};
constexpr double kB[4] = {2.36012909523441209e01, 2.44024637934444173e02,
                          1.28261652607737228e03, 2.84423683343917062e03};
constexpr double kC[9] = {5.64188496988670089e-1, 8.88314979438837594e00,
                          6.61191906371416295e01, 2.98635138197400131e02,
                          8.81952221241769090e02, 1.71204761263407058e03,
                          2.05107837782607147e03, 1.23033935479799725e03,
                          2.15311535474403846e-8};
constexpr double kD[8] = {1.57449261107098347e01, 1.17693950891312499e02,
                          5.37181101862009858e02, 1.62138957456669019e03,
                          3.29079923573345963e03, 4.36261909014324716e03,
                          3.43936767414372164e03, 1.23033935480374942e03};
constexpr double kP[6] = {3.05326634961232344e-1, 3.60344899949804439e-1,
                          1.25781726111229246e-1, 1.60837851487422766e-2,
                          6.58749161529837803e-4, 1.63153871373020978e-2};
constexpr double kQ[5] = {2.56852019228982242e00, 1.87295284992346047e00,
                          5.27905102951428412e-1, 6.05183413124413191e-2,
                          2.33520497626869185e-3};

// exp(-y*y) evaluated as exp(-ysq*ysq)*exp(-(y-ysq)(y+ysq)) with ysq a
// 1/16-truncated copy of y; keeps the argument splitting error tiny for
// large y.
double exp_neg_square(double y) {
  const double ysq = std::trunc(y * 16.0) / 16.0;
  const double del = (y - ysq) * (y + ysq);
  return std::exp(-ysq * ysq) * std::exp(-del);
}

// erf on |x| <= 0.46875.
double erf_small(double x) {
  const double z = x * x;
  double num = kA[4] * z;
  double den = z;
  for (int i = 0; i < 3; ++i) {
    num = (num + kA[i]) * z;
    den = (den + kB[i]) * z;
  }
  return x * (num + kA[3]) / (den + kB[3]);
}

// erfc on 0.46875 < y <= 4.
double erfc_mid(double y) {
  double num = kC[8] * y;
  double den = y;
  for (int i = 0; i < 7; ++i) {
    num = (num + kC[i]) * y;
    den = (den + kD[i]) * y;
  }
  return exp_neg_square(y) * (num + kC[7]) / (den + kD[7]);
}

// erfc on y > 4.
double erfc_tail(double y) {
  if (y >= 26.6) return 0.0;  // underflows double
  const double z = 1.0 / (y * y);
  double num = kP[5] * z;
  double den = z;
  for (int i = 0; i < 4; ++i) {
    num = (num + kP[i]) * z;
    den = (den + kQ[i]) * z;
  }
  double r = z * (num + kP[4]) / (den + kQ[4]);
  r = (kInvSqrtPi - r) / y;
  return exp_neg_square(y) * r;
}

double erfc_positive(double y) {
  if (y <= 0.46875) return 1.0 - erf_small(y);
  if (y <= 4.0) return erfc_mid(y);
  return erfc_tail(y);
}

}  // namespace

double erf_rational(double x) {
  if (std::isnan(x)) return x;
  const double y = std::fabs(x);
  if (y <= 0.46875) return erf_small(x);
  const double r = 1.0 - erfc_positive(y);
  return x < 0 ? -r : r;
}

double erfc_rational(double x) {
  if (std::isnan(x)) return x;
  if (x >= 0) return erfc_positive(x);
  return 2.0 - erfc_positive(-x);
}

double normal_cdf(double z) {
  if (std::isnan(z)) return z;
  if (z < 0) return 0.5 * erfc_positive(-z * kInvSqrt2);
  return 1.0 - 0.5 * erfc_positive(z * kInvSqrt2);
}

double normal_log_pdf(double z) { return -0.5 * kLogTwoPi - 0.5 * z * z; }

// PPND16 (Wichura, algorithm AS 241).
double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw InvalidInput("normal_quantile: p must lie strictly inside (0, 1)");
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
              6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
            1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
          1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    const double den =
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
            5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
          4.2313330701600911252e1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    value = num / den;
  }
  return q < 0 ? -value : value;
}

}  // namespace smm
