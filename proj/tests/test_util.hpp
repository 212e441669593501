#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "smm/mixture.hpp"
#include "smm/rng.hpp"

namespace testutil {

// Composite Simpson rule over [a, b] with n intervals (n forced even).
inline double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n) {
  if (n % 2 == 1) ++n;
  const double h = (b - a) / static_cast<double>(n);
  double odd = 0.0, even = 0.0;
  for (std::size_t i = 1; i < n; i += 2) odd += f(a + h * static_cast<double>(i));
  for (std::size_t i = 2; i < n; i += 2) even += f(a + h * static_cast<double>(i));
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

// Tensor-product Simpson rule on [ax, bx] x [ay, by].
inline double simpson2d(const std::function<double(double, double)>& f, double ax, double bx,
                        double ay, double by, std::size_t nx, std::size_t ny) {
  // inner integrals along y for each x node, then Simpson along x
  return simpson(
      [&](double x) {
        return simpson([&](double y) { return f(x, y); }, ay, by, ny);
      },
      ax, bx, nx);
}

// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double c = cdf(sample[i]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    worst = std::max(worst, std::max(std::fabs(c - lo), std::fabs(c - hi)));
  }
  return worst;
}

inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// erf via its Maclaurin series in long double; alternating terms keep the
// cancellation error below ~e^{x^2} * 1e-19, so the result is good to well
// under 1e-16 relative for x <= 2.5.
inline long double erf_series_ld(long double x) {
  long double term = x, sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const long double inc = term / (2 * n + 1);
    sum += inc;
    if (fabsl(inc) < 1e-25L * fabsl(sum)) break;
  }
  return sum * 2.0L / sqrtl(acosl(-1.0L));
}

// erfc via the Legendre continued fraction (modified Lentz, forced past the
// spurious first-step fixed point); accurate for x >= 1.5.
inline long double erfc_cf_ld(long double x) {
  long double f = x, C = f, D = 0.0L;
  for (int i = 1; i < 500; ++i) {
    const long double a = i * 0.5L;
    D = x + a * D;
    if (D == 0.0L) D = 1e-40L;
    C = x + a / C;
    if (C == 0.0L) C = 1e-40L;
    D = 1.0L / D;
    const long double delta = C * D;
    f *= delta;
    if (i > 8 && fabsl(delta - 1.0L) < 1e-21L) break;
  }
  return expl(-x * x) / sqrtl(acosl(-1.0L)) / f;
}

inline long double erfc_ld(long double x) {
  if (x < 0.0L) return 2.0L - erfc_ld(-x);
  if (x < 2.0L) return 1.0L - erf_series_ld(x);
  return erfc_cf_ld(x);
}

inline long double erf_ld(long double x) {
  if (x < 0.0L) return -erf_ld(-x);
  if (x < 2.0L) return erf_series_ld(x);
  return 1.0L - erfc_cf_ld(x);
}

// Standard normal CDF in long double, independent of the library's erfc.
inline long double normal_cdf_ld(long double z) {
  return 0.5L * erfc_ld(-z / sqrtl(2.0L));
}

// CDF of a one-dimensional signed mixture, evaluated from its expanded terms
// with the long-double erfc above.
inline double signed_mixture_cdf(const smm::SignedMixture& model, double t) {
  long double acc = 0.0L;
  for (const auto& c : model.positives()) {
    const long double z = (t - c.gaussian.mean()[0]) / c.gaussian.stddev()[0];
    acc += static_cast<long double>(c.weight) * normal_cdf_ld(z);
  }
  for (const auto& c : model.negatives()) {
    const long double z = (t - c.gaussian.mean()[0]) / c.gaussian.stddev()[0];
    acc -= static_cast<long double>(c.weight) * normal_cdf_ld(z);
  }
  return static_cast<double>(acc / static_cast<long double>(model.z()));
}

// Random squared model: means Unif(-2, 2), stddevs Unif(0.5, 2), real parts
// Unif(-1, 1) and, when complex, imaginary parts Unif(-1, 1).
inline smm::ComplexSmm random_smm(std::size_t dim, std::size_t k, bool complex_weights,
                                  smm::RngStream& rng) {
  std::vector<smm::GaussianComponent> comps;
  std::vector<std::complex<double>> weights;
  comps.reserve(k);
  weights.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> mean(dim), sd(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      mean[d] = -2.0 + 4.0 * rng.next_uniform();
      sd[d] = 0.5 + 1.5 * rng.next_uniform();
    }
    comps.emplace_back(std::move(mean), std::move(sd));
    const double re = -1.0 + 2.0 * rng.next_uniform();
    const double im = complex_weights ? -1.0 + 2.0 * rng.next_uniform() : 0.0;
    weights.emplace_back(re, im);
  }
  return smm::ComplexSmm(std::move(comps), std::move(weights));
}

}  // namespace testutil
