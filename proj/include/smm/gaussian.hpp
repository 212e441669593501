#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace smm {

// Log-density of N(x; mean, stddev^2) in one dimension.
double gaussian_log_pdf(double x, double mean, double stddev);

// Diagonal Gaussian: per-dimension means and strictly positive stddevs.
class GaussianComponent {
 public:
  GaussianComponent(std::vector<double> mean, std::vector<double> stddev);

  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

  double log_pdf(std::span<const double> x) const;
  // Log-density of the first `prefix_len` dimensions only.
  double log_pdf_prefix(std::span<const double> x, std::size_t prefix_len) const;

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
  // hot-path caches: 1/stddev and the per-dimension additive constant
  // -0.5 log(2 pi) - log(stddev)
  std::vector<double> inv_stddev_;
  std::vector<double> dim_const_;
};

// log of integral N(x; c1) N(x; c2) dx, which factorizes over dimensions as
// prod_d N(mean1_d; mean2_d, stddev1_d^2 + stddev2_d^2).
double log_pairwise_mass(const GaussianComponent& c1, const GaussianComponent& c2);
double pairwise_mass(const GaussianComponent& c1, const GaussianComponent& c2);

// The renormalized product N(x; c1) N(x; c2) / mass: per dimension
// s^2 = (s1^-2 + s2^-2)^-1 and m = s^2 (m1/s1^2 + m2/s2^2).
GaussianComponent product_gaussian(const GaussianComponent& c1, const GaussianComponent& c2);

}  // namespace smm
