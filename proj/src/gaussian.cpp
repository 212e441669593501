#include "smm/gaussian.hpp"

#include <cmath>
#include <utility>

#include "smm/errors.hpp"
#include "smm/normal.hpp"

namespace smm {

double gaussian_log_pdf(double x, double mean, double stddev) {
  const double t = (x - mean) / stddev;
  return -0.5 * kLogTwoPi - std::log(stddev) - 0.5 * t * t;
}

GaussianComponent::GaussianComponent(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  if (mean_.empty() || mean_.size() != stddev_.size()) {
    throw InvalidInput("GaussianComponent: mean and stddev must be nonempty and equal-length");
  }
  inv_stddev_.reserve(mean_.size());
  dim_const_.reserve(mean_.size());
  for (std::size_t d = 0; d < mean_.size(); ++d) {
    if (!std::isfinite(mean_[d])) {
      throw InvalidInput("GaussianComponent: non-finite mean entry");
    }
    if (!(stddev_[d] > 0.0) || !std::isfinite(stddev_[d])) {
      throw InvalidInput("GaussianComponent: stddev entries must be positive and finite");
    }
    inv_stddev_.push_back(1.0 / stddev_[d]);
    dim_const_.push_back(-0.5 * kLogTwoPi - std::log(stddev_[d]));
  }
}

double GaussianComponent::log_pdf(std::span<const double> x) const {
  return log_pdf_prefix(x, dim());
}

double GaussianComponent::log_pdf_prefix(std::span<const double> x, std::size_t prefix_len) const {
  if (x.size() < prefix_len || prefix_len > dim()) {
    throw InvalidInput("GaussianComponent::log_pdf_prefix: prefix length out of range");
  }
  double acc = 0.0;
  for (std::size_t d = 0; d < prefix_len; ++d) {
    const double t = (x[d] - mean_[d]) * inv_stddev_[d];
    acc += dim_const_[d] - 0.5 * t * t;
  }
  return acc;
}

double log_pairwise_mass(const GaussianComponent& c1, const GaussianComponent& c2) {
  if (c1.dim() != c2.dim()) {
    throw InvalidInput("log_pairwise_mass: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t d = 0; d < c1.dim(); ++d) {
    const double s1 = c1.stddev()[d];
    const double s2 = c2.stddev()[d];
    const double var = s1 * s1 + s2 * s2;
    const double diff = c1.mean()[d] - c2.mean()[d];
    acc += -0.5 * kLogTwoPi - 0.5 * std::log(var) - 0.5 * diff * diff / var;
  }
  return acc;
}

double pairwise_mass(const GaussianComponent& c1, const GaussianComponent& c2) {
  return std::exp(log_pairwise_mass(c1, c2));
}

GaussianComponent product_gaussian(const GaussianComponent& c1, const GaussianComponent& c2) {
  if (c1.dim() != c2.dim()) {
    throw InvalidInput("product_gaussian: dimension mismatch");
  }
  const std::size_t dim = c1.dim();
  std::vector<double> mean(dim);
  std::vector<double> stddev(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const double v1 = c1.stddev()[d] * c1.stddev()[d];
    const double v2 = c2.stddev()[d] * c2.stddev()[d];
    const double vsum = v1 + v2;
    mean[d] = (c1.mean()[d] * v2 + c2.mean()[d] * v1) / vsum;
    stddev[d] = c1.stddev()[d] * c2.stddev()[d] / std::sqrt(vsum);
  }
  return GaussianComponent(std::move(mean), std::move(stddev));
}

}  // namespace smm
