#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "smm/gaussian.hpp"

namespace smm {

// Convex combination of diagonal Gaussians (used for the positive/negative
// parts of an expanded model and for the GMM baseline).
class AdditiveMixture {
 public:
  AdditiveMixture(std::vector<double> coeffs, std::vector<GaussianComponent> components);

  std::size_t dim() const { return components_.front().dim(); }
  std::size_t size() const { return components_.size(); }
  const std::vector<double>& coeffs() const { return coeffs_; }
  const std::vector<GaussianComponent>& components() const { return components_; }

  double log_density(std::span<const double> x) const;

 private:
  std::vector<double> coeffs_;
  std::vector<GaussianComponent> components_;
};

// One expanded pairwise term: weight * N(x; gaussian), tagged with the
// originating component pair (k <= j).
struct SignedComponent {
  double weight;  // magnitude; the sign lives in which list holds the term
  GaussianComponent gaussian;
  std::pair<std::size_t, std::size_t> pair;
};

// The expansion of a squared model into a difference of two additive
// mixtures: q = (z_plus * q_plus - z_minus * q_minus) / z.
class SignedMixture {
 public:
  SignedMixture(std::size_t dim, std::vector<SignedComponent> positives,
                std::vector<SignedComponent> negatives);

  std::size_t dim() const { return dim_; }
  const std::vector<SignedComponent>& positives() const { return positives_; }
  const std::vector<SignedComponent>& negatives() const { return negatives_; }
  std::size_t pair_count() const { return positives_.size() + negatives_.size(); }

  double z_plus() const { return z_plus_; }
  double z_minus() const { return z_minus_; }
  double z() const { return z_; }
  double log_z() const { return log_z_; }
  // Expected rejection acceptance rate z / z_plus.
  double acceptance_rate() const { return z_ / z_plus_; }

  // Normalized positive / negative parts. The negative part requires
  // z_minus > 0.
  AdditiveMixture positive_part() const;
  AdditiveMixture negative_part() const;

  // Normalized density and log-density via the signed pairwise sum. Points
  // where cancellation drives the sum nonpositive report density 0
  // (log-density -inf); the log form never returns NaN.
  double density(std::span<const double> x) const;
  double log_density(std::span<const double> x) const;

  // Evidence of the first prefix.size() dimensions:
  // sum_pairs (w/Z) prod_{i<d} N(prefix_i; ...). Returns 1 for an empty
  // prefix.
  double marginal_evidence(std::span<const double> prefix) const;

  // CDF of dimension prefix.size() at t, conditioned on the prefix. Clamped
  // to [0, 1]. Throws DegenerateConditioning when the prefix evidence is 0.
  double conditional_cdf(std::span<const double> prefix, double t) const;

 private:
  std::size_t dim_;
  std::vector<SignedComponent> positives_;
  std::vector<SignedComponent> negatives_;
  double z_plus_;
  double z_minus_;
  double z_;
  double log_z_;
};

// Squared mixture with complex weights: q(x) = |sum_k alpha_k N_k(x)|^2 / Z,
// i.e. the sum of squares of the real and imaginary linear forms.
class ComplexSmm {
 public:
  ComplexSmm(std::vector<GaussianComponent> components,
             std::vector<std::complex<double>> weights);

  static ComplexSmm real_weighted(std::vector<GaussianComponent> components,
                                  std::vector<double> weights);

  std::size_t dim() const { return components_.front().dim(); }
  std::size_t size() const { return components_.size(); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const std::vector<std::complex<double>>& weights() const { return weights_; }

  double z() const { return z_; }
  double z_plus() const { return z_plus_; }
  double z_minus() const { return z_minus_; }
  double log_z() const { return log_z_; }

  // Normalized log-density, computed in log domain from the two linear
  // forms: log((Re form)^2 + (Im form)^2) - log Z. Returns -inf exactly
  // where both forms vanish.
  double log_density(std::span<const double> x) const;

 private:
  std::vector<GaussianComponent> components_;
  std::vector<std::complex<double>> weights_;
  double z_plus_;
  double z_minus_;
  double z_;
  double log_z_;
};

// Expands the square into signed pairwise terms
//   w_kj = Re(alpha_k conj(alpha_j)) * mass(N_k, N_j) * (2 if k != j else 1)
// with the renormalized product Gaussian attached to each term. Terms with
// |w| < 1e-300 are dropped.
SignedMixture expand(const ComplexSmm& model);

}  // namespace smm
