#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smm/mixture.hpp"
#include "smm/rng.hpp"
#include "smm/samplers.hpp"

namespace smm {

// Evaluable target density with analytic input gradient. log_density is the
// unnormalized log p~; exact_log_z, when present, is log of its integral.
// Squared-mixture targets additionally expose their model form and its
// cached expansion; functional fields may be empty for targets without an
// exact sampler.
struct Target {
  std::string name;
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> log_density;
  std::function<std::vector<double>(std::span<const double>)> grad_log_density;
  std::optional<double> exact_log_z;
  std::function<SampleBatch(std::size_t, RngStream&)> exact_sampler;
  std::shared_ptr<const ComplexSmm> smm_form;
  std::shared_ptr<const SignedMixture> expanded;
};

// Built-in catalog: gmm3, gmm4, funnel2, funnel10, ring, deep_ring,
// hollow16, hollow32, hollow64. Throws UnsupportedTarget for other names.
Target make_catalog_target(const std::string& name);
const std::vector<std::string>& catalog_names();

// Bayesian logistic regression posterior: Bernoulli likelihood through a
// sigmoid link plus a standard normal prior on the weights. Labels in
// {0, 1}; every covariate row must have the same width, which becomes the
// target dimension.
Target make_blr_target(std::vector<int> labels, std::vector<std::vector<double>> covariates);

// CSV ingestion for the above: header row, label column named "y", all other
// columns numeric covariates. add_bias appends a constant-1 covariate.
Target make_blr_target_from_csv(const std::string& path, bool add_bias);

// Nonnegative weighted sum of diagonal Gaussian densities (not normalized).
struct WeightedGaussianSum {
  std::vector<double> weights;
  std::vector<GaussianComponent> components;

  double value(std::span<const double> x) const;
  double log_value(std::span<const double> x) const;  // -inf when every term underflows
};

// Random estimation problem: a squared proposal with at least one negative
// expanded coefficient, a positive integrand f, and the closed-form
// E_q[f] > 0 it should reproduce.
struct Rq1Instance {
  std::shared_ptr<const ComplexSmm> proposal;
  std::shared_ptr<const SignedMixture> expanded;
  WeightedGaussianSum integrand;
  double exact_expectation = 0.0;
};

// Draws means Unif(-0.5, 0.5), stddevs Unif(2, 3), and real weights
// Unif(-1, 1) for k components in `dim` dimensions, resampling (at most
// 10^4 tries) until the expansion has a negative term; the integrand is 100
// Gaussians with standard normal means, stddevs Unif(1, 2), and weights
// Unif(1e4, 1e5).
Rq1Instance make_rq1_instance(std::size_t dim, std::size_t k, RngStream& rng);

// Copy of `model` with every stddev entry multiplied by exp(scale * Z),
// Z standard normal per entry; means and weights unchanged.
ComplexSmm perturb_proposal(const ComplexSmm& model, double scale, RngStream& rng);

}  // namespace smm
