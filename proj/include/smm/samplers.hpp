#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "smm/mixture.hpp"
#include "smm/rng.hpp"

namespace smm {

// Row-major sample matrix plus provenance metadata.
struct SampleBatch {
  std::size_t dim = 0;
  std::vector<double> points;              // rows * dim
  std::vector<std::int32_t> component;     // origin component per row, when meaningful
  std::size_t proposals = 0;               // rejection: proposals consumed

  std::size_t rows() const { return dim == 0 ? 0 : points.size() / dim; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(points.data() + i * dim, dim);
  }
};

// Latent-variable sampling for additive mixtures: component index from the
// coefficients, then the diagonal Gaussian.
SampleBatch ancestral_sample(const AdditiveMixture& mixture, std::size_t count, RngStream& rng);

// Per-component budgets: floor(coeff * count) each, leftovers assigned one
// apiece in descending-coefficient order with ties broken by index.
std::vector<std::size_t> stratified_allocation(const AdditiveMixture& mixture, std::size_t count);

// Draws exactly the stratified allocation, grouped by component.
SampleBatch stratified_sample(const AdditiveMixture& mixture, std::size_t count, RngStream& rng);

struct AritsOptions {
  double lower = -100.0;
  double upper = 100.0;
  double tol = 1e-6;  // binary-search interval width at which to stop
};

// Autoregressive inverse-transform sampling: one uniform per dimension,
// inverted through the conditional CDF by bisection. Validates once per call
// that [lower, upper] holds all but <= 1e-12 of each dimension's mass and
// throws BoundsTooTight naming the offending dimension otherwise.
SampleBatch arits_sample(const SignedMixture& model, std::size_t count, const AritsOptions& options,
                         RngStream& rng);

// Fixed-budget rejection sampling with proposals from the positive part and
// envelope constant M = z_plus / z. Returns the accepted rows; the batch
// records the proposal count.
SampleBatch rejection_sample(const SignedMixture& model, std::size_t budget, RngStream& rng);

// Rejection sampling that loops fixed-size rounds until exactly `count`
// acceptances. Throws InsufficientAcceptance (with the observed rate) once
// more than max_proposals proposals would be needed.
SampleBatch rejection_sample_exact_n(const SignedMixture& model, std::size_t count,
                                     std::size_t max_proposals, RngStream& rng);

}  // namespace smm
