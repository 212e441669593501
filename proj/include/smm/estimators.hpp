#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "smm/mixture.hpp"
#include "smm/rng.hpp"
#include "smm/samplers.hpp"
#include "smm/signed_log.hpp"

namespace smm {

// Integrand f * p~ evaluated in signed log form.
using SignedLogDensityFn = std::function<SignedLogValue(std::span<const double>)>;
// Log of a (normalized or unnormalized) density; -inf encodes zero.
using LogDensityFn = std::function<double(std::span<const double>)>;
// Plain real-valued function of a point.
using RealFn = std::function<double(std::span<const double>)>;

struct BudgetRecord {
  std::size_t s_plus = 0;
  std::size_t s_minus = 0;
  std::size_t s_safe = 0;
  std::size_t proposals = 0;
  std::size_t acceptances = 0;
};

struct Estimate {
  double value = 0.0;
  BudgetRecord budget;
  // Per-stratum partial sums of the weighted integrand, positive-part strata
  // first, then negative-part, then the safe stratum when present.
  std::vector<double> strata_sums;
  // Samples whose proposal density vanished while the integrand did not.
  std::size_t unbounded_weight_flags = 0;
};

// Unnormalized importance sampling: mean over the batch of
// integrand(x) / proposal(x). A zero proposal density under a nonzero
// integrand throws UnboundedWeight (0/0 contributes 0).
Estimate uis(const SignedLogDensityFn& integrand, const SampleBatch& samples,
             const LogDensityFn& proposal_log_density);

// Difference-of-mixtures importance sampling: budgets floor(z_plus/(z_plus+
// z_minus) * count) and floor(z_minus/(z_plus+z_minus) * count) with the
// remainder to the positive side, stratified draws within each part, and the
// full signed-mixture density in every weight denominator. With no negative
// terms this reduces to uis over the positive part (same draws, same value).
Estimate delta_is(const SignedMixture& model, const SignedLogDensityFn& integrand,
                  std::size_t count, RngStream& rng);

// Isotropic Gaussian safe component mixed into the proposal.
struct SafeProposalSpec {
  double beta = 0.0;  // mixture weight in [0, 1)
  std::vector<double> mean;  // empty = origin
  double stddev = 1.0;
};

// Safe variant: q = (1-beta) q_model + beta q_safe appears in every weight
// denominator; budgets floor((1-beta) count) for the signed part (split as in
// delta_is) and floor(beta count) for the safe stratum. beta = 0 reproduces
// delta_is exactly, draw for draw.
Estimate safe_delta_is(const SignedMixture& model, const SafeProposalSpec& safe,
                       const SignedLogDensityFn& integrand, std::size_t count, RngStream& rng);

// E[1/K | K >= 1] for K ~ Binomial(count, acceptance_rate): the exact
// log-binomial sum for count <= 1e6, the asymptotic 1/(count * rate) above
// that, and exactly 1/count at rate == 1.
double gamma_factor(std::size_t count, double acceptance_rate);

// Plain Monte Carlo over fixed-budget rejection samples. Throws NoAcceptance
// when nothing is accepted.
Estimate rejection_mc(const SignedMixture& model, const RealFn& h, std::size_t budget,
                      RngStream& rng);

// log|value - truth| - log truth, floored at -745; truth must be positive.
double log_relative_error(double value, double truth);

struct ReplicationStats {
  std::size_t requested = 0;
  std::size_t used = 0;       // replications that produced a value
  std::size_t excluded = 0;   // no-acceptance replications
  double mean = 0.0;
  double stddev = 0.0;        // sample stddev over used replications
  double error_mean = 0.0;    // mean of log|estimate - truth| - log truth
  double error_std = 0.0;
  bool has_error = false;
  std::size_t flag_total = 0;
  std::vector<double> values;
};

// Runs the estimator closure over independent substreams 0..count-1 of rng.
// No-acceptance failures are excluded with a count; other errors propagate.
// With a positive truth, per-replication errors log|v - truth| - log truth
// are floored at -745.
ReplicationStats replicate(const std::function<Estimate(RngStream&)>& estimator,
                           std::size_t count, const RngStream& rng,
                           std::optional<double> truth = std::nullopt);

}  // namespace smm
