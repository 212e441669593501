#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "smm/estimators.hpp"
#include "smm/mixture.hpp"
#include "smm/rng.hpp"
#include "smm/samplers.hpp"
#include "smm/targets.hpp"

namespace smm {

// Runs fn(0..n-1), spreading work over up to `threads` workers (serial when
// threads <= 1). fn must be safe to call concurrently; exceptions propagate
// after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// One single-run experiment cell (schema: experiment, method, D, K, S, seed,
// error, time_s, flags).
struct ExperimentRow {
  std::string experiment;
  std::string method;
  std::size_t d = 0;
  std::size_t k = 0;
  std::size_t s = 0;
  std::uint64_t seed = 0;
  double error = 0.0;   // log|estimate - truth| - log truth
  double time_s = 0.0;  // sampling + weighting only
  std::string flags;
};

// One replicated cell (schema: method, S, R, mean, stddev, error_mean,
// error_std, flags).
struct ReplicationRow {
  std::string method;
  std::size_t s = 0;
  std::size_t r = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double error_mean = 0.0;
  double error_std = 0.0;
  std::string flags;
};

ReplicationRow make_replication_row(std::string method, std::size_t s,
                                    const ReplicationStats& stats);

// ---- Estimator scaling on random instances ----

struct Rq1Options {
  std::size_t dim = 16;
  std::size_t components = 2;
  std::vector<std::size_t> budgets = {10'000, 100'000, 1'000'000};  // strictly increasing
  std::size_t instances = 5;
  std::size_t warmup_calls = 1;  // untimed calls per method before the grid
  std::size_t threads = 1;
  AritsOptions arits;
};

struct Rq1Aggregate {
  std::string method;
  std::size_t s = 0;
  double error_mean = 0.0;
  double error_std = 0.0;
  double time_mean = 0.0;
  double time_std = 0.0;
  std::size_t cells = 0;  // instances that produced a value
};

struct Rq1Result {
  std::vector<ExperimentRow> rows;
  std::vector<Rq1Aggregate> aggregates;
};

// Per instance: signed-mixture importance sampling and fixed-budget
// rejection at every budget, inverse-transform sampling at the smallest
// budget only; single run per cell, wallclock timed around the call.
Rq1Result run_rq1(const Rq1Options& options, RngStream& rng);

// ---- Safe-component grid study ----

struct SafeStudyOptions {
  std::string target_name = "deep_ring";
  std::vector<double> betas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> sigmas = {3.0, 5.0, 7.0, 9.0};
  std::size_t samples = 10'000;
  std::size_t reps = 30;
  double perturb_scale = 0.01;  // stddev noise on the proposal
  std::size_t threads = 1;
};

struct SafeCell {
  double beta = 0.0;
  double sigma = 0.0;
  ReplicationStats stats;
};

struct SafeStudyResult {
  std::vector<SafeCell> cells;  // beta-major grid order
  std::vector<ReplicationRow> rows;
  double best_beta = 0.0;
  double best_sigma = 0.0;
  double best_variance = 0.0;
};

// Estimates the target's normalizer with a stddev-perturbed copy of the
// target as proposal, sweeping (beta, sigma) over the safe-component grid.
// Every cell replicates over the same substreams, so the beta = 0 column
// reproduces the plain signed estimator draw for draw. The best cell
// minimizes the empirical variance across replications.
SafeStudyResult run_safe_study(const SafeStudyOptions& options, RngStream& rng);

// ---- Normalizing-constant estimation with a given proposal ----

struct NcOptions {
  double scale_c = 1.0;  // integrand is c * normalized target; truth = c
  std::size_t samples = 10'000;
  std::size_t reps = 30;
  double safe_beta = 0.1;
  double safe_sigma = 3.0;  // <= 0 skips the safe method
  bool include_arits = true;
  std::size_t arits_max_dim = 32;
  AritsOptions arits;
  std::size_t threads = 1;
};

struct NcResult {
  std::vector<ReplicationRow> rows;
};

// Methods: uis_rejection, uis_arits (dim-capped), delta_is, safe_delta_is,
// and uis_gmm when a mixture proposal is supplied. Per-method failures are
// recorded in the row's flags.
NcResult run_nc_estimation(const Target& target, std::shared_ptr<const ComplexSmm> smm_proposal,
                           std::shared_ptr<const AdditiveMixture> gmm_proposal,
                           const NcOptions& options, RngStream& rng);

}  // namespace smm
