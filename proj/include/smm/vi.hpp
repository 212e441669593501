#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smm/estimators.hpp"
#include "smm/mixture.hpp"
#include "smm/rng.hpp"
#include "smm/samplers.hpp"
#include "smm/targets.hpp"

namespace smm {

enum class ModelKind { kSquaredSmm, kGmm };

// Learnable parameters. Stddevs live in log-space so every parameter is
// unconstrained. For kSquaredSmm, weights_re/weights_im are the complex
// weight parts (weights_im may be empty for a real-weighted model); for
// kGmm, weights_re holds unconstrained logits mapped to the simplex by
// softmax and weights_im stays empty.
//
// Flat layout (used by gradients and the optimizer):
//   means (K*D) | log_stddevs (K*D) | weights_re (K) | weights_im (K or 0)
struct ParamVector {
  ModelKind kind = ModelKind::kSquaredSmm;
  std::size_t components = 0;
  std::size_t dim = 0;
  std::vector<double> means;
  std::vector<double> log_stddevs;
  std::vector<double> weights_re;
  std::vector<double> weights_im;

  std::size_t flat_size() const;
  // First flat index of the weight block (weight decay applies from here).
  std::size_t weight_offset() const { return 2 * components * dim; }
  std::vector<double> flat() const;
  void set_flat(std::span<const double> values);

  ComplexSmm to_smm() const;       // kind must be kSquaredSmm
  AdditiveMixture to_gmm() const;  // kind must be kGmm
};

// Gradient in the flat layout above.
using Gradient = std::vector<double>;

struct InitSpec {
  double mean_low = -1.0;
  double mean_high = 1.0;
  double stddev_low = 1.0;
  double stddev_high = 3.0;
  bool complex_weights = true;  // squared model: imaginary parts drawn N(0,1)
};

// Means Unif(mean_low, mean_high), stddevs Unif(stddev_low, stddev_high)
// entrywise; real weights Unif(0,1), imaginary weights N(0,1) when enabled.
ParamVector init_squared_smm(std::size_t components, std::size_t dim, const InitSpec& spec,
                             RngStream& rng);

// Initialization ranges per catalog family: hollow targets start with wide
// stddevs (Unif(6,8) at dim 32, Unif(5,7) otherwise), funnel10 with means
// Unif(-4,4) and stddevs Unif(2,4), everything else with the defaults.
InitSpec default_init_spec(const std::string& target_name, std::size_t dim);
// Same mean/stddev draws; logits start at zero (uniform coefficients).
ParamVector init_gmm(std::size_t components, std::size_t dim, const InitSpec& spec,
                     RngStream& rng);

// Exact gradient of the normalized squared-model log-density at x, by a
// reverse sweep through both linear forms and the pairwise normalizer.
// Throws GradientAtZero where the density vanishes.
Gradient grad_log_q(const ParamVector& params, std::span<const double> x);

struct ObjectiveResult {
  double value = 0.0;
  Gradient grad;
};

// Score-function gradient of E_q[log q - log p~] with a leave-one-out
// control variate: (1/S) sum_s [l_s - mean_{l != s}] grad log q(x_s). The
// returned value is the plain batch mean of l_s. Requires S >= 2.
ObjectiveResult rloo_gradient(const ParamVector& params, const LogDensityFn& target_log_density,
                              const SampleBatch& samples);

// Stratified reparameterized objective sum_pairs (w_kj / Z) E[log q - log
// p~] with the expectation under the pair's product Gaussian. Each of the
// K(K+1)/2 strata receives floor(S / strata) draws (the remainder is
// discarded); coefficients, reparameterized paths, and log q are all
// differentiated; log p~ enters through the target's input gradient.
// Requires S >= strata and a target with grad_log_density.
ObjectiveResult delta_vi_objective(const ParamVector& params, const Target& target, std::size_t s,
                                   RngStream& rng);
// Same objective at frozen randomness: z holds strata * draws_per_stratum
// standard-normal vectors of length dim, ordered stratum-major.
ObjectiveResult delta_vi_objective_at(const ParamVector& params, const Target& target,
                                      std::size_t draws_per_stratum, std::span<const double> z);

// The additive-mixture counterpart: sum_k pi_k E_{q_k}[log q - log p~] with
// softmax coefficients, floor(S / K) reparameterized draws per component.
ObjectiveResult selbo_objective(const ParamVector& params, const Target& target, std::size_t s,
                                RngStream& rng);
ObjectiveResult selbo_objective_at(const ParamVector& params, const Target& target,
                                   std::size_t draws_per_stratum, std::span<const double> z);

struct AdamState {
  std::size_t t = 0;
  std::vector<double> m;
  std::vector<double> v;
};

// One Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) with bias
// correction; decoupled weight decay is applied to the weight block only.
// Throws InvalidInput on non-finite gradient entries or size mismatch.
void adam_step(ParamVector& params, const Gradient& grad, AdamState& state, double learning_rate,
               double weight_decay);

enum class Objective { kDeltaVi, kRlooRejection, kRlooArits, kSelboGmm };

struct TrainConfig {
  Objective objective = Objective::kRlooRejection;
  std::size_t samples_per_step = 10'000;
  double learning_rate = 0.01;
  double weight_decay = 0.0;  // weight parameters only
  std::size_t max_steps = 5'000;
  std::size_t patience = 500;  // 0 disables early stopping
  std::size_t checkpoint_count = 5;
  std::size_t reselect_reps = 10;  // fresh loss estimates per kept checkpoint
  // Keep only checkpoints whose re-estimated mean loss exceeds -0.1 (loss is
  // expected nonnegative on normalized targets); falls back to the best mean
  // when every checkpoint fails the filter.
  bool filter_negative_loss = false;
  std::uint64_t seed = 1;
  AritsOptions arits;  // used by kRlooArits
};

struct Checkpoint {
  double train_loss = 0.0;
  std::size_t step = 0;
  ParamVector params;
  double reselect_mean = 0.0;
};

struct TrainResult {
  ParamVector best;
  double best_mean_loss = 0.0;
  std::size_t best_step = 0;
  std::vector<double> loss_trace;    // one entry per executed step
  std::vector<double> step_seconds;  // wallclock per step, kept separate
  std::size_t rollbacks = 0;
  bool early_stopped = false;
  std::vector<Checkpoint> checkpoints;
};

// Value-only loss estimate for a fixed parameter vector, drawing fresh
// randomness: the batch mean of log q - log p~ for the RLOO objectives, the
// stratified objective value otherwise.
double estimate_loss(const ParamVector& params, const Target& target, Objective objective,
                     std::size_t samples, const AritsOptions& arits, RngStream& rng);

// Gradient-descent loop: estimate, update, early-stop on `patience` steps
// without train-loss improvement, keep the checkpoint_count best checkpoints
// by train loss, then re-estimate each kept checkpoint reselect_reps times
// and return the best mean. Steps with a non-finite loss/gradient or a
// failing sampler roll the parameters back; three consecutive rollbacks
// throw TrainingAborted.
TrainResult train(const ParamVector& initial, const Target& target, const TrainConfig& config);

}  // namespace smm
