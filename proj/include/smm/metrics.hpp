#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>

#include "smm/estimators.hpp"
#include "smm/mixture.hpp"
#include "smm/rng.hpp"
#include "smm/samplers.hpp"
#include "smm/targets.hpp"

namespace smm {

// A trained model reduced to what the divergence estimators need: a
// normalized log-density and a sampler.
struct ModelView {
  std::size_t dim = 0;
  LogDensityFn log_density;
  std::function<SampleBatch(std::size_t, RngStream&)> sample;
};

enum class ModelSampler { kRejection, kArits };

// Squared model view; sampling goes through the expansion, by exact-count
// rejection (default) or inverse-transform per the route.
ModelView make_smm_view(std::shared_ptr<const ComplexSmm> model,
                        ModelSampler route = ModelSampler::kRejection,
                        const AritsOptions& arits = {});
// Additive-mixture view; ancestral sampling.
ModelView make_gmm_view(std::shared_ptr<const AdditiveMixture> mixture);

struct MetricReport {
  std::string metric;
  double value = 0.0;   // mean across repetitions
  double stddev = 0.0;  // sample stddev across repetitions; 0 when reps == 1
  std::size_t samples = 0;
  std::size_t repetitions = 0;
  // Samples whose log-ratio came out infinite (density underflow on the
  // denominator side).
  std::size_t infinite_contributions = 0;
  // Set when a KL estimate lands below -3 stderr of zero, which a correct
  // nonnegative divergence should not do.
  bool negative_suspect = false;
};

// Forward KL estimate: mean over reps of (1/S) sum log p(x)/q(x), x ~ p.
// Needs the target's exact sampler and normalizer. Repetition r uses
// rng.substream(r).
MetricReport estimate_fkl(const Target& target, const ModelView& model, std::size_t samples,
                          std::size_t reps, RngStream& rng);

// Reverse KL estimate: mean over reps of (1/S) sum log q(x)/p(x), x ~ q.
// Needs the target normalizer.
MetricReport estimate_rkl(const Target& target, const ModelView& model, std::size_t samples,
                          std::size_t reps, RngStream& rng);

// ELBO estimate: mean over reps of -(1/S) sum log(q(x)/p~(x)), x ~ q. Works
// with unnormalized targets.
MetricReport estimate_elbo(const Target& target, const ModelView& model, std::size_t samples,
                           std::size_t reps, RngStream& rng);

}  // namespace smm
