#include "smm/metrics.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "smm/errors.hpp"
#include "smm/signed_log.hpp"

namespace smm {

namespace {

struct RepAccumulator {
  std::vector<double> rep_means;
  std::size_t infinite = 0;
};

MetricReport summarize(std::string name, const RepAccumulator& acc, std::size_t samples,
                       bool check_nonnegative) {
  MetricReport report;
  report.metric = std::move(name);
  report.samples = samples;
  report.repetitions = acc.rep_means.size();
  report.infinite_contributions = acc.infinite;

  NeumaierSum mean_sum;
  for (double v : acc.rep_means) mean_sum.add(v);
  report.value = mean_sum.result() / static_cast<double>(acc.rep_means.size());
  if (acc.rep_means.size() > 1) {
    NeumaierSum ss;
    for (double v : acc.rep_means) ss.add((v - report.value) * (v - report.value));
    report.stddev = std::sqrt(ss.result() / static_cast<double>(acc.rep_means.size() - 1));
    if (check_nonnegative) {
      const double stderr_reps =
          report.stddev / std::sqrt(static_cast<double>(acc.rep_means.size()));
      report.negative_suspect = report.value < -3.0 * stderr_reps;
    }
  }
  return report;
}

// Mean over one batch of log_num(x) - log_den(x); -inf denominators count as
// infinite contributions.
double batch_log_ratio_mean(const SampleBatch& batch, const LogDensityFn& log_num,
                            const LogDensityFn& log_den, std::size_t& infinite) {
  NeumaierSum acc;
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const auto row = batch.row(i);
    const double ratio = log_num(row) - log_den(row);
    if (std::isinf(ratio)) ++infinite;
    acc.add(ratio);
  }
  return acc.result() / static_cast<double>(batch.rows());
}

void check_common(const ModelView& model, std::size_t samples, std::size_t reps) {
  if (samples == 0 || reps == 0) throw InvalidInput("metrics: need samples and reps >= 1");
  if (!model.log_density || !model.sample) throw InvalidInput("metrics: incomplete model view");
}

}  // namespace

ModelView make_smm_view(std::shared_ptr<const ComplexSmm> model, ModelSampler route,
                        const AritsOptions& arits) {
  auto expanded = std::make_shared<const SignedMixture>(expand(*model));
  ModelView view;
  view.dim = model->dim();
  view.log_density = [model](std::span<const double> x) { return model->log_density(x); };
  if (route == ModelSampler::kRejection) {
    view.sample = [expanded](std::size_t count, RngStream& rng) {
      return rejection_sample_exact_n(*expanded, count, 200 * count + 1'000'000, rng);
    };
  } else {
    view.sample = [expanded, arits](std::size_t count, RngStream& rng) {
      return arits_sample(*expanded, count, arits, rng);
    };
  }
  return view;
}

ModelView make_gmm_view(std::shared_ptr<const AdditiveMixture> mixture) {
  ModelView view;
  view.dim = mixture->dim();
  view.log_density = [mixture](std::span<const double> x) { return mixture->log_density(x); };
  view.sample = [mixture](std::size_t count, RngStream& rng) {
    return ancestral_sample(*mixture, count, rng);
  };
  return view;
}

MetricReport estimate_fkl(const Target& target, const ModelView& model, std::size_t samples,
                          std::size_t reps, RngStream& rng) {
  check_common(model, samples, reps);
  if (!target.exact_sampler) throw UnsupportedTarget("fkl needs a target with an exact sampler");
  if (!target.exact_log_z) throw UnsupportedTarget("fkl needs a target with a known normalizer");
  if (target.dim != model.dim) throw InvalidInput("fkl: dimension mismatch");

  const double log_z = *target.exact_log_z;
  const LogDensityFn log_p = [&target, log_z](std::span<const double> x) {
    return target.log_density(x) - log_z;
  };
  RepAccumulator acc;
  acc.rep_means.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    RngStream sub = rng.substream(r);
    const SampleBatch batch = target.exact_sampler(samples, sub);
    acc.rep_means.push_back(batch_log_ratio_mean(batch, log_p, model.log_density, acc.infinite));
  }
  return summarize("fkl", acc, samples, true);
}

MetricReport estimate_rkl(const Target& target, const ModelView& model, std::size_t samples,
                          std::size_t reps, RngStream& rng) {
  check_common(model, samples, reps);
  if (!target.exact_log_z) throw UnsupportedTarget("rkl needs a target with a known normalizer");
  if (target.dim != model.dim) throw InvalidInput("rkl: dimension mismatch");

  const double log_z = *target.exact_log_z;
  const LogDensityFn log_p = [&target, log_z](std::span<const double> x) {
    return target.log_density(x) - log_z;
  };
  RepAccumulator acc;
  acc.rep_means.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    RngStream sub = rng.substream(r);
    const SampleBatch batch = model.sample(samples, sub);
    acc.rep_means.push_back(batch_log_ratio_mean(batch, model.log_density, log_p, acc.infinite));
  }
  return summarize("rkl", acc, samples, true);
}

MetricReport estimate_elbo(const Target& target, const ModelView& model, std::size_t samples,
                           std::size_t reps, RngStream& rng) {
  check_common(model, samples, reps);
  if (target.dim != model.dim) throw InvalidInput("elbo: dimension mismatch");

  RepAccumulator acc;
  acc.rep_means.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    RngStream sub = rng.substream(r);
    const SampleBatch batch = model.sample(samples, sub);
    acc.rep_means.push_back(
        -batch_log_ratio_mean(batch, model.log_density, target.log_density, acc.infinite));
  }
  return summarize("elbo", acc, samples, false);
}

}  // namespace smm
