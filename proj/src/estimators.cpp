#include "smm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "smm/errors.hpp"
#include "smm/gaussian.hpp"

namespace smm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kChunkRows = 5000;  // draw/weight batches are capped at this many rows
constexpr double kLogErrorFloor = -745.0;

// Signed importance contribution integrand(x)/exp(log_denom(x)). A vanishing
// denominator under a nonzero integrand is unbounded; 0/0 contributes 0.
double weighted_value(const SignedLogDensityFn& integrand, std::span<const double> x,
                      const LogDensityFn& log_denom, bool throw_on_unbounded,
                      std::size_t& flags) {
  const SignedLogValue iv = integrand(x);
  if (iv.sign == 0 || iv.log_abs == -kInf) return 0.0;
  const double ld = log_denom(x);
  if (ld == -kInf) {
    if (throw_on_unbounded) {
      throw UnboundedWeight("importance weight: proposal density is zero at a point where the "
                            "integrand is not");
    }
    ++flags;
    return iv.sign > 0 ? kInf : -kInf;
  }
  return static_cast<double>(iv.sign) * std::exp(iv.log_abs - ld);
}

}  // namespace

Estimate uis(const SignedLogDensityFn& integrand, const SampleBatch& samples,
             const LogDensityFn& proposal_log_density) {
  const std::size_t rows = samples.rows();
  if (rows == 0) {
    throw InvalidInput("uis: empty sample batch");
  }
  NeumaierSum sum;
  std::size_t flags = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    sum.add(weighted_value(integrand, samples.row(i), proposal_log_density, true, flags));
  }
  Estimate est;
  est.value = sum.result() / static_cast<double>(rows);
  est.budget.proposals = samples.proposals;
  est.budget.acceptances = rows;
  return est;
}

namespace {

// Stratified mean of the weighted integrand over one additive part, drawing
// per component in chunks of at most kChunkRows rows. The chunking only
// bounds buffer sizes; draw order matches the unchunked stratified sampler.
double stratified_weighted_mean(const AdditiveMixture& part, std::size_t budget,
                                const SignedLogDensityFn& integrand, const LogDensityFn& log_denom,
                                RngStream& rng, std::vector<double>& strata_sums,
                                std::size_t& flags) {
  const auto alloc = stratified_allocation(part, budget);
  NeumaierSum total;
  std::vector<double> row(part.dim());
  for (std::size_t k = 0; k < part.size(); ++k) {
    NeumaierSum stratum;
    std::size_t left = alloc[k];
    while (left > 0) {
      const std::size_t chunk = std::min(left, kChunkRows);
      for (std::size_t i = 0; i < chunk; ++i) {
        const auto& comp = part.components()[k];
        for (std::size_t d = 0; d < comp.dim(); ++d) {
          row[d] = comp.mean()[d] + comp.stddev()[d] * rng.next_gaussian();
        }
        stratum.add(weighted_value(integrand, row, log_denom, false, flags));
      }
      left -= chunk;
    }
    strata_sums.push_back(stratum.result());
    total.add(stratum.result());
  }
  return total.result() / static_cast<double>(budget);
}

Estimate delta_core(const SignedMixture& model, const SafeProposalSpec& safe,
                    const SignedLogDensityFn& integrand, std::size_t count, RngStream& rng) {
  if (!(safe.beta >= 0.0) || !(safe.beta < 1.0)) {
    throw InvalidInput("safe_delta_is: beta must lie in [0, 1)");
  }
  if (!safe.mean.empty() && safe.mean.size() != model.dim()) {
    throw InvalidInput("safe_delta_is: safe mean dimension mismatch");
  }
  if (safe.beta > 0.0 && !(safe.stddev > 0.0)) {
    throw InvalidInput("safe_delta_is: safe stddev must be positive");
  }
  const double beta = safe.beta;
  const bool mixed = beta > 0.0;
  const std::size_t s_signed =
      mixed ? static_cast<std::size_t>(std::floor((1.0 - beta) * static_cast<double>(count)))
            : count;
  const std::size_t s_safe =
      mixed ? static_cast<std::size_t>(std::floor(beta * static_cast<double>(count))) : 0;

  const double zp = model.z_plus();
  const double zm = model.z_minus();
  const double mass = zp + zm;
  std::size_t s_plus = static_cast<std::size_t>(
      std::floor(zp / mass * static_cast<double>(s_signed)));
  std::size_t s_minus = static_cast<std::size_t>(
      std::floor(zm / mass * static_cast<double>(s_signed)));
  s_plus += s_signed - s_plus - s_minus;
  if (zm > 0.0 && s_minus == 0) {
    throw BudgetTooSmall("delta_is: budget " + std::to_string(count) +
                         " allocates zero samples to the negative part (z_minus/z_plus = " +
                         std::to_string(zm / zp) + ")");
  }
  if (s_plus == 0) {
    throw BudgetTooSmall("delta_is: budget " + std::to_string(count) +
                         " allocates zero samples to the positive part");
  }

  std::vector<double> safe_mean = safe.mean;
  if (mixed && safe_mean.empty()) safe_mean.assign(model.dim(), 0.0);
  const auto safe_log_pdf = [&](std::span<const double> x) {
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      acc += gaussian_log_pdf(x[d], safe_mean[d], safe.stddev);
    }
    return acc;
  };
  const double log_one_minus_beta = mixed ? std::log1p(-beta) : 0.0;
  const double log_beta = mixed ? std::log(beta) : -kInf;
  const LogDensityFn log_denom = [&](std::span<const double> x) -> double {
    const double lq = model.log_density(x);
    if (!mixed) return lq;
    const double a = log_one_minus_beta + lq;
    const double b = log_beta + safe_log_pdf(x);
    const double hi = std::max(a, b);
    if (hi == -kInf) return -kInf;
    return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
  };

  Estimate est;
  est.budget.s_plus = s_plus;
  est.budget.s_minus = s_minus;
  est.budget.s_safe = s_safe;

  const double mean_plus = stratified_weighted_mean(model.positive_part(), s_plus, integrand,
                                                    log_denom, rng, est.strata_sums,
                                                    est.unbounded_weight_flags);
  double signed_part = mean_plus;
  if (zm > 0.0) {
    const double mean_minus = stratified_weighted_mean(model.negative_part(), s_minus, integrand,
                                                       log_denom, rng, est.strata_sums,
                                                       est.unbounded_weight_flags);
    signed_part = (zp * mean_plus - zm * mean_minus) / model.z();
  }

  if (!mixed) {
    est.value = signed_part;
    return est;
  }

  NeumaierSum safe_sum;
  std::vector<double> row(model.dim());
  std::size_t left = s_safe;
  while (left > 0) {
    const std::size_t chunk = std::min(left, kChunkRows);
    for (std::size_t i = 0; i < chunk; ++i) {
      for (std::size_t d = 0; d < row.size(); ++d) {
        row[d] = safe_mean[d] + safe.stddev * rng.next_gaussian();
      }
      safe_sum.add(weighted_value(integrand, row, log_denom, false,
                                  est.unbounded_weight_flags));
    }
    left -= chunk;
  }
  const double mean_safe = s_safe > 0 ? safe_sum.result() / static_cast<double>(s_safe) : 0.0;
  est.strata_sums.push_back(safe_sum.result());
  est.value = (1.0 - beta) * signed_part + beta * mean_safe;
  return est;
}

}  // namespace

Estimate delta_is(const SignedMixture& model, const SignedLogDensityFn& integrand,
                  std::size_t count, RngStream& rng) {
  return delta_core(model, SafeProposalSpec{}, integrand, count, rng);
}

Estimate safe_delta_is(const SignedMixture& model, const SafeProposalSpec& safe,
                       const SignedLogDensityFn& integrand, std::size_t count, RngStream& rng) {
  return delta_core(model, safe, integrand, count, rng);
}

double gamma_factor(std::size_t count, double acceptance_rate) {
  if (count == 0) {
    throw InvalidInput("gamma_factor: count must be positive");
  }
  if (!(acceptance_rate > 0.0) || acceptance_rate > 1.0) {
    throw InvalidInput("gamma_factor: acceptance rate must lie in (0, 1]");
  }
  const double n = static_cast<double>(count);
  if (acceptance_rate == 1.0) return 1.0 / n;
  if (count > 1000000) return 1.0 / (n * acceptance_rate);  // asymptotic regime

  const double log_a = std::log(acceptance_rate);
  const double log_1ma = std::log1p(-acceptance_rate);
  const double lgamma_n1 = std::lgamma(n + 1.0);
  NeumaierSum sum;
  for (std::size_t k = 1; k <= count; ++k) {
    const double kd = static_cast<double>(k);
    const double log_choose = lgamma_n1 - std::lgamma(kd + 1.0) - std::lgamma(n - kd + 1.0);
    sum.add(std::exp(log_choose + kd * log_a + (n - kd) * log_1ma - std::log(kd)));
  }
  const double denom = -std::expm1(n * log_1ma);  // 1 - (1-a)^n
  return sum.result() / denom;
}

Estimate rejection_mc(const SignedMixture& model, const RealFn& h, std::size_t budget,
                      RngStream& rng) {
  const SampleBatch batch = rejection_sample(model, budget, rng);
  if (batch.rows() == 0) {
    throw NoAcceptance("rejection_mc: no proposal accepted within budget " +
                       std::to_string(budget));
  }
  NeumaierSum sum;
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    sum.add(h(batch.row(i)));
  }
  Estimate est;
  est.value = sum.result() / static_cast<double>(batch.rows());
  est.budget.proposals = batch.proposals;
  est.budget.acceptances = batch.rows();
  return est;
}

double log_relative_error(double value, double truth) {
  if (!(truth > 0.0)) {
    throw InvalidInput("log_relative_error: truth must be positive");
  }
  const double diff = std::fabs(value - truth);
  const double e = diff == 0.0 ? -kInf : std::log(diff) - std::log(truth);
  return std::max(e, kLogErrorFloor);
}

ReplicationStats replicate(const std::function<Estimate(RngStream&)>& estimator,
                           std::size_t count, const RngStream& rng,
                           std::optional<double> truth) {
  ReplicationStats stats;
  stats.requested = count;
  std::vector<double> errors;
  for (std::size_t r = 0; r < count; ++r) {
    RngStream sub = rng.substream(r);
    try {
      const Estimate est = estimator(sub);
      stats.values.push_back(est.value);
      stats.flag_total += est.unbounded_weight_flags;
    } catch (const NoAcceptance&) {
      ++stats.excluded;
    } catch (const InsufficientAcceptance&) {
      ++stats.excluded;
    }
  }
  stats.used = stats.values.size();
  if (stats.used == 0) return stats;

  NeumaierSum mean_sum;
  for (double v : stats.values) mean_sum.add(v);
  stats.mean = mean_sum.result() / static_cast<double>(stats.used);
  if (stats.used > 1) {
    NeumaierSum var_sum;
    for (double v : stats.values) var_sum.add((v - stats.mean) * (v - stats.mean));
    stats.stddev = std::sqrt(var_sum.result() / static_cast<double>(stats.used - 1));
  }

  if (truth.has_value()) {
    stats.has_error = true;
    NeumaierSum err_sum;
    errors.reserve(stats.values.size());
    for (double v : stats.values) {
      const double e = log_relative_error(v, *truth);
      errors.push_back(e);
      err_sum.add(e);
    }
    stats.error_mean = err_sum.result() / static_cast<double>(errors.size());
    if (errors.size() > 1) {
      NeumaierSum evar;
      for (double e : errors) evar.add((e - stats.error_mean) * (e - stats.error_mean));
      stats.error_std = std::sqrt(evar.result() / static_cast<double>(errors.size() - 1));
    }
  }
  return stats;
}

}  // namespace smm
