#include "smm/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "smm/errors.hpp"
#include "smm/normal.hpp"

namespace smm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t pick_component(const std::vector<double>& coeffs, double u) {
  double cum = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    cum += coeffs[k];
    if (u <= cum) return k;
  }
  return coeffs.size() - 1;  // guards cum rounding below 1
}

void draw_gaussian_row(const GaussianComponent& comp, RngStream& rng, std::vector<double>& out) {
  for (std::size_t d = 0; d < comp.dim(); ++d) {
    out.push_back(comp.mean()[d] + comp.stddev()[d] * rng.next_gaussian());
  }
}

// Flattened view of the signed pairwise terms used by the autoregressive and
// rejection samplers.
struct TermView {
  const GaussianComponent* gaussian;
  double log_weight;
  double sign;
};

std::vector<TermView> term_views(const SignedMixture& model) {
  std::vector<TermView> views;
  views.reserve(model.pair_count());
  for (const auto& c : model.positives()) {
    views.push_back({&c.gaussian, std::log(c.weight), 1.0});
  }
  for (const auto& c : model.negatives()) {
    views.push_back({&c.gaussian, std::log(c.weight), -1.0});
  }
  return views;
}

}  // namespace

SampleBatch ancestral_sample(const AdditiveMixture& mixture, std::size_t count, RngStream& rng) {
  SampleBatch batch;
  batch.dim = mixture.dim();
  batch.points.reserve(count * batch.dim);
  batch.component.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t k = pick_component(mixture.coeffs(), rng.next_uniform());
    batch.component.push_back(static_cast<std::int32_t>(k));
    draw_gaussian_row(mixture.components()[k], rng, batch.points);
  }
  return batch;
}

std::vector<std::size_t> stratified_allocation(const AdditiveMixture& mixture, std::size_t count) {
  const std::size_t n = mixture.size();
  std::vector<std::size_t> alloc(n);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < n; ++k) {
    alloc[k] = static_cast<std::size_t>(std::floor(mixture.coeffs()[k] * static_cast<double>(count)));
    assigned += alloc[k];
  }
  std::size_t remainder = count - assigned;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return mixture.coeffs()[a] > mixture.coeffs()[b];
  });
  for (std::size_t i = 0; i < remainder; ++i) {
    alloc[order[i % n]] += 1;
  }
  return alloc;
}

SampleBatch stratified_sample(const AdditiveMixture& mixture, std::size_t count, RngStream& rng) {
  const auto alloc = stratified_allocation(mixture, count);
  SampleBatch batch;
  batch.dim = mixture.dim();
  batch.points.reserve(count * batch.dim);
  batch.component.reserve(count);
  for (std::size_t k = 0; k < mixture.size(); ++k) {
    for (std::size_t i = 0; i < alloc[k]; ++i) {
      batch.component.push_back(static_cast<std::int32_t>(k));
      draw_gaussian_row(mixture.components()[k], rng, batch.points);
    }
  }
  return batch;
}

SampleBatch arits_sample(const SignedMixture& model, std::size_t count, const AritsOptions& options,
                         RngStream& rng) {
  if (!(options.lower < options.upper) || !(options.tol > 0.0)) {
    throw InvalidInput("arits_sample: need lower < upper and tol > 0");
  }
  const auto views = term_views(model);
  const std::size_t dim = model.dim();

  // Bound validation, once per call: each dimension's per-term tail mass
  // outside [lower, upper], scaled by |w|/z, must not exceed 1e-12, which
  // pins the marginal CDF to 0 at lower and 1 at upper within that tolerance.
  for (std::size_t d = 0; d < dim; ++d) {
    double tail = 0.0;
    for (const auto& v : views) {
      const double m = v.gaussian->mean()[d];
      const double s = v.gaussian->stddev()[d];
      const double below = normal_cdf((options.lower - m) / s);
      const double above = normal_cdf((m - options.upper) / s);
      tail += std::exp(v.log_weight - model.log_z()) * (below + above);
    }
    if (tail > 1e-12) {
      throw BoundsTooTight("arits_sample: bounds [" + std::to_string(options.lower) + ", " +
                               std::to_string(options.upper) + "] leave mass " +
                               std::to_string(tail) + " outside along dimension " +
                               std::to_string(d),
                           d);
    }
  }

  SampleBatch batch;
  batch.dim = dim;
  batch.points.reserve(count * dim);

  const std::size_t n = views.size();
  std::vector<double> prefix_log(n);
  std::vector<double> scaled(n);  // sign * exp(prefix_log - shift), fixed per dimension
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t i = 0; i < n; ++i) prefix_log[i] = views[i].log_weight;
    for (std::size_t d = 0; d < dim; ++d) {
      double shift = -kInf;
      for (std::size_t i = 0; i < n; ++i) shift = std::max(shift, prefix_log[i]);
      if (shift == -kInf) {
        throw DegenerateConditioning("arits_sample: zero evidence while conditioning dimension " +
                                     std::to_string(d));
      }
      double evidence = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        scaled[i] = views[i].sign * std::exp(prefix_log[i] - shift);
        evidence += scaled[i];
      }
      if (!(evidence > 0.0)) {
        throw DegenerateConditioning("arits_sample: zero evidence while conditioning dimension " +
                                     std::to_string(d));
      }
      const double u = rng.next_uniform();
      double lo = options.lower;
      double hi = options.upper;
      while (hi - lo > options.tol) {
        const double mid = lo + 0.5 * (hi - lo);
        double num = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double m = views[i].gaussian->mean()[d];
          const double sd = views[i].gaussian->stddev()[d];
          num += scaled[i] * normal_cdf((mid - m) / sd);
        }
        double c = num / evidence;
        c = c < 0.0 ? 0.0 : (c > 1.0 ? 1.0 : c);
        if (c > u) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      const double x = lo + 0.5 * (hi - lo);
      batch.points.push_back(x);
      for (std::size_t i = 0; i < n; ++i) {
        prefix_log[i] += gaussian_log_pdf(x, views[i].gaussian->mean()[d],
                                          views[i].gaussian->stddev()[d]);
      }
    }
  }
  return batch;
}

namespace {

// Shared proposal machinery for the rejection samplers. Acceptance uses
// ratio = q / (M q_plus) = 1 - (z_minus q_minus) / (z_plus q_plus), computed
// in log domain; with no negative terms every proposal is accepted.
struct RejectionContext {
  const SignedMixture* model;
  std::vector<double> plus_coeffs;
  // log weights hoisted out of the per-proposal loop
  std::vector<double> log_w_plus;
  std::vector<double> log_w_minus;
  std::vector<double> scratch;

  explicit RejectionContext(const SignedMixture& m) : model(&m) {
    plus_coeffs.reserve(m.positives().size());
    log_w_plus.reserve(m.positives().size());
    for (const auto& c : m.positives()) {
      plus_coeffs.push_back(c.weight / m.z_plus());
      log_w_plus.push_back(std::log(c.weight));
    }
    log_w_minus.reserve(m.negatives().size());
    for (const auto& c : m.negatives()) log_w_minus.push_back(std::log(c.weight));
    scratch.reserve(std::max(log_w_plus.size(), log_w_minus.size()));
  }

  double log_part(const std::vector<SignedComponent>& list, const std::vector<double>& log_w,
                  std::span<const double> x) {
    double max = -kInf;
    scratch.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      scratch.push_back(log_w[i] + list[i].gaussian.log_pdf(x));
      max = std::max(max, scratch.back());
    }
    if (max == -kInf) return -kInf;
    double sum = 0.0;
    for (double t : scratch) sum += std::exp(t - max);
    return max + std::log(sum);  // log(z_part * q_part)
  }

  // Draws one proposal; returns true when accepted.
  bool propose(RngStream& rng, std::vector<double>& row, std::int32_t& comp) {
    const std::size_t k = pick_component(plus_coeffs, rng.next_uniform());
    comp = static_cast<std::int32_t>(k);
    row.clear();
    draw_gaussian_row(model->positives()[k].gaussian, rng, row);
    double ratio = 1.0;
    if (!model->negatives().empty()) {
      const double lpp = log_part(model->positives(), log_w_plus, row);
      const double lpm = log_part(model->negatives(), log_w_minus, row);
      if (lpp == -kInf) {
        ratio = 0.0;  // proposal landed where the positive part underflows
      } else if (lpm != -kInf) {
        ratio = 1.0 - std::exp(lpm - lpp);
        if (ratio < 0.0) ratio = 0.0;
      }
    }
    return rng.next_uniform() <= ratio;
  }
};

}  // namespace

SampleBatch rejection_sample(const SignedMixture& model, std::size_t budget, RngStream& rng) {
  RejectionContext ctx(model);
  SampleBatch batch;
  batch.dim = model.dim();
  batch.proposals = budget;
  std::vector<double> row;
  std::int32_t comp = 0;
  for (std::size_t i = 0; i < budget; ++i) {
    if (ctx.propose(rng, row, comp)) {
      batch.points.insert(batch.points.end(), row.begin(), row.end());
      batch.component.push_back(comp);
    }
  }
  return batch;
}

SampleBatch rejection_sample_exact_n(const SignedMixture& model, std::size_t count,
                                     std::size_t max_proposals, RngStream& rng) {
  RejectionContext ctx(model);
  SampleBatch batch;
  batch.dim = model.dim();
  std::vector<double> row;
  std::int32_t comp = 0;
  std::size_t used = 0;
  const double expected_rate = model.acceptance_rate();
  while (batch.component.size() < count) {
    if (used >= max_proposals) {
      const double observed = used == 0 ? 0.0
                                        : static_cast<double>(batch.component.size()) /
                                              static_cast<double>(used);
      throw InsufficientAcceptance(
          "rejection_sample_exact_n: " + std::to_string(batch.component.size()) + "/" +
              std::to_string(count) + " acceptances after " + std::to_string(used) +
              " proposals (observed rate " + std::to_string(observed) + ")",
          observed);
    }
    const std::size_t need = count - batch.component.size();
    const double guess = std::ceil(static_cast<double>(need) / expected_rate * 1.1) + 16.0;
    std::size_t round = static_cast<std::size_t>(guess);
    round = std::min(round, max_proposals - used);
    for (std::size_t i = 0; i < round && batch.component.size() < count; ++i) {
      ++used;
      if (ctx.propose(rng, row, comp)) {
        batch.points.insert(batch.points.end(), row.begin(), row.end());
        batch.component.push_back(comp);
      }
    }
  }
  batch.proposals = used;
  return batch;
}

}  // namespace smm
