#include "smm/targets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "smm/errors.hpp"
#include "smm/normal.hpp"
#include "smm/signed_log.hpp"

namespace smm {

namespace {

// Shared by the GMM catalog entries: normalized density, responsibility-
// weighted gradient, ancestral exact sampler.
Target make_gmm_target(std::string name, AdditiveMixture mixture) {
  auto shared = std::make_shared<const AdditiveMixture>(std::move(mixture));
  Target t;
  t.name = std::move(name);
  t.dim = shared->dim();
  t.exact_log_z = 0.0;
  t.log_density = [shared](std::span<const double> x) { return shared->log_density(x); };
  t.grad_log_density = [shared](std::span<const double> x) {
    const std::size_t dim = shared->dim();
    const std::size_t n = shared->size();
    std::vector<double> logs(n);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      logs[i] = std::log(shared->coeffs()[i]) + shared->components()[i].log_pdf(x);
      shift = std::max(shift, logs[i]);
    }
    std::vector<double> grad(dim, 0.0);
    if (!std::isfinite(shift)) return grad;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(logs[i] - shift);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = std::exp(logs[i] - shift) / total;
      const auto& comp = shared->components()[i];
      for (std::size_t d = 0; d < dim; ++d) {
        const double s = comp.stddev()[d];
        grad[d] += r * (comp.mean()[d] - x[d]) / (s * s);
      }
    }
    return grad;
  };
  t.exact_sampler = [shared](std::size_t count, RngStream& rng) {
    return ancestral_sample(*shared, count, rng);
  };
  return t;
}

// Squared-mixture catalog entries: unnormalized density (alpha-weighted
// forms squared, before dividing by Z), exact normalizer from the expansion,
// exact sampler by rejection from the positive part.
Target make_squared_target(std::string name, std::vector<GaussianComponent> components,
                           std::vector<double> weights) {
  auto model = std::make_shared<const ComplexSmm>(
      ComplexSmm::real_weighted(std::move(components), std::move(weights)));
  auto expanded = std::make_shared<const SignedMixture>(expand(*model));
  Target t;
  t.name = std::move(name);
  t.dim = model->dim();
  t.exact_log_z = model->log_z();
  t.smm_form = model;
  t.expanded = expanded;
  t.log_density = [model](std::span<const double> x) {
    return model->log_density(x) + model->log_z();
  };
  t.grad_log_density = [model](std::span<const double> x) {
    // p~ = s^2 + t^2 for the real/imaginary linear forms s, t; the gradient
    // 2 (s grad s + t grad t) / (s^2 + t^2) is invariant to a shared
    // exp(-shift) rescaling of both forms.
    const std::size_t dim = model->dim();
    const std::size_t n = model->size();
    std::vector<double> logs(n);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      logs[i] = model->components()[i].log_pdf(x);
      shift = std::max(shift, logs[i]);
    }
    std::vector<double> grad(dim, 0.0);
    if (!std::isfinite(shift)) return grad;
    double s = 0.0;
    double t = 0.0;
    std::vector<double> ds(dim, 0.0);
    std::vector<double> dt(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = std::exp(logs[i] - shift);
      const double re = model->weights()[i].real();
      const double im = model->weights()[i].imag();
      s += re * u;
      t += im * u;
      const auto& comp = model->components()[i];
      for (std::size_t d = 0; d < dim; ++d) {
        const double sd = comp.stddev()[d];
        const double pull = u * (comp.mean()[d] - x[d]) / (sd * sd);
        ds[d] += re * pull;
        dt[d] += im * pull;
      }
    }
    const double norm = s * s + t * t;
    if (norm == 0.0) return grad;
    for (std::size_t d = 0; d < dim; ++d) {
      grad[d] = 2.0 * (s * ds[d] + t * dt[d]) / norm;
    }
    return grad;
  };
  t.exact_sampler = [expanded](std::size_t count, RngStream& rng) {
    const std::size_t cap = 200 * count + 1'000'000;
    return rejection_sample_exact_n(*expanded, count, cap, rng);
  };
  return t;
}

// Funnels: x_1 Gaussian, remaining dimensions zero-mean Gaussians whose
// VARIANCE is exp(rate * x_1). log_offset is added to the log-density
// verbatim, so exact_log_z equals it.
Target make_funnel_target(std::string name, std::size_t dim, double sigma1, double rate,
                          double log_offset) {
  Target t;
  t.name = std::move(name);
  t.dim = dim;
  t.exact_log_z = log_offset;
  t.log_density = [dim, sigma1, rate, log_offset](std::span<const double> x) {
    double acc = gaussian_log_pdf(x[0], 0.0, sigma1) + log_offset;
    const double inv_var = std::exp(-rate * x[0]);
    for (std::size_t d = 1; d < dim; ++d) {
      acc += -0.5 * kLogTwoPi - 0.5 * rate * x[0] - 0.5 * x[d] * x[d] * inv_var;
    }
    return acc;
  };
  t.grad_log_density = [dim, sigma1, rate](std::span<const double> x) {
    std::vector<double> grad(dim, 0.0);
    const double inv_var = std::exp(-rate * x[0]);
    grad[0] = -x[0] / (sigma1 * sigma1);
    for (std::size_t d = 1; d < dim; ++d) {
      grad[0] += 0.5 * rate * (x[d] * x[d] * inv_var - 1.0);
      grad[d] = -x[d] * inv_var;
    }
    return grad;
  };
  t.exact_sampler = [dim, sigma1, rate](std::size_t count, RngStream& rng) {
    SampleBatch batch;
    batch.dim = dim;
    batch.points.resize(count * dim);
    for (std::size_t i = 0; i < count; ++i) {
      const double x1 = sigma1 * rng.next_gaussian();
      batch.points[i * dim] = x1;
      const double tail_sd = std::exp(0.5 * rate * x1);
      for (std::size_t d = 1; d < dim; ++d) {
        batch.points[i * dim + d] = tail_sd * rng.next_gaussian();
      }
    }
    return batch;
  };
  return t;
}

GaussianComponent isotropic(std::size_t dim, double stddev) {
  return GaussianComponent(std::vector<double>(dim, 0.0), std::vector<double>(dim, stddev));
}

double log_sigmoid(double u) {
  return u >= 0.0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {
      "gmm3",     "gmm4",     "funnel2",  "ring",     "deep_ring",
      "hollow16", "hollow32", "hollow64", "funnel10",
  };
  return names;
}

Target make_catalog_target(const std::string& name) {
  if (name == "gmm3") {
    const double s = std::sqrt(0.5);
    return make_gmm_target(
        name, AdditiveMixture({0.4, 0.3, 0.3},
                              {GaussianComponent({-1.0, 1.0}, {s, s}),
                               GaussianComponent({1.1, 1.1}, {1.0, 1.0}),
                               GaussianComponent({-1.0, -1.0}, {1.0, 1.0})}));
  }
  if (name == "gmm4") {
    const double s = std::pow(0.15, 0.45);  // sqrt of the 0.15^0.9 variance
    return make_gmm_target(
        name, AdditiveMixture({0.25, 0.25, 0.25, 0.25},
                              {GaussianComponent({0.0, 2.0}, {s, 1.0}),
                               GaussianComponent({-2.0, 0.0}, {1.0, s}),
                               GaussianComponent({2.0, 0.0}, {1.0, s}),
                               GaussianComponent({0.0, -2.0}, {s, 1.0})}));
  }
  if (name == "funnel2") return make_funnel_target(name, 2, 1.2, 0.5, 1e-6);
  if (name == "funnel10") return make_funnel_target(name, 10, 3.0, 1.0, 0.0);
  if (name == "ring") {
    return make_squared_target(name, {isotropic(2, 3.0), isotropic(2, 2.0)}, {1.0, -0.46});
  }
  if (name == "deep_ring") {
    return make_squared_target(name, {isotropic(2, 0.6), isotropic(2, 1.0)}, {0.16, -0.36});
  }
  if (name == "hollow16") {
    return make_squared_target(name, {isotropic(16, 7.0), isotropic(16, 6.0)}, {1.0, -0.3});
  }
  if (name == "hollow32") {
    return make_squared_target(name, {isotropic(32, 7.0), isotropic(32, 6.0)}, {1.0, -0.11});
  }
  if (name == "hollow64") {
    return make_squared_target(name, {isotropic(64, 7.0), isotropic(64, 6.5)}, {1.0, -0.074});
  }
  throw UnsupportedTarget("unknown catalog target: " + name);
}

Target make_blr_target(std::vector<int> labels, std::vector<std::vector<double>> covariates) {
  if (labels.size() != covariates.size()) {
    throw InvalidInput("blr: one label per covariate row required");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw InvalidInput("blr: labels must be 0 or 1");
  }
  std::size_t dim = covariates.empty() ? 0 : covariates.front().size();
  for (const auto& row : covariates) {
    if (row.size() != dim) throw InvalidInput("blr: ragged covariate rows");
    for (double v : row) {
      if (!std::isfinite(v)) throw InvalidInput("blr: non-finite covariate");
    }
  }
  if (dim == 0) throw InvalidInput("blr: empty covariate rows");

  auto y = std::make_shared<const std::vector<int>>(std::move(labels));
  auto z = std::make_shared<const std::vector<std::vector<double>>>(std::move(covariates));

  Target t;
  t.name = "blr";
  t.dim = dim;
  t.log_density = [y, z, dim](std::span<const double> x) {
    double acc = 0.0;
    for (std::size_t n = 0; n < y->size(); ++n) {
      double u = 0.0;
      for (std::size_t d = 0; d < dim; ++d) u += x[d] * (*z)[n][d];
      acc += (*y)[n] == 1 ? log_sigmoid(u) : log_sigmoid(-u);
    }
    for (std::size_t d = 0; d < dim; ++d) acc += gaussian_log_pdf(x[d], 0.0, 1.0);
    return acc;
  };
  t.grad_log_density = [y, z, dim](std::span<const double> x) {
    std::vector<double> grad(dim);
    for (std::size_t d = 0; d < dim; ++d) grad[d] = -x[d];
    for (std::size_t n = 0; n < y->size(); ++n) {
      double u = 0.0;
      for (std::size_t d = 0; d < dim; ++d) u += x[d] * (*z)[n][d];
      const double resid = static_cast<double>((*y)[n]) - sigmoid(u);
      for (std::size_t d = 0; d < dim; ++d) grad[d] += resid * (*z)[n][d];
    }
    return grad;
  };
  return t;
}

Target make_blr_target_from_csv(const std::string& path, bool add_bias) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("blr: cannot open " + path);

  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t\r");
      const auto last = cell.find_last_not_of(" \t\r");
      cells.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
    }
    return cells;
  };

  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("blr: empty file " + path);
  const auto header = split(line);
  std::size_t y_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "y") y_col = i;
  }
  if (y_col == header.size()) throw InvalidInput("blr: no column named 'y' in " + path);

  std::vector<int> labels;
  std::vector<std::vector<double>> covariates;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw InvalidInput("blr: row width mismatch at line " + std::to_string(line_no));
    }
    std::vector<double> row;
    row.reserve(header.size() - 1 + (add_bias ? 1 : 0));
    int label = -1;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[i], &used);
      } catch (const std::exception&) {
        throw InvalidInput("blr: non-numeric cell at line " + std::to_string(line_no));
      }
      if (used != cells[i].size()) {
        throw InvalidInput("blr: non-numeric cell at line " + std::to_string(line_no));
      }
      if (i == y_col) {
        label = static_cast<int>(v);
        if (v != 0.0 && v != 1.0) {
          throw InvalidInput("blr: label outside {0,1} at line " + std::to_string(line_no));
        }
      } else {
        row.push_back(v);
      }
    }
    if (add_bias) row.push_back(1.0);
    labels.push_back(label);
    covariates.push_back(std::move(row));
  }
  return make_blr_target(std::move(labels), std::move(covariates));
}

double WeightedGaussianSum::value(std::span<const double> x) const {
  NeumaierSum acc;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    acc.add(weights[m] * std::exp(components[m].log_pdf(x)));
  }
  return acc.result();
}

double WeightedGaussianSum::log_value(std::span<const double> x) const {
  std::vector<double> terms(weights.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < weights.size(); ++m) {
    if (!(weights[m] > 0.0)) throw InvalidModel("log_value needs positive weights");
    terms[m] = std::log(weights[m]) + components[m].log_pdf(x);
    shift = std::max(shift, terms[m]);
  }
  if (shift == -std::numeric_limits<double>::infinity()) return shift;
  NeumaierSum acc;
  for (double t : terms) acc.add(std::exp(t - shift));
  return shift + std::log(acc.result());
}

Rq1Instance make_rq1_instance(std::size_t dim, std::size_t k, RngStream& rng) {
  if (dim < 1 || k < 2) throw InvalidInput("rq1 instance needs dim >= 1 and k >= 2");

  constexpr int kMaxTries = 10'000;
  std::shared_ptr<const ComplexSmm> proposal;
  std::shared_ptr<const SignedMixture> expanded;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    std::vector<GaussianComponent> components;
    components.reserve(k);
    std::vector<std::vector<double>> means(k, std::vector<double>(dim));
    for (auto& m : means) {
      for (auto& v : m) v = rng.next_uniform() - 0.5;
    }
    std::vector<std::vector<double>> stddevs(k, std::vector<double>(dim));
    for (auto& s : stddevs) {
      for (auto& v : s) v = 2.0 + rng.next_uniform();
    }
    std::vector<double> weights(k);
    for (auto& w : weights) w = 2.0 * rng.next_uniform() - 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      components.emplace_back(std::move(means[i]), std::move(stddevs[i]));
    }
    auto candidate = std::make_shared<const ComplexSmm>(
        ComplexSmm::real_weighted(std::move(components), std::move(weights)));
    auto candidate_expanded = std::make_shared<const SignedMixture>(expand(*candidate));
    if (candidate_expanded->z_minus() > 0.0) {
      proposal = std::move(candidate);
      expanded = std::move(candidate_expanded);
      break;
    }
  }
  if (!proposal) {
    throw Error("rq1 instance: no negative expanded coefficient after 10^4 tries");
  }

  constexpr std::size_t kBumps = 100;
  WeightedGaussianSum integrand;
  integrand.weights.reserve(kBumps);
  integrand.components.reserve(kBumps);
  for (std::size_t m = 0; m < kBumps; ++m) {
    std::vector<double> mean(dim);
    for (auto& v : mean) v = rng.next_gaussian();
    std::vector<double> stddev(dim);
    for (auto& v : stddev) v = 1.0 + rng.next_uniform();
    integrand.components.emplace_back(std::move(mean), std::move(stddev));
    integrand.weights.push_back(1e4 + 9e4 * rng.next_uniform());
  }

  // E_q[f] in closed form: each expanded pair integrates against each bump
  // as a pairwise Gaussian mass.
  SignedLogSum acc;
  const double log_z = expanded->log_z();
  for (std::size_t m = 0; m < kBumps; ++m) {
    const double log_beta = std::log(integrand.weights[m]);
    for (const auto& term : expanded->positives()) {
      acc.add(log_beta + std::log(term.weight) - log_z +
                  log_pairwise_mass(term.gaussian, integrand.components[m]),
              1);
    }
    for (const auto& term : expanded->negatives()) {
      acc.add(log_beta + std::log(term.weight) - log_z +
                  log_pairwise_mass(term.gaussian, integrand.components[m]),
              -1);
    }
  }
  const double expectation = acc.value_raw();
  if (!(expectation > 0.0)) {
    throw Error("rq1 instance: closed-form expectation not positive");
  }

  Rq1Instance inst;
  inst.proposal = std::move(proposal);
  inst.expanded = std::move(expanded);
  inst.integrand = std::move(integrand);
  inst.exact_expectation = expectation;
  return inst;
}

ComplexSmm perturb_proposal(const ComplexSmm& model, double scale, RngStream& rng) {
  std::vector<GaussianComponent> components;
  components.reserve(model.size());
  for (const auto& comp : model.components()) {
    std::vector<double> stddev = comp.stddev();
    for (auto& s : stddev) s *= std::exp(scale * rng.next_gaussian());
    components.emplace_back(comp.mean(), std::move(stddev));
  }
  return ComplexSmm(std::move(components), model.weights());
}

}  // namespace smm
