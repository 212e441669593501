#include "smm/mixture.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "smm/errors.hpp"
#include "smm/normal.hpp"
#include "smm/signed_log.hpp"

namespace smm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kWeightFloor = 1e-300;  // expanded terms below this are dropped

void check_components(const std::vector<GaussianComponent>& components) {
  if (components.empty()) {
    throw InvalidModel("mixture: at least one component required");
  }
  const std::size_t dim = components.front().dim();
  for (const auto& c : components) {
    if (c.dim() != dim) {
      throw InvalidModel("mixture: components disagree on dimension");
    }
  }
}

struct Totals {
  double z_plus = 0.0;
  double z_minus = 0.0;
  double z = 0.0;
};

// z is defined as fl(z_plus - z_minus) so that downstream identities of the
// form (z_plus*1 - z_minus*1)/z evaluate to exactly 1.
Totals totals_from_weights(const std::vector<double>& signed_weights) {
  NeumaierSum pos;
  NeumaierSum neg;
  for (double w : signed_weights) {
    if (w > 0) {
      pos.add(w);
    } else {
      neg.add(-w);
    }
  }
  Totals t;
  t.z_plus = pos.result();
  t.z_minus = neg.result();
  t.z = t.z_plus - t.z_minus;
  return t;
}

struct RawTerm {
  std::size_t k, j;
  double weight;  // signed, mass factor included
};

// Pairwise expansion weights in (k, j) lexicographic order, k <= j.
std::vector<RawTerm> raw_terms(const std::vector<GaussianComponent>& components,
                               const std::vector<std::complex<double>>& weights) {
  std::vector<RawTerm> terms;
  const std::size_t n = components.size();
  terms.reserve(n * (n + 1) / 2);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = k; j < n; ++j) {
      const double re = weights[k].real() * weights[j].real() +
                        weights[k].imag() * weights[j].imag();
      const double mult = (k == j) ? 1.0 : 2.0;
      const double w = re * mult * std::exp(log_pairwise_mass(components[k], components[j]));
      if (std::fabs(w) < kWeightFloor) continue;
      terms.push_back({k, j, w});
    }
  }
  return terms;
}

}  // namespace

AdditiveMixture::AdditiveMixture(std::vector<double> coeffs,
                                 std::vector<GaussianComponent> components)
    : coeffs_(std::move(coeffs)), components_(std::move(components)) {
  check_components(components_);
  if (coeffs_.size() != components_.size()) {
    throw InvalidModel("AdditiveMixture: one coefficient per component required");
  }
  NeumaierSum total;
  for (double c : coeffs_) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw InvalidModel("AdditiveMixture: coefficients must be finite and nonnegative");
    }
    total.add(c);
  }
  if (std::fabs(total.result() - 1.0) > 1e-12) {
    throw InvalidModel("AdditiveMixture: coefficients must sum to 1 (tolerance 1e-12)");
  }
}

double AdditiveMixture::log_density(std::span<const double> x) const {
  if (x.size() != dim()) {
    throw InvalidInput("AdditiveMixture::log_density: dimension mismatch");
  }
  double max = -kInf;
  std::vector<double> terms(components_.size(), -kInf);
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (coeffs_[i] == 0.0) continue;
    terms[i] = std::log(coeffs_[i]) + components_[i].log_pdf(x);
    if (terms[i] > max) max = terms[i];
  }
  if (max == -kInf) return -kInf;
  double sum = 0.0;
  for (double t : terms) {
    if (t != -kInf) sum += std::exp(t - max);
  }
  return max + std::log(sum);
}

SignedMixture::SignedMixture(std::size_t dim, std::vector<SignedComponent> positives,
                             std::vector<SignedComponent> negatives)
    : dim_(dim), positives_(std::move(positives)), negatives_(std::move(negatives)) {
  std::vector<double> signed_weights;
  signed_weights.reserve(positives_.size() + negatives_.size());
  for (const auto& c : positives_) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight) || c.gaussian.dim() != dim_) {
      throw InvalidModel("SignedMixture: invalid positive term");
    }
    signed_weights.push_back(c.weight);
  }
  for (const auto& c : negatives_) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight) || c.gaussian.dim() != dim_) {
      throw InvalidModel("SignedMixture: invalid negative term (store magnitudes)");
    }
    signed_weights.push_back(-c.weight);
  }
  const Totals t = totals_from_weights(signed_weights);
  z_plus_ = t.z_plus;
  z_minus_ = t.z_minus;
  z_ = t.z;
  if (!(z_ > 0.0) || !std::isfinite(z_)) {
    throw InvalidModel("SignedMixture: normalizer must be positive and finite, got " +
                       std::to_string(z_));
  }
  log_z_ = std::log(z_);
}

AdditiveMixture SignedMixture::positive_part() const {
  std::vector<double> coeffs;
  std::vector<GaussianComponent> comps;
  coeffs.reserve(positives_.size());
  comps.reserve(positives_.size());
  for (const auto& c : positives_) {
    coeffs.push_back(c.weight / z_plus_);
    comps.push_back(c.gaussian);
  }
  return AdditiveMixture(std::move(coeffs), std::move(comps));
}

AdditiveMixture SignedMixture::negative_part() const {
  if (negatives_.empty()) {
    throw InvalidInput("SignedMixture::negative_part: model has no negative terms");
  }
  std::vector<double> coeffs;
  std::vector<GaussianComponent> comps;
  coeffs.reserve(negatives_.size());
  comps.reserve(negatives_.size());
  for (const auto& c : negatives_) {
    coeffs.push_back(c.weight / z_minus_);
    comps.push_back(c.gaussian);
  }
  return AdditiveMixture(std::move(coeffs), std::move(comps));
}

double SignedMixture::log_density(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw InvalidInput("SignedMixture::log_density: dimension mismatch");
  }
  SignedLogSum acc;
  for (const auto& c : positives_) {
    acc.add(std::log(c.weight) + c.gaussian.log_pdf(x), 1);
  }
  for (const auto& c : negatives_) {
    acc.add(std::log(c.weight) + c.gaussian.log_pdf(x), -1);
  }
  const SignedLogValue v = acc.combined_clamped();
  if (v.sign <= 0) return -kInf;
  return v.log_abs - log_z_;
}

double SignedMixture::density(std::span<const double> x) const {
  const double l = log_density(x);
  return l == -kInf ? 0.0 : std::exp(l);
}

double SignedMixture::marginal_evidence(std::span<const double> prefix) const {
  if (prefix.size() > dim_) {
    throw InvalidInput("SignedMixture::marginal_evidence: prefix longer than dimension");
  }
  if (prefix.empty()) return 1.0;
  SignedLogSum acc;
  for (const auto& c : positives_) {
    acc.add(std::log(c.weight) + c.gaussian.log_pdf_prefix(prefix, prefix.size()), 1);
  }
  for (const auto& c : negatives_) {
    acc.add(std::log(c.weight) + c.gaussian.log_pdf_prefix(prefix, prefix.size()), -1);
  }
  const SignedLogValue v = acc.combined_clamped();
  if (v.sign <= 0) return 0.0;
  return std::exp(v.log_abs - log_z_);
}

double SignedMixture::conditional_cdf(std::span<const double> prefix, double t) const {
  const std::size_t d = prefix.size();
  if (d >= dim_) {
    throw InvalidInput("SignedMixture::conditional_cdf: prefix must leave a free dimension");
  }
  SignedLogSum num;
  SignedLogSum den;
  auto accumulate = [&](const std::vector<SignedComponent>& list, int sign) {
    for (const auto& c : list) {
      const double base = std::log(c.weight) + c.gaussian.log_pdf_prefix(prefix, d);
      den.add(base, sign);
      const double zarg = (t - c.gaussian.mean()[d]) / c.gaussian.stddev()[d];
      const double phi = normal_cdf(zarg);
      if (phi > 0.0) num.add(base + std::log(phi), sign);
    }
  };
  accumulate(positives_, 1);
  accumulate(negatives_, -1);
  const SignedLogValue dv = den.combined_clamped();
  if (dv.sign <= 0) {
    throw DegenerateConditioning("conditional_cdf: zero marginal evidence at the given prefix");
  }
  const SignedLogValue nv = num.combined_clamped();
  if (nv.sign <= 0) return 0.0;
  const double c = std::exp(nv.log_abs - dv.log_abs);
  return c < 0.0 ? 0.0 : (c > 1.0 ? 1.0 : c);
}

ComplexSmm::ComplexSmm(std::vector<GaussianComponent> components,
                       std::vector<std::complex<double>> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  check_components(components_);
  if (weights_.size() != components_.size()) {
    throw InvalidModel("ComplexSmm: one weight per component required");
  }
  bool any_nonzero = false;
  for (const auto& w : weights_) {
    if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) {
      throw InvalidModel("ComplexSmm: weights must be finite");
    }
    if (w.real() != 0.0 || w.imag() != 0.0) any_nonzero = true;
  }
  if (!any_nonzero) {
    throw InvalidModel("ComplexSmm: all weights are zero, the square has no mass");
  }
  std::vector<double> signed_weights;
  const auto terms = raw_terms(components_, weights_);
  signed_weights.reserve(terms.size());
  for (const auto& t : terms) signed_weights.push_back(t.weight);
  const Totals totals = totals_from_weights(signed_weights);
  z_plus_ = totals.z_plus;
  z_minus_ = totals.z_minus;
  z_ = totals.z;
  if (!(z_ > 0.0) || !std::isfinite(z_)) {
    throw InvalidModel("ComplexSmm: squared-model normalizer must be positive and finite, got " +
                       std::to_string(z_));
  }
  log_z_ = std::log(z_);
}

ComplexSmm ComplexSmm::real_weighted(std::vector<GaussianComponent> components,
                                     std::vector<double> weights) {
  std::vector<std::complex<double>> cw;
  cw.reserve(weights.size());
  for (double w : weights) cw.emplace_back(w, 0.0);
  return ComplexSmm(std::move(components), std::move(cw));
}

double ComplexSmm::log_density(std::span<const double> x) const {
  if (x.size() != dim()) {
    throw InvalidInput("ComplexSmm::log_density: dimension mismatch");
  }
  const std::size_t n = components_.size();
  double max = -kInf;
  std::vector<double> logs(n);
  for (std::size_t k = 0; k < n; ++k) {
    logs[k] = components_[k].log_pdf(x);
    if (logs[k] > max) max = logs[k];
  }
  if (max == -kInf) return -kInf;
  double re = 0.0;
  double im = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = std::exp(logs[k] - max);
    re += weights_[k].real() * e;
    im += weights_[k].imag() * e;
  }
  const double sq = re * re + im * im;
  if (sq == 0.0) return -kInf;
  return 2.0 * max + std::log(sq) - log_z_;
}

SignedMixture expand(const ComplexSmm& model) {
  const auto terms = raw_terms(model.components(), model.weights());
  std::vector<SignedComponent> positives;
  std::vector<SignedComponent> negatives;
  for (const auto& t : terms) {
    GaussianComponent g = product_gaussian(model.components()[t.k], model.components()[t.j]);
    if (t.weight > 0) {
      positives.push_back({t.weight, std::move(g), {t.k, t.j}});
    } else {
      negatives.push_back({-t.weight, std::move(g), {t.k, t.j}});
    }
  }
  return SignedMixture(model.dim(), std::move(positives), std::move(negatives));
}

}  // namespace smm
