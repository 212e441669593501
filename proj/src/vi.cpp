#include "smm/vi.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include "smm/autodiff.hpp"
#include "smm/errors.hpp"
#include "smm/normal.hpp"
#include "smm/signed_log.hpp"

namespace smm {

namespace {

using ad::NodeId;
using ad::Tape;

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shape(const ParamVector& p) {
  const std::size_t kd = p.components * p.dim;
  if (p.components == 0 || p.dim == 0) throw InvalidInput("params: need components and dim >= 1");
  if (p.means.size() != kd || p.log_stddevs.size() != kd) {
    throw InvalidInput("params: means/log_stddevs must be components * dim long");
  }
  if (p.weights_re.size() != p.components) {
    throw InvalidInput("params: weights_re must have one entry per component");
  }
  if (p.kind == ModelKind::kGmm) {
    if (!p.weights_im.empty()) throw InvalidInput("params: gmm carries logits only");
  } else if (!p.weights_im.empty() && p.weights_im.size() != p.components) {
    throw InvalidInput("params: weights_im must be empty or one entry per component");
  }
}

// Parameter leaves on the tape, plus per-entry variance nodes exp(2 ls)
// shared by the normalizer and the product-Gaussian reparameterization.
struct Lifted {
  std::vector<NodeId> means, ls, wre, wim, var;
};

Lifted lift(Tape& tape, const ParamVector& p, bool need_var) {
  Lifted out;
  out.means.reserve(p.means.size());
  out.ls.reserve(p.log_stddevs.size());
  for (double v : p.means) out.means.push_back(tape.constant(v));
  for (double v : p.log_stddevs) out.ls.push_back(tape.constant(v));
  for (double v : p.weights_re) out.wre.push_back(tape.constant(v));
  for (double v : p.weights_im) out.wim.push_back(tape.constant(v));
  if (need_var) {
    out.var.reserve(out.ls.size());
    for (NodeId n : out.ls) out.var.push_back(tape.exp(tape.mul_const(n, 2.0)));
  }
  return out;
}

Gradient collect(const Tape& tape, const Lifted& lifted) {
  Gradient g;
  g.reserve(lifted.means.size() + lifted.ls.size() + lifted.wre.size() + lifted.wim.size());
  for (NodeId n : lifted.means) g.push_back(tape.adjoint(n));
  for (NodeId n : lifted.ls) g.push_back(tape.adjoint(n));
  for (NodeId n : lifted.wre) g.push_back(tape.adjoint(n));
  for (NodeId n : lifted.wim) g.push_back(tape.adjoint(n));
  return g;
}

struct PairTerm {
  std::size_t k, j;
  double mult;    // 2 off-diagonal, 1 on the diagonal
  NodeId weight;  // wre_k wre_j + wim_k wim_j
  NodeId log_c;   // log pairwise mass
};

std::vector<PairTerm> build_pair_terms(Tape& tape, const Lifted& L, std::size_t K,
                                       std::size_t D) {
  std::vector<PairTerm> pairs;
  pairs.reserve(K * (K + 1) / 2);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = k; j < K; ++j) {
      NodeId w = tape.mul(L.wre[k], L.wre[j]);
      if (!L.wim.empty()) w = tape.add(w, tape.mul(L.wim[k], L.wim[j]));
      NodeId log_c = -1;
      for (std::size_t d = 0; d < D; ++d) {
        const NodeId vsum = tape.add(L.var[k * D + d], L.var[j * D + d]);
        const NodeId diff = tape.sub(L.means[k * D + d], L.means[j * D + d]);
        const NodeId quad = tape.div(tape.square(diff), vsum);
        const NodeId term =
            tape.add_const(tape.mul_const(tape.add(tape.log(vsum), quad), -0.5), -0.5 * kLogTwoPi);
        log_c = d == 0 ? term : tape.add(log_c, term);
      }
      pairs.push_back({k, j, k == j ? 1.0 : 2.0, w, log_c});
    }
  }
  return pairs;
}

// log Z = shift + log sum_pairs mult * weight * exp(log_c - shift); the shift
// is a plain constant, so gradients are unaffected.
NodeId log_z_node(Tape& tape, const std::vector<PairTerm>& pairs) {
  double shift = -kInf;
  for (const auto& p : pairs) shift = std::max(shift, tape.value(p.log_c));
  NodeId sum = -1;
  bool first = true;
  for (const auto& p : pairs) {
    const NodeId term =
        tape.mul(tape.mul_const(p.weight, p.mult), tape.exp(tape.add_const(p.log_c, -shift)));
    sum = first ? term : tape.add(sum, term);
    first = false;
  }
  if (!(tape.value(sum) > 0.0)) {
    throw InvalidModel("squared model has a non-positive normalizer");
  }
  return tape.add_const(tape.log(sum), shift);
}

// log of the unnormalized squared density at x (given as nodes), via the
// max-shifted real and imaginary linear forms.
NodeId log_tilde_node(Tape& tape, const Lifted& L, std::size_t K, std::size_t D,
                      std::span<const NodeId> x) {
  std::vector<NodeId> lpdf(K);
  double shift = -kInf;
  for (std::size_t k = 0; k < K; ++k) {
    NodeId acc = -1;
    for (std::size_t d = 0; d < D; ++d) {
      const NodeId g = tape.gauss_log_pdf(x[d], L.means[k * D + d], L.ls[k * D + d]);
      acc = d == 0 ? g : tape.add(acc, g);
    }
    lpdf[k] = acc;
    shift = std::max(shift, tape.value(acc));
  }
  if (!std::isfinite(shift)) {
    throw GradientAtZero("log-density gradient requested where every component vanishes");
  }
  NodeId s = -1;
  NodeId t = -1;
  for (std::size_t k = 0; k < K; ++k) {
    const NodeId u = tape.exp(tape.add_const(lpdf[k], -shift));
    const NodeId su = tape.mul(L.wre[k], u);
    s = k == 0 ? su : tape.add(s, su);
    if (!L.wim.empty()) {
      const NodeId tu = tape.mul(L.wim[k], u);
      t = k == 0 ? tu : tape.add(t, tu);
    }
  }
  NodeId sq = tape.square(s);
  if (t != -1) sq = tape.add(sq, tape.square(t));
  if (!(tape.value(sq) > 0.0)) {
    throw GradientAtZero("log-density gradient requested at a zero of the density");
  }
  return tape.add_const(tape.log(sq), 2.0 * shift);
}

std::size_t pair_count(const ParamVector& p) { return p.components * (p.components + 1) / 2; }

std::vector<double> draw_standard_normals(std::size_t count, RngStream& rng) {
  std::vector<double> z(count);
  for (auto& v : z) v = rng.next_gaussian();
  return z;
}

}  // namespace

std::size_t ParamVector::flat_size() const {
  return means.size() + log_stddevs.size() + weights_re.size() + weights_im.size();
}

std::vector<double> ParamVector::flat() const {
  std::vector<double> out;
  out.reserve(flat_size());
  out.insert(out.end(), means.begin(), means.end());
  out.insert(out.end(), log_stddevs.begin(), log_stddevs.end());
  out.insert(out.end(), weights_re.begin(), weights_re.end());
  out.insert(out.end(), weights_im.begin(), weights_im.end());
  return out;
}

void ParamVector::set_flat(std::span<const double> values) {
  if (values.size() != flat_size()) throw InvalidInput("params: flat size mismatch");
  std::size_t i = 0;
  for (auto& v : means) v = values[i++];
  for (auto& v : log_stddevs) v = values[i++];
  for (auto& v : weights_re) v = values[i++];
  for (auto& v : weights_im) v = values[i++];
}

ComplexSmm ParamVector::to_smm() const {
  if (kind != ModelKind::kSquaredSmm) throw InvalidInput("params: not a squared model");
  check_shape(*this);
  std::vector<GaussianComponent> components_out;
  components_out.reserve(components);
  for (std::size_t k = 0; k < components; ++k) {
    std::vector<double> mean(means.begin() + k * dim, means.begin() + (k + 1) * dim);
    std::vector<double> stddev(dim);
    for (std::size_t d = 0; d < dim; ++d) stddev[d] = std::exp(log_stddevs[k * dim + d]);
    components_out.emplace_back(std::move(mean), std::move(stddev));
  }
  std::vector<std::complex<double>> weights(components);
  for (std::size_t k = 0; k < components; ++k) {
    weights[k] = {weights_re[k], weights_im.empty() ? 0.0 : weights_im[k]};
  }
  return ComplexSmm(std::move(components_out), std::move(weights));
}

AdditiveMixture ParamVector::to_gmm() const {
  if (kind != ModelKind::kGmm) throw InvalidInput("params: not an additive mixture");
  check_shape(*this);
  std::vector<GaussianComponent> components_out;
  components_out.reserve(components);
  for (std::size_t k = 0; k < components; ++k) {
    std::vector<double> mean(means.begin() + k * dim, means.begin() + (k + 1) * dim);
    std::vector<double> stddev(dim);
    for (std::size_t d = 0; d < dim; ++d) stddev[d] = std::exp(log_stddevs[k * dim + d]);
    components_out.emplace_back(std::move(mean), std::move(stddev));
  }
  const double shift = *std::max_element(weights_re.begin(), weights_re.end());
  std::vector<double> coeffs(components);
  double total = 0.0;
  for (std::size_t k = 0; k < components; ++k) {
    coeffs[k] = std::exp(weights_re[k] - shift);
    total += coeffs[k];
  }
  for (auto& c : coeffs) c /= total;
  return AdditiveMixture(std::move(coeffs), std::move(components_out));
}

ParamVector init_squared_smm(std::size_t components, std::size_t dim, const InitSpec& spec,
                             RngStream& rng) {
  ParamVector p;
  p.kind = ModelKind::kSquaredSmm;
  p.components = components;
  p.dim = dim;
  p.means.resize(components * dim);
  p.log_stddevs.resize(components * dim);
  for (auto& v : p.means) {
    v = spec.mean_low + (spec.mean_high - spec.mean_low) * rng.next_uniform();
  }
  for (auto& v : p.log_stddevs) {
    v = std::log(spec.stddev_low + (spec.stddev_high - spec.stddev_low) * rng.next_uniform());
  }
  p.weights_re.resize(components);
  for (auto& v : p.weights_re) v = rng.next_uniform();
  if (spec.complex_weights) {
    p.weights_im.resize(components);
    for (auto& v : p.weights_im) v = rng.next_gaussian();
  }
  return p;
}

ParamVector init_gmm(std::size_t components, std::size_t dim, const InitSpec& spec,
                     RngStream& rng) {
  ParamVector p;
  p.kind = ModelKind::kGmm;
  p.components = components;
  p.dim = dim;
  p.means.resize(components * dim);
  p.log_stddevs.resize(components * dim);
  for (auto& v : p.means) {
    v = spec.mean_low + (spec.mean_high - spec.mean_low) * rng.next_uniform();
  }
  for (auto& v : p.log_stddevs) {
    v = std::log(spec.stddev_low + (spec.stddev_high - spec.stddev_low) * rng.next_uniform());
  }
  p.weights_re.assign(components, 0.0);
  return p;
}

InitSpec default_init_spec(const std::string& target_name, std::size_t dim) {
  InitSpec spec;
  if (target_name.rfind("hollow", 0) == 0) {
    spec.stddev_low = dim == 32 ? 6.0 : 5.0;
    spec.stddev_high = dim == 32 ? 8.0 : 7.0;
  } else if (target_name == "funnel10") {
    spec.mean_low = -4.0;
    spec.mean_high = 4.0;
    spec.stddev_low = 2.0;
    spec.stddev_high = 4.0;
  } else if (target_name == "ring") {
    // concentric starts avoid the split-lobe local optimum
    spec.mean_low = -0.3;
    spec.mean_high = 0.3;
    spec.stddev_low = 1.5;
    spec.stddev_high = 3.5;
  } else if (target_name == "deep_ring") {
    spec.mean_low = -0.2;
    spec.mean_high = 0.2;
    spec.stddev_low = 0.5;
    spec.stddev_high = 1.5;
  }
  return spec;
}

Gradient grad_log_q(const ParamVector& params, std::span<const double> x) {
  if (params.kind != ModelKind::kSquaredSmm) {
    throw InvalidInput("grad_log_q expects a squared model");
  }
  check_shape(params);
  if (x.size() != params.dim) throw InvalidInput("grad_log_q: point dimension mismatch");

  Tape tape;
  const Lifted L = lift(tape, params, true);
  const auto pairs = build_pair_terms(tape, L, params.components, params.dim);
  const NodeId lz = log_z_node(tape, pairs);
  std::vector<NodeId> xn(params.dim);
  for (std::size_t d = 0; d < params.dim; ++d) xn[d] = tape.constant(x[d]);
  const NodeId lt = log_tilde_node(tape, L, params.components, params.dim, xn);
  tape.backward(tape.sub(lt, lz));
  return collect(tape, L);
}

ObjectiveResult rloo_gradient(const ParamVector& params, const LogDensityFn& target_log_density,
                              const SampleBatch& samples) {
  if (params.kind != ModelKind::kSquaredSmm) {
    throw InvalidInput("rloo_gradient expects a squared model");
  }
  check_shape(params);
  const std::size_t s_count = samples.rows();
  if (s_count < 2) throw InvalidInput("rloo_gradient needs at least two samples");
  if (samples.dim != params.dim) throw InvalidInput("rloo_gradient: sample dimension mismatch");

  Tape tape;
  const Lifted L = lift(tape, params, true);
  const auto pairs = build_pair_terms(tape, L, params.components, params.dim);
  const NodeId lz = log_z_node(tape, pairs);
  const double lz_value = tape.value(lz);

  // Model and target contributions to the leave-one-out coefficients are
  // accumulated separately: the target enters only through n*t_s - sum(t),
  // so a constant added exactly to every log p~ value cancels outright and
  // the gradient is bit-identical.
  std::vector<NodeId> log_tilde(s_count);
  std::vector<double> model_part(s_count);
  std::vector<double> target_part(s_count);
  std::vector<NodeId> xn(params.dim);
  NeumaierSum model_total;
  NeumaierSum target_total;
  for (std::size_t s = 0; s < s_count; ++s) {
    const auto row = samples.row(s);
    for (std::size_t d = 0; d < params.dim; ++d) xn[d] = tape.constant(row[d]);
    log_tilde[s] = log_tilde_node(tape, L, params.components, params.dim, xn);
    model_part[s] = tape.value(log_tilde[s]) - lz_value;
    target_part[s] = target_log_density(row);
    model_total.add(model_part[s]);
    target_total.add(target_part[s]);
  }
  const double model_sum = model_total.result();
  const double target_sum = target_total.result();
  const double n = static_cast<double>(s_count);

  NodeId root = -1;
  NeumaierSum coef_sum;
  for (std::size_t s = 0; s < s_count; ++s) {
    const double numer =
        (n * model_part[s] - model_sum) - (n * target_part[s] - target_sum);
    const double coef = numer / (n * (n - 1.0));
    coef_sum.add(coef);
    const NodeId term = tape.mul_const(log_tilde[s], coef);
    root = s == 0 ? term : tape.add(root, term);
  }
  root = tape.add(root, tape.mul_const(lz, -coef_sum.result()));
  tape.backward(root);
  return {(model_sum - target_sum) / n, collect(tape, L)};
}

ObjectiveResult delta_vi_objective_at(const ParamVector& params, const Target& target,
                                      std::size_t draws_per_stratum, std::span<const double> z) {
  if (params.kind != ModelKind::kSquaredSmm) {
    throw InvalidInput("delta-vi expects a squared model");
  }
  check_shape(params);
  if (!target.grad_log_density) {
    throw UnsupportedTarget("delta-vi needs a target with an input gradient");
  }
  if (target.dim != params.dim) throw InvalidInput("delta-vi: target dimension mismatch");
  const std::size_t strata = pair_count(params);
  const std::size_t n = draws_per_stratum;
  if (n == 0) throw InvalidInput("delta-vi: need at least one draw per stratum");
  const std::size_t d_count = params.dim;
  if (z.size() != strata * n * d_count) throw InvalidInput("delta-vi: z batch size mismatch");

  Tape tape;
  const Lifted L = lift(tape, params, true);
  const auto pairs = build_pair_terms(tape, L, params.components, d_count);
  const NodeId lz = log_z_node(tape, pairs);

  NodeId value = -1;
  std::size_t zi = 0;
  std::vector<NodeId> m_prod(d_count), s_prod(d_count), xn(d_count);
  std::vector<double> xv(d_count);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto& pair = pairs[pi];
    const NodeId coef =
        tape.mul(tape.mul_const(pair.weight, pair.mult), tape.exp(tape.sub(pair.log_c, lz)));
    for (std::size_t d = 0; d < d_count; ++d) {
      const NodeId vk = L.var[pair.k * d_count + d];
      const NodeId vj = L.var[pair.j * d_count + d];
      const NodeId vsum = tape.add(vk, vj);
      m_prod[d] = tape.div(tape.add(tape.mul(L.means[pair.k * d_count + d], vj),
                                    tape.mul(L.means[pair.j * d_count + d], vk)),
                           vsum);
      s_prod[d] = tape.sqrt(tape.div(tape.mul(vk, vj), vsum));
    }
    NodeId sum = -1;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < d_count; ++d) {
        xn[d] = tape.add(m_prod[d], tape.mul_const(s_prod[d], z[zi++]));
        xv[d] = tape.value(xn[d]);
      }
      const NodeId lq = tape.sub(log_tilde_node(tape, L, params.components, d_count, xn), lz);
      const NodeId lp = tape.external(xn, target.log_density(xv), target.grad_log_density(xv));
      const NodeId ell = tape.sub(lq, lp);
      sum = i == 0 ? ell : tape.add(sum, ell);
    }
    const NodeId contribution = tape.mul(coef, tape.mul_const(sum, 1.0 / static_cast<double>(n)));
    value = pi == 0 ? contribution : tape.add(value, contribution);
  }
  tape.backward(value);
  return {tape.value(value), collect(tape, L)};
}

ObjectiveResult delta_vi_objective(const ParamVector& params, const Target& target, std::size_t s,
                                   RngStream& rng) {
  const std::size_t strata = pair_count(params);
  const std::size_t n = s / strata;
  if (n == 0) throw InvalidInput("delta-vi: sample budget smaller than the stratum count");
  const auto z = draw_standard_normals(strata * n * params.dim, rng);
  return delta_vi_objective_at(params, target, n, z);
}

ObjectiveResult selbo_objective_at(const ParamVector& params, const Target& target,
                                   std::size_t draws_per_stratum, std::span<const double> z) {
  if (params.kind != ModelKind::kGmm) throw InvalidInput("selbo expects an additive mixture");
  check_shape(params);
  if (!target.grad_log_density) {
    throw UnsupportedTarget("selbo needs a target with an input gradient");
  }
  if (target.dim != params.dim) throw InvalidInput("selbo: target dimension mismatch");
  const std::size_t k_count = params.components;
  const std::size_t d_count = params.dim;
  const std::size_t n = draws_per_stratum;
  if (n == 0) throw InvalidInput("selbo: need at least one draw per component");
  if (z.size() != k_count * n * d_count) throw InvalidInput("selbo: z batch size mismatch");

  Tape tape;
  const Lifted L = lift(tape, params, false);

  // softmax coefficients, shifted by the max logit (a constant)
  const double logit_shift = *std::max_element(params.weights_re.begin(), params.weights_re.end());
  std::vector<NodeId> expw(k_count);
  NodeId softmax_total = -1;
  for (std::size_t k = 0; k < k_count; ++k) {
    expw[k] = tape.exp(tape.add_const(L.wre[k], -logit_shift));
    softmax_total = k == 0 ? expw[k] : tape.add(softmax_total, expw[k]);
  }
  std::vector<NodeId> pi(k_count), sd(k_count * d_count);
  for (std::size_t k = 0; k < k_count; ++k) pi[k] = tape.div(expw[k], softmax_total);
  for (std::size_t i = 0; i < k_count * d_count; ++i) sd[i] = tape.exp(L.ls[i]);

  // log q(x) = shift + log sum_k pi_k exp(lpdf_k - shift)
  auto log_q_node = [&](std::span<const NodeId> x) {
    std::vector<NodeId> lpdf(k_count);
    double shift = -kInf;
    for (std::size_t k = 0; k < k_count; ++k) {
      NodeId acc = -1;
      for (std::size_t d = 0; d < d_count; ++d) {
        const NodeId g = tape.gauss_log_pdf(x[d], L.means[k * d_count + d], L.ls[k * d_count + d]);
        acc = d == 0 ? g : tape.add(acc, g);
      }
      lpdf[k] = acc;
      shift = std::max(shift, tape.value(acc));
    }
    if (!std::isfinite(shift)) {
      throw GradientAtZero("mixture log-density gradient requested where all components vanish");
    }
    NodeId sum = -1;
    for (std::size_t k = 0; k < k_count; ++k) {
      const NodeId term = tape.mul(pi[k], tape.exp(tape.add_const(lpdf[k], -shift)));
      sum = k == 0 ? term : tape.add(sum, term);
    }
    return tape.add_const(tape.log(sum), shift);
  };

  NodeId value = -1;
  std::size_t zi = 0;
  std::vector<NodeId> xn(d_count);
  std::vector<double> xv(d_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    NodeId sum = -1;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < d_count; ++d) {
        xn[d] = tape.add(L.means[k * d_count + d], tape.mul_const(sd[k * d_count + d], z[zi++]));
        xv[d] = tape.value(xn[d]);
      }
      const NodeId lq = log_q_node(xn);
      const NodeId lp = tape.external(xn, target.log_density(xv), target.grad_log_density(xv));
      const NodeId ell = tape.sub(lq, lp);
      sum = i == 0 ? ell : tape.add(sum, ell);
    }
    const NodeId contribution = tape.mul(pi[k], tape.mul_const(sum, 1.0 / static_cast<double>(n)));
    value = k == 0 ? contribution : tape.add(value, contribution);
  }
  tape.backward(value);
  return {tape.value(value), collect(tape, L)};
}

ObjectiveResult selbo_objective(const ParamVector& params, const Target& target, std::size_t s,
                                RngStream& rng) {
  const std::size_t n = s / params.components;
  if (n == 0) throw InvalidInput("selbo: sample budget smaller than the component count");
  const auto z = draw_standard_normals(params.components * n * params.dim, rng);
  return selbo_objective_at(params, target, n, z);
}

void adam_step(ParamVector& params, const Gradient& grad, AdamState& state, double learning_rate,
               double weight_decay) {
  auto flat = params.flat();
  if (grad.size() != flat.size()) throw InvalidInput("adam: gradient size mismatch");
  for (double g : grad) {
    if (!std::isfinite(g)) throw InvalidInput("adam: non-finite gradient entry");
  }
  if (state.m.empty()) {
    state.m.assign(flat.size(), 0.0);
    state.v.assign(flat.size(), 0.0);
  } else if (state.m.size() != flat.size()) {
    throw InvalidInput("adam: state size mismatch");
  }

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++state.t;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  const std::size_t decay_from = params.weight_offset();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * grad[i];
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    double step = learning_rate * m_hat / (std::sqrt(v_hat) + kEps);
    if (weight_decay > 0.0 && i >= decay_from) {
      step += learning_rate * weight_decay * flat[i];  // decoupled decay, weights only
    }
    flat[i] -= step;
  }
  params.set_flat(flat);
}

double estimate_loss(const ParamVector& params, const Target& target, Objective objective,
                     std::size_t samples, const AritsOptions& arits, RngStream& rng) {
  switch (objective) {
    case Objective::kDeltaVi: {
      const std::size_t strata = pair_count(params);
      const std::size_t n = samples / strata;
      if (n == 0) throw InvalidInput("delta-vi: sample budget smaller than the stratum count");
      const auto z = draw_standard_normals(strata * n * params.dim, rng);
      return delta_vi_objective_at(params, target, n, z).value;
    }
    case Objective::kSelboGmm: {
      const std::size_t n = samples / params.components;
      if (n == 0) throw InvalidInput("selbo: sample budget smaller than the component count");
      const auto z = draw_standard_normals(params.components * n * params.dim, rng);
      return selbo_objective_at(params, target, n, z).value;
    }
    case Objective::kRlooRejection:
    case Objective::kRlooArits: {
      const ComplexSmm model = params.to_smm();
      const SignedMixture expanded = expand(model);
      SampleBatch batch;
      if (objective == Objective::kRlooRejection) {
        batch = rejection_sample_exact_n(expanded, samples, 200 * samples + 1'000'000, rng);
      } else {
        batch = arits_sample(expanded, samples, arits, rng);
      }
      NeumaierSum acc;
      for (std::size_t i = 0; i < batch.rows(); ++i) {
        const auto row = batch.row(i);
        acc.add(model.log_density(row) - target.log_density(row));
      }
      return acc.result() / static_cast<double>(batch.rows());
    }
  }
  throw InvalidInput("estimate_loss: unknown objective");
}

TrainResult train(const ParamVector& initial, const Target& target, const TrainConfig& config) {
  check_shape(initial);
  if (target.dim != initial.dim) throw InvalidInput("train: target dimension mismatch");
  if (config.samples_per_step < 2) throw InvalidInput("train: need at least two samples per step");
  const bool squared = initial.kind == ModelKind::kSquaredSmm;
  if (config.objective == Objective::kSelboGmm && squared) {
    throw InvalidInput("train: selbo objective needs an additive-mixture model");
  }
  if (config.objective != Objective::kSelboGmm && !squared) {
    throw InvalidInput("train: this objective needs a squared model");
  }

  RngStream rng(config.seed);
  ParamVector params = initial;
  ParamVector last_good = initial;
  AdamState adam;
  TrainResult result;

  double best_loss = kInf;
  std::size_t since_improvement = 0;
  int consecutive_rollbacks = 0;

  auto record_checkpoint = [&](double loss, std::size_t step, const ParamVector& p) {
    Checkpoint ck{loss, step, p, 0.0};
    auto at = std::upper_bound(
        result.checkpoints.begin(), result.checkpoints.end(), loss,
        [](double value, const Checkpoint& c) { return value < c.train_loss; });
    result.checkpoints.insert(at, std::move(ck));
    if (result.checkpoints.size() > config.checkpoint_count) result.checkpoints.pop_back();
  };

  for (std::size_t step = 0; step < config.max_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss = std::numeric_limits<double>::quiet_NaN();
    Gradient grad;
    bool ok = true;
    try {
      switch (config.objective) {
        case Objective::kDeltaVi: {
          auto r = delta_vi_objective(params, target, config.samples_per_step, rng);
          loss = r.value;
          grad = std::move(r.grad);
          break;
        }
        case Objective::kSelboGmm: {
          auto r = selbo_objective(params, target, config.samples_per_step, rng);
          loss = r.value;
          grad = std::move(r.grad);
          break;
        }
        case Objective::kRlooRejection:
        case Objective::kRlooArits: {
          const SignedMixture expanded = expand(params.to_smm());
          SampleBatch batch;
          if (config.objective == Objective::kRlooRejection) {
            batch = rejection_sample_exact_n(expanded, config.samples_per_step,
                                             200 * config.samples_per_step + 1'000'000, rng);
          } else {
            batch = arits_sample(expanded, config.samples_per_step, config.arits, rng);
          }
          auto r = rloo_gradient(params, target.log_density, batch);
          loss = r.value;
          grad = std::move(r.grad);
          break;
        }
      }
      if (!std::isfinite(loss)) ok = false;
      for (double g : grad) {
        if (!std::isfinite(g)) {
          ok = false;
          break;
        }
      }
    } catch (const InvalidInput&) {
      throw;  // misconfiguration, not a numerical failure
    } catch (const UnsupportedTarget&) {
      throw;
    } catch (const Error&) {
      ok = false;  // degenerate model or failed sampling; roll the step back
    }

    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    result.loss_trace.push_back(loss);
    result.step_seconds.push_back(dt.count());

    if (!ok) {
      params = last_good;
      ++result.rollbacks;
      if (++consecutive_rollbacks >= 3) {
        throw TrainingAborted("three consecutive failed training steps");
      }
      ++since_improvement;
      if (config.patience > 0 && since_improvement >= config.patience) {
        result.early_stopped = true;
        break;
      }
      continue;
    }
    consecutive_rollbacks = 0;

    record_checkpoint(loss, step, params);
    if (loss < best_loss) {
      best_loss = loss;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }

    last_good = params;
    adam_step(params, grad, adam, config.learning_rate, config.weight_decay);

    if (config.patience > 0 && since_improvement >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }

  if (result.checkpoints.empty()) {
    throw TrainingAborted("no training step produced a finite loss");
  }

  if (config.reselect_reps == 0) {
    const auto& best = result.checkpoints.front();
    result.best = best.params;
    result.best_mean_loss = best.train_loss;
    result.best_step = best.step;
    return result;
  }

  for (auto& ck : result.checkpoints) {
    NeumaierSum acc;
    std::size_t good = 0;
    for (std::size_t r = 0; r < config.reselect_reps; ++r) {
      try {
        acc.add(estimate_loss(ck.params, target, config.objective, config.samples_per_step,
                              config.arits, rng));
        ++good;
      } catch (const Error&) {
        // a checkpoint that cannot be re-estimated keeps its failed reps out
        // of the mean
      }
    }
    ck.reselect_mean = good == 0 ? kInf : acc.result() / static_cast<double>(good);
  }

  const Checkpoint* chosen = nullptr;
  for (const auto& ck : result.checkpoints) {
    if (config.filter_negative_loss && !(ck.reselect_mean > -0.1)) continue;
    if (chosen == nullptr || ck.reselect_mean < chosen->reselect_mean) chosen = &ck;
  }
  if (chosen == nullptr) {
    for (const auto& ck : result.checkpoints) {
      if (chosen == nullptr || ck.reselect_mean < chosen->reselect_mean) chosen = &ck;
    }
  }
  result.best = chosen->params;
  result.best_mean_loss = chosen->reselect_mean;
  result.best_step = chosen->step;
  return result;
}

}  // namespace smm
