#include "smm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "smm/errors.hpp"
#include "smm/signed_log.hpp"

namespace smm {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

SignedLogValue positive_log_value(double log_abs) {
  return {log_abs, log_abs == kNegInf ? 0 : 1};
}

std::string format_grid_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string stats_flags(const ReplicationStats& stats) {
  std::string flags;
  if (stats.excluded > 0) flags = "excluded=" + std::to_string(stats.excluded);
  if (stats.flag_total > 0) {
    if (!flags.empty()) flags += ";";
    flags += "unbounded_weights=" + std::to_string(stats.flag_total);
  }
  return flags;
}

ReplicationRow failed_replication_row(std::string method, std::size_t s, const char* what) {
  ReplicationRow row;
  row.method = std::move(method);
  row.s = s;
  row.r = 0;
  row.mean = kNan;
  row.stddev = kNan;
  row.error_mean = kNan;
  row.error_std = kNan;
  row.flags = what;
  return row;
}

struct MeanStd {
  double mean = kNan;
  double std = kNan;
  std::size_t count = 0;
};

MeanStd summarize_finite(const std::vector<double>& values) {
  MeanStd out;
  NeumaierSum sum;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sum.add(v);
    ++out.count;
  }
  if (out.count == 0) return out;
  out.mean = sum.result() / static_cast<double>(out.count);
  if (out.count > 1) {
    NeumaierSum var;
    for (double v : values) {
      if (!std::isfinite(v)) continue;
      var.add((v - out.mean) * (v - out.mean));
    }
    out.std = std::sqrt(var.result() / static_cast<double>(out.count - 1));
  }
  return out;
}

}  // namespace

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

ReplicationRow make_replication_row(std::string method, std::size_t s,
                                    const ReplicationStats& stats) {
  ReplicationRow row;
  row.method = std::move(method);
  row.s = s;
  row.r = stats.requested;
  row.mean = stats.used > 0 ? stats.mean : kNan;
  row.stddev = stats.used > 1 ? stats.stddev : kNan;
  row.error_mean = stats.has_error && stats.used > 0 ? stats.error_mean : kNan;
  row.error_std = stats.has_error && stats.used > 1 ? stats.error_std : kNan;
  row.flags = stats_flags(stats);
  return row;
}

Rq1Result run_rq1(const Rq1Options& options, RngStream& rng) {
  if (options.dim < 1 || options.components < 2) {
    throw InvalidInput("run_rq1: need dim >= 1 and components >= 2");
  }
  if (options.instances < 1) throw InvalidInput("run_rq1: need at least one instance");
  if (options.budgets.empty()) throw InvalidInput("run_rq1: empty budget list");
  for (std::size_t i = 0; i < options.budgets.size(); ++i) {
    const std::size_t b = options.budgets[i];
    if (b < 1'000 || b > 1'000'000) {
      throw InvalidInput("run_rq1: budgets must lie in [1e3, 1e6]");
    }
    if (i > 0 && b <= options.budgets[i - 1]) {
      throw InvalidInput("run_rq1: budgets must be strictly increasing");
    }
  }

  const std::size_t nb = options.budgets.size();
  const std::size_t cells_per_instance = 2 * nb + 1;
  Rq1Result result;
  result.rows.assign(options.instances * cells_per_instance, ExperimentRow{});

  parallel_for(options.instances, options.threads, [&](std::size_t inst_idx) {
    RngStream inst_rng = rng.substream(inst_idx);
    const Rq1Instance inst = make_rq1_instance(options.dim, options.components, inst_rng);
    const SignedMixture& model = *inst.expanded;
    const double truth = inst.exact_expectation;

    // f * q in signed log form: the importance-sampling integrand whose
    // integral is E_q[f].
    const SignedLogDensityFn weighted = [&](std::span<const double> x) {
      return positive_log_value(inst.integrand.log_value(x) + model.log_density(x));
    };
    const RealFn plain = [&](std::span<const double> x) { return inst.integrand.value(x); };

    const std::size_t warm_count = std::min<std::size_t>(options.budgets.front(), 1'000);
    for (std::size_t w = 0; w < options.warmup_calls; ++w) {
      RngStream warm = inst_rng.substream(50 + w);
      RngStream r0 = warm.substream(0);
      delta_is(model, weighted, warm_count, r0);
      try {
        RngStream r1 = warm.substream(1);
        rejection_mc(model, plain, warm_count, r1);
      } catch (const NoAcceptance&) {
      }
      RngStream r2 = warm.substream(2);
      arits_sample(model, std::min<std::size_t>(warm_count, 100), options.arits, r2);
    }

    std::size_t cell = 0;
    const auto emit = [&](const std::string& method, std::size_t s,
                          const std::function<Estimate(RngStream&)>& run) {
      ExperimentRow row;
      row.experiment = "rq1";
      row.method = method;
      row.d = options.dim;
      row.k = options.components;
      row.s = s;
      row.seed = inst_idx * 1'000 + cell;
      RngStream cell_rng = inst_rng.substream(100 + cell);
      try {
        const auto t0 = std::chrono::steady_clock::now();
        const Estimate est = run(cell_rng);
        const auto t1 = std::chrono::steady_clock::now();
        row.time_s = std::chrono::duration<double>(t1 - t0).count();
        row.error = log_relative_error(est.value, truth);
        if (est.unbounded_weight_flags > 0) {
          row.flags = "unbounded_weights=" + std::to_string(est.unbounded_weight_flags);
        }
      } catch (const Error& e) {
        row.time_s = kNan;
        row.error = kNan;
        row.flags = e.what();
      }
      result.rows[inst_idx * cells_per_instance + cell] = std::move(row);
      ++cell;
    };

    for (std::size_t b : options.budgets) {
      emit("delta_is", b,
           [&](RngStream& r) { return delta_is(model, weighted, b, r); });
    }
    for (std::size_t b : options.budgets) {
      emit("rejection_mc", b,
           [&](RngStream& r) { return rejection_mc(model, plain, b, r); });
    }
    emit("arits_mc", options.budgets.front(), [&](RngStream& r) {
      const SampleBatch batch = arits_sample(model, options.budgets.front(), options.arits, r);
      NeumaierSum acc;
      for (std::size_t i = 0; i < batch.rows(); ++i) acc.add(inst.integrand.value(batch.row(i)));
      Estimate est;
      est.value = acc.result() / static_cast<double>(batch.rows());
      return est;
    });
  });

  // Aggregate each (method, budget) column over instances.
  const auto aggregate = [&](const std::string& method, std::size_t s) {
    std::vector<double> errors;
    std::vector<double> times;
    for (const ExperimentRow& row : result.rows) {
      if (row.method != method || row.s != s) continue;
      errors.push_back(row.error);
      times.push_back(row.time_s);
    }
    const MeanStd e = summarize_finite(errors);
    const MeanStd t = summarize_finite(times);
    Rq1Aggregate agg;
    agg.method = method;
    agg.s = s;
    agg.error_mean = e.mean;
    agg.error_std = e.std;
    agg.time_mean = t.mean;
    agg.time_std = t.std;
    agg.cells = e.count;
    result.aggregates.push_back(std::move(agg));
  };
  for (std::size_t b : options.budgets) aggregate("delta_is", b);
  for (std::size_t b : options.budgets) aggregate("rejection_mc", b);
  aggregate("arits_mc", options.budgets.front());
  return result;
}

SafeStudyResult run_safe_study(const SafeStudyOptions& options, RngStream& rng) {
  if (options.samples == 0 || options.reps == 0) {
    throw InvalidInput("run_safe_study: samples and reps must be positive");
  }
  if (options.betas.empty() || options.sigmas.empty()) {
    throw InvalidInput("run_safe_study: empty grid");
  }
  for (double b : options.betas) {
    if (!(b >= 0.0 && b < 1.0)) throw InvalidInput("run_safe_study: beta must lie in [0, 1)");
  }
  for (double s : options.sigmas) {
    if (!(s > 0.0)) throw InvalidInput("run_safe_study: sigma must be positive");
  }

  const Target target = make_catalog_target(options.target_name);
  if (!target.smm_form) {
    throw UnsupportedTarget("run_safe_study: target has no squared-mixture form");
  }
  if (!target.exact_log_z) {
    throw UnsupportedTarget("run_safe_study: target has no exact normalizer");
  }

  RngStream perturb_rng = rng.substream(0);
  const ComplexSmm proposal =
      perturb_proposal(*target.smm_form, options.perturb_scale, perturb_rng);
  const SignedMixture expanded = expand(proposal);
  const double truth = std::exp(*target.exact_log_z);

  const SignedLogDensityFn integrand = [&target](std::span<const double> x) {
    return positive_log_value(target.log_density(x));
  };

  // Every cell replicates over the same parent stream, so substream r of
  // cell (beta, sigma) sees the draws substream r of beta = 0 would see.
  const RngStream rep_parent = rng.substream(1);

  const std::size_t n_sigma = options.sigmas.size();
  SafeStudyResult result;
  result.cells.assign(options.betas.size() * n_sigma, SafeCell{});

  parallel_for(result.cells.size(), options.threads, [&](std::size_t ci) {
    const double beta = options.betas[ci / n_sigma];
    const double sigma = options.sigmas[ci % n_sigma];
    const SafeProposalSpec spec{beta, {}, sigma};
    SafeCell cell;
    cell.beta = beta;
    cell.sigma = sigma;
    cell.stats = replicate(
        [&](RngStream& r) { return safe_delta_is(expanded, spec, integrand, options.samples, r); },
        options.reps, rep_parent, truth);
    result.cells[ci] = std::move(cell);
  });

  bool found = false;
  for (const SafeCell& cell : result.cells) {
    const std::string method = "safe_delta_is[beta=" + format_grid_value(cell.beta) +
                               ",sigma=" + format_grid_value(cell.sigma) + "]";
    result.rows.push_back(make_replication_row(method, options.samples, cell.stats));
    if (cell.stats.used < 2) continue;
    const double variance = cell.stats.stddev * cell.stats.stddev;
    if (!found || variance < result.best_variance) {
      found = true;
      result.best_beta = cell.beta;
      result.best_sigma = cell.sigma;
      result.best_variance = variance;
    }
  }
  if (!found) throw Error("run_safe_study: no cell produced replicated estimates");
  return result;
}

NcResult run_nc_estimation(const Target& target, std::shared_ptr<const ComplexSmm> smm_proposal,
                           std::shared_ptr<const AdditiveMixture> gmm_proposal,
                           const NcOptions& options, RngStream& rng) {
  if (!smm_proposal) throw InvalidInput("run_nc_estimation: null proposal");
  if (options.samples == 0 || options.reps == 0) {
    throw InvalidInput("run_nc_estimation: samples and reps must be positive");
  }
  if (!(options.scale_c > 0.0)) throw InvalidInput("run_nc_estimation: scale_c must be positive");
  if (!target.exact_log_z) {
    throw UnsupportedTarget("run_nc_estimation: target has no exact normalizer");
  }
  if (smm_proposal->dim() != target.dim ||
      (gmm_proposal && gmm_proposal->dim() != target.dim)) {
    throw InvalidInput("run_nc_estimation: proposal dimension mismatch");
  }

  const double log_c = std::log(options.scale_c);
  const double target_log_z = *target.exact_log_z;
  // c times the normalized target: integrates to exactly c.
  const SignedLogDensityFn integrand = [&target, log_c, target_log_z](std::span<const double> x) {
    return positive_log_value(log_c + target.log_density(x) - target_log_z);
  };

  const SignedMixture expanded = expand(*smm_proposal);
  const LogDensityFn smm_log_density = [&expanded](std::span<const double> x) {
    return expanded.log_density(x);
  };
  const std::size_t cap = 200 * options.samples + 1'000'000;

  struct MethodSpec {
    std::string name;
    std::uint64_t stream;  // fixed per method so dropping one shifts nothing
    std::function<Estimate(RngStream&)> run;
  };
  std::vector<MethodSpec> methods;
  methods.push_back({"uis_rejection", 0, [&](RngStream& r) {
                       const SampleBatch batch =
                           rejection_sample_exact_n(expanded, options.samples, cap, r);
                       return uis(integrand, batch, smm_log_density);
                     }});
  if (options.include_arits && target.dim <= options.arits_max_dim) {
    methods.push_back({"uis_arits", 1, [&](RngStream& r) {
                         const SampleBatch batch =
                             arits_sample(expanded, options.samples, options.arits, r);
                         return uis(integrand, batch, smm_log_density);
                       }});
  }
  methods.push_back({"delta_is", 2, [&](RngStream& r) {
                       return delta_is(expanded, integrand, options.samples, r);
                     }});
  if (options.safe_sigma > 0.0) {
    const SafeProposalSpec spec{options.safe_beta, {}, options.safe_sigma};
    methods.push_back({"safe_delta_is", 3, [&, spec](RngStream& r) {
                         return safe_delta_is(expanded, spec, integrand, options.samples, r);
                       }});
  }
  if (gmm_proposal) {
    const LogDensityFn gmm_log_density = [gmm_proposal](std::span<const double> x) {
      return gmm_proposal->log_density(x);
    };
    methods.push_back({"uis_gmm", 4, [&, gmm_log_density](RngStream& r) {
                         const SampleBatch batch =
                             ancestral_sample(*gmm_proposal, options.samples, r);
                         return uis(integrand, batch, gmm_log_density);
                       }});
  }

  NcResult result;
  result.rows.assign(methods.size(), ReplicationRow{});
  parallel_for(methods.size(), options.threads, [&](std::size_t mi) {
    const MethodSpec& method = methods[mi];
    RngStream parent = rng.substream(method.stream);
    try {
      const ReplicationStats stats =
          replicate(method.run, options.reps, parent, options.scale_c);
      result.rows[mi] = make_replication_row(method.name, options.samples, stats);
    } catch (const Error& e) {
      result.rows[mi] = failed_replication_row(method.name, options.samples, e.what());
    }
  });
  return result;
}

}  // namespace smm
