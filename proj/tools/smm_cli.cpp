// Command-line front end: model construction and inspection, sampling,
// training, evaluation, single estimates, and experiment runners.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure,
// 4 experiment finished with failed cells.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "../vendor/CLI11.hpp"
#include "../vendor/json.hpp"
#include "smm/errors.hpp"
#include "smm/estimators.hpp"
#include "smm/experiments.hpp"
#include "smm/io.hpp"
#include "smm/metrics.hpp"
#include "smm/mixture.hpp"
#include "smm/rng.hpp"
#include "smm/samplers.hpp"
#include "smm/targets.hpp"
#include "smm/vi.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPartial = 4;

using Json = nlohmann::ordered_json;

int g_exit_code = 0;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw smm::InvalidInput("cannot open for writing: " + path);
  out << text;
  out.flush();
  if (!out) throw smm::Error("write failed: " + path);
}

// Resolved options of the whole invocation, loadable back via
// `smm --config <path>`: the parsed subcommand appears as a [section] that
// re-triggers it, everything else as inert defaults.
void echo_config(CLI::App* sub, const std::string& path) {
  CLI::App* root = sub;
  while (root->get_parent() != nullptr) root = root->get_parent();
  write_text(path, root->config_to_str(true, false));
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw smm::InvalidInput("cannot create directory " + dir + ": " + ec.message());
}

double json_safe(double v) { return std::isfinite(v) ? v : 0.0; }

Json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

// ---- shared option bundles ----

struct TargetOptions {
  std::string name;
  std::string blr_csv;
  bool no_bias = false;

  void attach(CLI::App* sub, bool required) {
    auto* name_opt = sub->add_option("--target", name, "Catalog target name");
    auto* csv_opt = sub->add_option("--blr-csv", blr_csv,
                                    "Logistic-regression dataset (CSV with a y column)");
    sub->add_flag("--no-bias", no_bias, "Skip the appended bias covariate for --blr-csv");
    name_opt->excludes(csv_opt);
    if (required) {
      // one of the two must be given; checked in resolve()
    }
  }

  smm::Target resolve() const {
    if (!name.empty() && !blr_csv.empty()) {
      throw smm::InvalidInput("give either --target or --blr-csv, not both");
    }
    if (!name.empty()) return smm::make_catalog_target(name);
    if (!blr_csv.empty()) return smm::make_blr_target_from_csv(blr_csv, !no_bias);
    throw smm::InvalidInput("a target is required: --target <name> or --blr-csv <file>");
  }
};

struct AritsFlags {
  smm::AritsOptions options;

  void attach(CLI::App* sub) {
    sub->add_option("--arits-lower", options.lower, "Inverse-CDF search lower bound")
        ->capture_default_str();
    sub->add_option("--arits-upper", options.upper, "Inverse-CDF search upper bound")
        ->capture_default_str();
    sub->add_option("--arits-tol", options.tol, "Inverse-CDF bisection tolerance")
        ->capture_default_str();
  }
};

// ---- model file <-> trainable parameters ----

smm::ParamVector params_from_model_file(const smm::ModelFile& file) {
  smm::ParamVector p;
  p.components = file.weights_re.size();
  p.dim = file.dim;
  for (const auto& row : file.means) p.means.insert(p.means.end(), row.begin(), row.end());
  for (const auto& row : file.stddevs) {
    for (double s : row) p.log_stddevs.push_back(std::log(s));
  }
  if (file.type == "gmm") {
    p.kind = smm::ModelKind::kGmm;
    p.weights_re.reserve(p.components);
    for (double w : file.weights_re) {
      if (!(w > 0.0)) {
        throw smm::InvalidInput("gmm init: weights must be strictly positive to form logits");
      }
      p.weights_re.push_back(std::log(w));
    }
    return p;
  }
  p.kind = smm::ModelKind::kSquaredSmm;
  p.weights_re = file.weights_re;
  bool real_only = true;
  for (double w : file.weights_im) real_only = real_only && w == 0.0;
  if (!real_only) p.weights_im = file.weights_im;
  return p;
}

smm::ModelFile model_file_from_params(const smm::ParamVector& params) {
  if (params.kind == smm::ModelKind::kGmm) return smm::from_gmm(params.to_gmm());
  return smm::from_smm(params.to_smm());
}

// ---- model ----

struct ModelArgs {
  std::string inspect_path;
  std::string preset;
  bool random = false;
  std::size_t k = 2;
  std::size_t dim = 2;
  std::uint64_t seed = 1;
  bool real_weights = false;
  double mean_low = -1.0, mean_high = 1.0;
  double stddev_low = 1.0, stddev_high = 3.0;
  std::string out;
};

void run_model(const ModelArgs& args) {
  const int modes = static_cast<int>(!args.inspect_path.empty()) +
                    static_cast<int>(!args.preset.empty()) + static_cast<int>(args.random);
  if (modes != 1) {
    throw smm::InvalidInput("choose exactly one of --inspect, --preset, --random");
  }

  if (!args.inspect_path.empty()) {
    const smm::ModelFile file = smm::load_model_file(args.inspect_path);
    std::cout << "type: " << file.type << "\ndim: " << file.dim
              << "\ncomponents: " << file.weights_re.size() << '\n';
    if (file.type == "smm") {
      const smm::ComplexSmm model = smm::to_smm(file);
      const smm::SignedMixture expanded = smm::expand(model);
      std::cout << "z: " << smm::format_g17(model.z()) << "\nz_plus: "
                << smm::format_g17(model.z_plus()) << "\nz_minus: "
                << smm::format_g17(model.z_minus()) << "\nlog_z: "
                << smm::format_g17(model.log_z()) << "\nacceptance_rate: "
                << smm::format_g17(expanded.acceptance_rate())
                << "\nexpanded_terms: " << expanded.positives().size() + expanded.negatives().size()
                << '\n';
    } else {
      smm::NeumaierSum total;
      for (double w : file.weights_re) total.add(w);
      std::cout << "coefficient_sum: " << smm::format_g17(total.result()) << '\n';
    }
    return;
  }

  if (args.out.empty()) throw smm::InvalidInput("--out is required to write a model");

  if (!args.preset.empty()) {
    const smm::Target target = smm::make_catalog_target(args.preset);
    if (!target.smm_form) {
      throw smm::InvalidInput("target " + args.preset +
                              " has no squared-mixture form to export");
    }
    smm::save_model_file(smm::from_smm(*target.smm_form), args.out);
    std::cout << "wrote " << args.out << '\n';
    return;
  }

  smm::InitSpec spec;
  spec.mean_low = args.mean_low;
  spec.mean_high = args.mean_high;
  spec.stddev_low = args.stddev_low;
  spec.stddev_high = args.stddev_high;
  spec.complex_weights = !args.real_weights;
  smm::RngStream rng(args.seed);
  const smm::ParamVector params = smm::init_squared_smm(args.k, args.dim, spec, rng);
  smm::save_model_file(smm::from_smm(params.to_smm()), args.out);
  std::cout << "wrote " << args.out << '\n';
}

// ---- sample ----

struct SampleArgs {
  std::string model_path;
  std::string method;
  std::string part = "squared";
  std::size_t s = 1'000;
  std::uint64_t seed = 1;
  std::string out;
  AritsFlags arits;
};

void run_sample(const SampleArgs& args, CLI::App* sub) {
  const smm::ModelFile file = smm::load_model_file(args.model_path);
  smm::RngStream rng(args.seed);
  smm::SampleBatch batch;

  if (file.type == "gmm") {
    if (args.part != "squared") {
      throw smm::InvalidInput("--part applies to squared models only");
    }
    const smm::AdditiveMixture mixture = smm::to_gmm(file);
    if (args.method == "ancestral") {
      batch = smm::ancestral_sample(mixture, args.s, rng);
    } else if (args.method == "stratified") {
      batch = smm::stratified_sample(mixture, args.s, rng);
    } else {
      throw smm::InvalidInput("method " + args.method + " needs a squared model");
    }
  } else {
    const smm::ComplexSmm model = smm::to_smm(file);
    const smm::SignedMixture expanded = smm::expand(model);
    if (args.part == "squared") {
      if (args.method == "ancestral" || args.method == "stratified") {
        throw smm::InvalidInput(
            "squared subtractive mixtures have no latent component to draw, so ancestral and "
            "stratified sampling do not apply; use --method arits or --method rejection, or "
            "sample one expanded part via --part positive / --part negative");
      }
      if (args.method == "arits") {
        batch = smm::arits_sample(expanded, args.s, args.arits.options, rng);
      } else if (args.method == "rejection") {
        batch = smm::rejection_sample(expanded, args.s, rng);
      } else {
        throw smm::InvalidInput("unknown method: " + args.method);
      }
    } else if (args.part == "positive" || args.part == "negative") {
      if (args.method != "ancestral" && args.method != "stratified") {
        throw smm::InvalidInput("part views support ancestral and stratified sampling only");
      }
      const smm::AdditiveMixture part =
          args.part == "positive" ? expanded.positive_part() : expanded.negative_part();
      batch = args.method == "ancestral" ? smm::ancestral_sample(part, args.s, rng)
                                         : smm::stratified_sample(part, args.s, rng);
    } else {
      throw smm::InvalidInput("--part must be squared, positive, or negative");
    }
  }

  smm::write_samples_csv(args.out, batch);
  echo_config(sub, args.out + ".config.toml");
  std::cout << "wrote " << batch.rows() << " rows to " << args.out << '\n';
}

// ---- train ----

struct TrainArgs {
  TargetOptions target;
  std::string objective = "rloo_rejection";
  std::string init_model;
  std::size_t k = 2;
  std::uint64_t init_seed = 0;
  bool real_weights = false;
  double mean_low = std::numeric_limits<double>::quiet_NaN();
  double mean_high = std::numeric_limits<double>::quiet_NaN();
  double stddev_low = std::numeric_limits<double>::quiet_NaN();
  double stddev_high = std::numeric_limits<double>::quiet_NaN();
  smm::TrainConfig config;
  AritsFlags arits;
  std::string out_dir;
};

smm::Objective parse_objective(const std::string& name) {
  if (name == "delta_vi") return smm::Objective::kDeltaVi;
  if (name == "rloo_rejection") return smm::Objective::kRlooRejection;
  if (name == "rloo_arits") return smm::Objective::kRlooArits;
  if (name == "selbo_gmm") return smm::Objective::kSelboGmm;
  throw smm::InvalidInput("unknown objective: " + name);
}

void run_train(TrainArgs& args, CLI::App* sub) {
  const smm::Target target = args.target.resolve();
  args.config.objective = parse_objective(args.objective);
  args.config.arits = args.arits.options;

  smm::ParamVector initial;
  if (!args.init_model.empty()) {
    initial = params_from_model_file(smm::load_model_file(args.init_model));
    if (initial.dim != target.dim) {
      throw smm::InvalidInput("init model dimension does not match the target");
    }
  } else {
    smm::InitSpec spec = smm::default_init_spec(target.name, target.dim);
    if (!std::isnan(args.mean_low)) spec.mean_low = args.mean_low;
    if (!std::isnan(args.mean_high)) spec.mean_high = args.mean_high;
    if (!std::isnan(args.stddev_low)) spec.stddev_low = args.stddev_low;
    if (!std::isnan(args.stddev_high)) spec.stddev_high = args.stddev_high;
    spec.complex_weights = !args.real_weights;
    smm::RngStream init_rng(args.init_seed);
    initial = args.config.objective == smm::Objective::kSelboGmm
                  ? smm::init_gmm(args.k, target.dim, spec, init_rng)
                  : smm::init_squared_smm(args.k, target.dim, spec, init_rng);
  }

  ensure_directory(args.out_dir);
  echo_config(sub, args.out_dir + "/config.toml");

  const smm::TrainResult result = smm::train(initial, target, args.config);

  smm::write_trace_csv(args.out_dir + "/trace.csv", result.loss_trace);
  smm::write_timing_csv(args.out_dir + "/timing.csv", result.step_seconds);
  smm::save_model_file(model_file_from_params(result.best), args.out_dir + "/model.json");

  Json summary;
  summary["schema_version"] = 1;
  summary["target"] = target.name;
  summary["objective"] = args.objective;
  summary["steps"] = result.loss_trace.size();
  summary["best_step"] = result.best_step;
  summary["best_mean_loss"] = number_or_null(result.best_mean_loss);
  summary["rollbacks"] = result.rollbacks;
  summary["early_stopped"] = result.early_stopped;
  Json checkpoints = Json::array();
  for (const smm::Checkpoint& c : result.checkpoints) {
    Json entry;
    entry["step"] = c.step;
    entry["train_loss"] = number_or_null(c.train_loss);
    entry["reselect_mean"] = number_or_null(c.reselect_mean);
    checkpoints.push_back(std::move(entry));
  }
  summary["checkpoints"] = std::move(checkpoints);
  write_text(args.out_dir + "/summary.json", summary.dump(2) + "\n");

  std::cout << "best step: " << result.best_step
            << "\nbest mean loss: " << smm::format_g17(result.best_mean_loss)
            << "\nsteps run: " << result.loss_trace.size()
            << (result.early_stopped ? " (early stop)" : "") << "\nrollbacks: " << result.rollbacks
            << "\nwrote " << args.out_dir << "/model.json\n";
}

// ---- eval ----

struct EvalArgs {
  TargetOptions target;
  std::string model_path;
  std::vector<std::string> metrics = {"elbo"};
  std::size_t s = 10'000;
  std::size_t reps = 10;
  std::uint64_t seed = 1;
  std::string sampler = "rejection";
  AritsFlags arits;
  std::string out;
};

void run_eval(const EvalArgs& args, CLI::App* sub) {
  const smm::Target target = args.target.resolve();
  const smm::ModelFile file = smm::load_model_file(args.model_path);
  if (file.dim != target.dim) {
    throw smm::InvalidInput("model dimension does not match the target");
  }

  smm::ModelView view;
  if (file.type == "gmm") {
    view = smm::make_gmm_view(std::make_shared<smm::AdditiveMixture>(smm::to_gmm(file)));
  } else {
    const smm::ModelSampler route = args.sampler == "arits" ? smm::ModelSampler::kArits
                                                            : smm::ModelSampler::kRejection;
    if (args.sampler != "arits" && args.sampler != "rejection") {
      throw smm::InvalidInput("--sampler must be rejection or arits");
    }
    view = smm::make_smm_view(std::make_shared<smm::ComplexSmm>(smm::to_smm(file)), route,
                              args.arits.options);
  }

  std::vector<smm::MetricReport> reports;
  smm::RngStream rng(args.seed);
  for (const std::string& metric : args.metrics) {
    smm::RngStream metric_rng = rng.substream(reports.size());
    if (metric == "fkl") {
      reports.push_back(smm::estimate_fkl(target, view, args.s, args.reps, metric_rng));
    } else if (metric == "rkl") {
      reports.push_back(smm::estimate_rkl(target, view, args.s, args.reps, metric_rng));
    } else if (metric == "elbo") {
      reports.push_back(smm::estimate_elbo(target, view, args.s, args.reps, metric_rng));
    } else {
      throw smm::InvalidInput("unknown metric: " + metric + " (choose fkl, rkl, elbo)");
    }
  }

  for (const smm::MetricReport& report : reports) {
    std::cout << report.metric << ": " << smm::format_g17(report.value)
              << " (stddev " << smm::format_g17(report.stddev) << ", S=" << report.samples
              << ", R=" << report.repetitions << ")";
    if (report.infinite_contributions > 0) {
      std::cout << " [infinite_contributions=" << report.infinite_contributions << "]";
    }
    if (report.negative_suspect) std::cout << " [negative_suspect]";
    std::cout << '\n';
  }
  if (!args.out.empty()) {
    smm::write_metrics_csv(args.out, reports);
    echo_config(sub, args.out + ".config.toml");
    std::cout << "wrote " << args.out << '\n';
  }
}

// ---- estimate ----

struct EstimateArgs {
  TargetOptions target;
  std::string proposal_path;
  std::string method;
  std::size_t s = 10'000;
  std::size_t reps = 10;
  std::uint64_t seed = 1;
  double scale_c = 1.0;
  double safe_beta = 0.1;
  double safe_sigma = 3.0;
  AritsFlags arits;
  std::string out;
};

void run_estimate(const EstimateArgs& args, CLI::App* sub) {
  const smm::Target target = args.target.resolve();
  const smm::ModelFile file = smm::load_model_file(args.proposal_path);
  if (file.dim != target.dim) {
    throw smm::InvalidInput("proposal dimension does not match the target");
  }
  if (!(args.scale_c > 0.0)) throw smm::InvalidInput("--scale-c must be positive");

  // With a known normalizer the integrand is c * p(x), so truth = c; without
  // one it is c * p~(x) and the estimate targets c * Z with no error column.
  const double log_c = std::log(args.scale_c);
  const double log_z_shift = target.exact_log_z ? *target.exact_log_z : 0.0;
  const std::optional<double> truth =
      target.exact_log_z ? std::optional<double>(args.scale_c) : std::nullopt;
  const smm::SignedLogDensityFn integrand = [&](std::span<const double> x) {
    const double la = log_c + target.log_density(x) - log_z_shift;
    return smm::SignedLogValue{la, std::isinf(la) && la < 0 ? 0 : 1};
  };

  std::function<smm::Estimate(smm::RngStream&)> run;
  const std::size_t cap = 200 * args.s + 1'000'000;
  std::shared_ptr<smm::SignedMixture> expanded;
  std::shared_ptr<smm::AdditiveMixture> mixture;

  if (file.type == "gmm") {
    if (args.method != "uis_ancestral") {
      throw smm::InvalidInput("a gmm proposal supports --method uis_ancestral only");
    }
    mixture = std::make_shared<smm::AdditiveMixture>(smm::to_gmm(file));
    const smm::LogDensityFn logq = [mixture](std::span<const double> x) {
      return mixture->log_density(x);
    };
    run = [=, &args](smm::RngStream& r) {
      return smm::uis(integrand, smm::ancestral_sample(*mixture, args.s, r), logq);
    };
  } else {
    expanded = std::make_shared<smm::SignedMixture>(smm::expand(smm::to_smm(file)));
    const smm::LogDensityFn logq = [expanded](std::span<const double> x) {
      return expanded->log_density(x);
    };
    if (args.method == "uis_rejection") {
      run = [=, &args](smm::RngStream& r) {
        return smm::uis(integrand, smm::rejection_sample_exact_n(*expanded, args.s, cap, r), logq);
      };
    } else if (args.method == "uis_arits") {
      run = [=, &args](smm::RngStream& r) {
        return smm::uis(integrand, smm::arits_sample(*expanded, args.s, args.arits.options, r),
                        logq);
      };
    } else if (args.method == "delta_is") {
      run = [=, &args](smm::RngStream& r) {
        return smm::delta_is(*expanded, integrand, args.s, r);
      };
    } else if (args.method == "safe_delta_is") {
      const smm::SafeProposalSpec spec{args.safe_beta, {}, args.safe_sigma};
      run = [=, &args](smm::RngStream& r) {
        return smm::safe_delta_is(*expanded, spec, integrand, args.s, r);
      };
    } else if (args.method == "uis_ancestral") {
      throw smm::InvalidInput(
          "uis_ancestral needs a gmm proposal; squared models lack latent-variable sampling");
    } else {
      throw smm::InvalidInput("unknown method: " + args.method);
    }
  }

  const smm::RngStream parent(args.seed);
  const smm::ReplicationStats stats = smm::replicate(run, args.reps, parent, truth);
  if (stats.used == 0) {
    std::cerr << "error: every replication failed (no acceptances)\n";
    g_exit_code = kExitNumerical;
    return;
  }

  const smm::ReplicationRow row = smm::make_replication_row(args.method, args.s, stats);
  std::cout << "mean: " << smm::format_g17(row.mean) << "\nstddev: " << smm::format_g17(row.stddev)
            << '\n';
  if (truth) {
    std::cout << "log_error_mean: " << smm::format_g17(row.error_mean)
              << "\nlog_error_std: " << smm::format_g17(row.error_std) << '\n';
  }
  if (!row.flags.empty()) std::cout << "flags: " << row.flags << '\n';
  if (!args.out.empty()) {
    smm::write_replication_csv(args.out, {&row, 1});
    echo_config(sub, args.out + ".config.toml");
    std::cout << "wrote " << args.out << '\n';
  }
}

// ---- experiment ----

struct ExperimentArgs {
  std::string kind;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  // rq1
  smm::Rq1Options rq1;
  // safe study
  smm::SafeStudyOptions safe;
  // nc estimation
  std::string nc_target;
  std::string nc_proposal;
  std::string nc_gmm_proposal;
  smm::NcOptions nc;
  bool no_arits = false;
  AritsFlags arits;
};

void run_experiment(ExperimentArgs& args, CLI::App* sub) {
  ensure_directory(args.out_dir);
  echo_config(sub, args.out_dir + "/config.toml");
  smm::RngStream rng(args.seed);
  std::size_t failed_cells = 0;

  Json summary;
  summary["schema_version"] = 1;
  summary["kind"] = args.kind;
  summary["seed"] = args.seed;

  if (args.kind == "rq1") {
    args.rq1.threads = args.threads;
    args.rq1.arits = args.arits.options;
    const smm::Rq1Result result = smm::run_rq1(args.rq1, rng);
    smm::write_experiment_csv(args.out_dir + "/rows.csv", result.rows);
    for (const smm::ExperimentRow& row : result.rows) {
      if (!std::isfinite(row.error)) ++failed_cells;
    }
    Json aggregates = Json::array();
    for (const smm::Rq1Aggregate& agg : result.aggregates) {
      Json entry;
      entry["method"] = agg.method;
      entry["S"] = agg.s;
      entry["error_mean"] = number_or_null(agg.error_mean);
      entry["error_std"] = number_or_null(agg.error_std);
      entry["time_mean"] = number_or_null(agg.time_mean);
      entry["time_std"] = number_or_null(agg.time_std);
      entry["cells"] = agg.cells;
      aggregates.push_back(std::move(entry));
    }
    summary["aggregates"] = std::move(aggregates);
    summary["rows"] = result.rows.size();
  } else if (args.kind == "safe_study") {
    args.safe.threads = args.threads;
    const smm::SafeStudyResult result = smm::run_safe_study(args.safe, rng);
    smm::write_replication_csv(args.out_dir + "/rows.csv", result.rows);
    for (const smm::SafeCell& cell : result.cells) {
      if (cell.stats.used == 0) ++failed_cells;
    }
    summary["target"] = args.safe.target_name;
    summary["best_beta"] = result.best_beta;
    summary["best_sigma"] = result.best_sigma;
    summary["best_variance"] = json_safe(result.best_variance);
    summary["rows"] = result.rows.size();
  } else if (args.kind == "nc") {
    if (args.nc_target.empty() || args.nc_proposal.empty()) {
      throw smm::InvalidInput("nc needs --target and --proposal");
    }
    const smm::Target target = smm::make_catalog_target(args.nc_target);
    const auto proposal =
        std::make_shared<smm::ComplexSmm>(smm::to_smm(smm::load_model_file(args.nc_proposal)));
    std::shared_ptr<smm::AdditiveMixture> gmm;
    if (!args.nc_gmm_proposal.empty()) {
      gmm = std::make_shared<smm::AdditiveMixture>(
          smm::to_gmm(smm::load_model_file(args.nc_gmm_proposal)));
    }
    args.nc.include_arits = !args.no_arits;
    args.nc.arits = args.arits.options;
    args.nc.threads = args.threads;
    const smm::NcResult result = smm::run_nc_estimation(target, proposal, gmm, args.nc, rng);
    smm::write_replication_csv(args.out_dir + "/rows.csv", result.rows);
    Json methods = Json::array();
    for (const smm::ReplicationRow& row : result.rows) {
      if (row.r == 0 || !std::isfinite(row.mean)) ++failed_cells;
      Json entry;
      entry["method"] = row.method;
      entry["mean"] = number_or_null(row.mean);
      entry["error_mean"] = number_or_null(row.error_mean);
      entry["flags"] = row.flags;
      methods.push_back(std::move(entry));
    }
    summary["target"] = args.nc_target;
    summary["methods"] = std::move(methods);
    summary["rows"] = result.rows.size();
  } else {
    throw smm::InvalidInput("--kind must be rq1, safe_study, or nc");
  }

  summary["failed_cells"] = failed_cells;
  write_text(args.out_dir + "/summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << args.out_dir << "/rows.csv and summary.json\n";
  if (failed_cells > 0) {
    std::cerr << "warning: " << failed_cells << " cell(s) failed; see flags column\n";
    g_exit_code = kExitPartial;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subtractive-mixture sampling, estimation, and variational inference"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read a previously echoed TOML config");

  // model
  auto model_args = std::make_shared<ModelArgs>();
  CLI::App* model = app.add_subcommand("model", "Construct or inspect a model file");
  model->configurable();
  model->add_option("--inspect", model_args->inspect_path, "Print a model file's summary");
  model->add_option("--preset", model_args->preset,
                    "Export a catalog target's squared form (ring, deep_ring, hollow16, ...)");
  model->add_flag("--random", model_args->random, "Draw a random squared model");
  model->add_option("--k", model_args->k, "Components for --random")->capture_default_str();
  model->add_option("--d", model_args->dim, "Dimension for --random")->capture_default_str();
  model->add_option("--seed", model_args->seed, "Seed for --random")->capture_default_str();
  model->add_flag("--real-weights", model_args->real_weights, "Real weights only for --random");
  model->add_option("--mean-low", model_args->mean_low)->capture_default_str();
  model->add_option("--mean-high", model_args->mean_high)->capture_default_str();
  model->add_option("--stddev-low", model_args->stddev_low)->capture_default_str();
  model->add_option("--stddev-high", model_args->stddev_high)->capture_default_str();
  model->add_option("--out", model_args->out, "Output model file");
  model->callback([model_args] { run_model(*model_args); });

  // sample
  auto sample_args = std::make_shared<SampleArgs>();
  CLI::App* sample = app.add_subcommand("sample", "Draw samples from a model file");
  sample->configurable();
  sample->add_option("--model", sample_args->model_path, "Model file")->required();
  sample->add_option("--method", sample_args->method, "ancestral|stratified|arits|rejection")
      ->required();
  sample->add_option("--part", sample_args->part, "squared|positive|negative")
      ->capture_default_str();
  sample->add_option("--s", sample_args->s, "Sample count (rejection: proposal budget)")
      ->capture_default_str();
  sample->add_option("--seed", sample_args->seed, "RNG seed")->capture_default_str();
  sample->add_option("--out", sample_args->out, "Output CSV")->required();
  sample_args->arits.attach(sample);
  sample->callback([sample_args, sample] { run_sample(*sample_args, sample); });

  // train
  auto train_args = std::make_shared<TrainArgs>();
  CLI::App* train = app.add_subcommand("train", "Fit a model to a target by gradient descent");
  train->configurable();
  train_args->target.attach(train, true);
  train->add_option("--objective", train_args->objective,
                    "delta_vi|rloo_rejection|rloo_arits|selbo_gmm")
      ->capture_default_str();
  train->add_option("--init-model", train_args->init_model, "Starting point model file");
  train->add_option("--k", train_args->k, "Components for a random start")->capture_default_str();
  train->add_option("--init-seed", train_args->init_seed, "Seed for the random start")
      ->capture_default_str();
  train->add_flag("--real-weights", train_args->real_weights, "Real weights for a random start");
  train->add_option("--mean-low", train_args->mean_low, "Override the init mean range");
  train->add_option("--mean-high", train_args->mean_high, "Override the init mean range");
  train->add_option("--stddev-low", train_args->stddev_low, "Override the init stddev range");
  train->add_option("--stddev-high", train_args->stddev_high, "Override the init stddev range");
  train->add_option("--s", train_args->config.samples_per_step, "Samples per step")
      ->capture_default_str();
  train->add_option("--lr", train_args->config.learning_rate, "Adam learning rate")
      ->capture_default_str();
  train->add_option("--weight-decay", train_args->config.weight_decay,
                    "Decoupled decay on the weight block")
      ->capture_default_str();
  train->add_option("--max-steps", train_args->config.max_steps, "Step budget")
      ->capture_default_str();
  train->add_option("--patience", train_args->config.patience, "Early-stop patience (0 = off)")
      ->capture_default_str();
  train->add_option("--checkpoints", train_args->config.checkpoint_count, "Checkpoints kept")
      ->capture_default_str();
  train->add_option("--reselect-reps", train_args->config.reselect_reps,
                    "Fresh loss estimates per kept checkpoint")
      ->capture_default_str();
  train->add_flag("--filter-negative-loss", train_args->config.filter_negative_loss,
                  "Drop checkpoints whose re-estimated loss is below -0.1");
  train->add_option("--seed", train_args->config.seed, "Training seed")->capture_default_str();
  train_args->arits.attach(train);
  train->add_option("--out-dir", train_args->out_dir, "Output directory")->required();
  train->callback([train_args, train] { run_train(*train_args, train); });

  // eval
  auto eval_args = std::make_shared<EvalArgs>();
  CLI::App* eval = app.add_subcommand("eval", "Divergence metrics between a model and a target");
  eval->configurable();
  eval_args->target.attach(eval, true);
  eval->add_option("--model", eval_args->model_path, "Model file")->required();
  eval->add_option("--metrics", eval_args->metrics, "Any of fkl, rkl, elbo")
      ->delimiter(',')
      ->capture_default_str();
  eval->add_option("--s", eval_args->s, "Samples per repetition")->capture_default_str();
  eval->add_option("--reps", eval_args->reps, "Repetitions")->capture_default_str();
  eval->add_option("--seed", eval_args->seed, "RNG seed")->capture_default_str();
  eval->add_option("--sampler", eval_args->sampler, "Model sampler: rejection|arits")
      ->capture_default_str();
  eval_args->arits.attach(eval);
  eval->add_option("--out", eval_args->out, "Optional output CSV");
  eval->callback([eval_args, eval] { run_eval(*eval_args, eval); });

  // estimate
  auto estimate_args = std::make_shared<EstimateArgs>();
  CLI::App* estimate =
      app.add_subcommand("estimate", "Replicated integral estimate under a proposal model");
  estimate->configurable();
  estimate_args->target.attach(estimate, true);
  estimate->add_option("--proposal", estimate_args->proposal_path, "Proposal model file")
      ->required();
  estimate
      ->add_option("--method", estimate_args->method,
                   "uis_rejection|uis_arits|uis_ancestral|delta_is|safe_delta_is")
      ->required();
  estimate->add_option("--s", estimate_args->s, "Samples per replication")->capture_default_str();
  estimate->add_option("--reps", estimate_args->reps, "Replications")->capture_default_str();
  estimate->add_option("--seed", estimate_args->seed, "RNG seed")->capture_default_str();
  estimate->add_option("--scale-c", estimate_args->scale_c, "Integrand scale c")
      ->capture_default_str();
  estimate->add_option("--safe-beta", estimate_args->safe_beta, "Safe-component weight")
      ->capture_default_str();
  estimate->add_option("--safe-sigma", estimate_args->safe_sigma, "Safe-component stddev")
      ->capture_default_str();
  estimate_args->arits.attach(estimate);
  estimate->add_option("--out", estimate_args->out, "Optional output CSV");
  estimate->callback([estimate_args, estimate] { run_estimate(*estimate_args, estimate); });

  // experiment
  auto exp_args = std::make_shared<ExperimentArgs>();
  CLI::App* experiment = app.add_subcommand("experiment", "Run a study and write CSV + summary");
  experiment->configurable();
  experiment->add_option("--kind", exp_args->kind, "rq1|safe_study|nc")->required();
  experiment->add_option("--out-dir", exp_args->out_dir, "Output directory")->required();
  experiment->add_option("--seed", exp_args->seed, "RNG seed")->capture_default_str();
  experiment->add_option("--threads", exp_args->threads, "Worker cap for parallel cells")
      ->capture_default_str();
  experiment->add_option("--dim", exp_args->rq1.dim, "rq1: dimension")->capture_default_str();
  experiment->add_option("--k", exp_args->rq1.components, "rq1: proposal components")
      ->capture_default_str();
  experiment->add_option("--budgets", exp_args->rq1.budgets, "rq1: sample budgets")
      ->delimiter(',')
      ->capture_default_str();
  experiment->add_option("--instances", exp_args->rq1.instances, "rq1: random instances")
      ->capture_default_str();
  experiment->add_option("--warmup", exp_args->rq1.warmup_calls, "rq1: untimed warmup calls")
      ->capture_default_str();
  experiment->add_option("--target", exp_args->safe.target_name,
                         "safe_study/nc: catalog target")
      ->capture_default_str();
  experiment->add_option("--betas", exp_args->safe.betas, "safe_study: beta grid")
      ->delimiter(',')
      ->capture_default_str();
  experiment->add_option("--sigmas", exp_args->safe.sigmas, "safe_study: sigma grid")
      ->delimiter(',')
      ->capture_default_str();
  experiment->add_option("--s", exp_args->safe.samples, "safe_study/nc: samples per replication")
      ->capture_default_str();
  experiment->add_option("--reps", exp_args->safe.reps, "safe_study/nc: replications")
      ->capture_default_str();
  experiment->add_option("--perturb-scale", exp_args->safe.perturb_scale,
                         "safe_study: proposal stddev noise")
      ->capture_default_str();
  experiment->add_option("--proposal", exp_args->nc_proposal, "nc: squared proposal model file");
  experiment->add_option("--gmm-proposal", exp_args->nc_gmm_proposal,
                         "nc: additive proposal model file");
  experiment->add_option("--scale-c", exp_args->nc.scale_c, "nc: integrand scale")
      ->capture_default_str();
  experiment->add_option("--safe-beta", exp_args->nc.safe_beta, "nc: safe-component weight")
      ->capture_default_str();
  experiment->add_option("--safe-sigma", exp_args->nc.safe_sigma,
                         "nc: safe-component stddev (<= 0 skips)")
      ->capture_default_str();
  experiment->add_flag("--no-arits", exp_args->no_arits, "nc: skip the inverse-CDF method");
  experiment->add_option("--arits-max-dim", exp_args->nc.arits_max_dim,
                         "nc: dimension cap for the inverse-CDF method")
      ->capture_default_str();
  exp_args->arits.attach(experiment);
  experiment->callback([exp_args, experiment] {
    // nc shares --target/--s/--reps with the safe-study options.
    exp_args->nc_target = exp_args->safe.target_name;
    exp_args->nc.samples = exp_args->safe.samples;
    exp_args->nc.reps = exp_args->safe.reps;
    run_experiment(*exp_args, experiment);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  } catch (const smm::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const smm::UnsupportedTarget& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const smm::InvalidModel& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const smm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return g_exit_code;
}
