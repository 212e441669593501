#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "smm/experiments.hpp"
#include "smm/metrics.hpp"
#include "smm/mixture.hpp"
#include "smm/samplers.hpp"

namespace smm {

// On-disk model description. JSON object with fields:
//   schema_version : 1
//   type           : "smm" | "gmm"
//   dim            : D >= 1
//   weights_re     : K reals (squared model: real weight parts;
//                    mixture: nonnegative component weights)
//   weights_im     : K reals, optional, defaults to zeros; must be all
//                    zero for type "gmm"
//   means          : K arrays of D reals
//   stddevs        : K arrays of D positive reals
struct ModelFile {
  int schema_version = 1;
  std::string type;
  std::size_t dim = 0;
  std::vector<double> weights_re;
  std::vector<double> weights_im;
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> stddevs;
};

ModelFile parse_model_json(const std::string& text);
ModelFile load_model_file(const std::string& path);
// Doubles serialize shortest-round-trip, so save/load preserves every bit.
std::string model_to_json(const ModelFile& model);
void save_model_file(const ModelFile& model, const std::string& path);

ComplexSmm to_smm(const ModelFile& model);
AdditiveMixture to_gmm(const ModelFile& model);
ModelFile from_smm(const ComplexSmm& model);
ModelFile from_gmm(const AdditiveMixture& model);

// printf %.17g.
std::string format_g17(double value);

// Header: experiment,method,D,K,S,seed,error,time_s,flags
void write_experiment_csv(const std::string& path, std::span<const ExperimentRow> rows);
// Header: method,S,R,mean,stddev,error_mean,error_std,flags
void write_replication_csv(const std::string& path, std::span<const ReplicationRow> rows);
// Header: step,loss
void write_trace_csv(const std::string& path, std::span<const double> losses);
// Header: step,seconds
void write_timing_csv(const std::string& path, std::span<const double> seconds);
// Header: metric,value,stddev,S,R,infinite_contributions,flags
void write_metrics_csv(const std::string& path, std::span<const MetricReport> reports);
// Header: x0,...,x{D-1}[,component]
void write_samples_csv(const std::string& path, const SampleBatch& batch);

}  // namespace smm
