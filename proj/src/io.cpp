#include "smm/io.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "../vendor/json.hpp"
#include "smm/errors.hpp"

namespace smm {

namespace {

using Json = nlohmann::ordered_json;

std::vector<double> read_real_array(const Json& node, const char* field, std::size_t expected) {
  if (!node.is_array()) throw InvalidInput(std::string("model file: ") + field + " must be an array");
  if (node.size() != expected) {
    throw InvalidInput(std::string("model file: ") + field + " must have " +
                       std::to_string(expected) + " entries");
  }
  std::vector<double> out;
  out.reserve(node.size());
  for (const Json& v : node) {
    if (!v.is_number()) {
      throw InvalidInput(std::string("model file: ") + field + " entries must be numbers");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      throw InvalidInput(std::string("model file: ") + field + " entries must be finite");
    }
    out.push_back(d);
  }
  return out;
}

std::vector<std::vector<double>> read_matrix(const Json& node, const char* field, std::size_t k,
                                             std::size_t dim) {
  if (!node.is_array() || node.size() != k) {
    throw InvalidInput(std::string("model file: ") + field + " must be an array of " +
                       std::to_string(k) + " rows");
  }
  std::vector<std::vector<double>> out;
  out.reserve(k);
  for (const Json& row : node) out.push_back(read_real_array(row, field, dim));
  return out;
}

void validate_model(const ModelFile& model) {
  if (model.schema_version != 1) {
    throw InvalidInput("model file: unsupported schema_version (expected 1)");
  }
  if (model.type != "smm" && model.type != "gmm") {
    throw InvalidInput("model file: type must be \"smm\" or \"gmm\"");
  }
  if (model.dim < 1) throw InvalidInput("model file: dim must be at least 1");
  const std::size_t k = model.weights_re.size();
  if (k < 1) throw InvalidInput("model file: weights_re must be nonempty");
  if (model.weights_im.size() != k) {
    throw InvalidInput("model file: weights_im must match weights_re in length");
  }
  if (model.means.size() != k || model.stddevs.size() != k) {
    throw InvalidInput("model file: means and stddevs must have one row per weight");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (model.means[i].size() != model.dim || model.stddevs[i].size() != model.dim) {
      throw InvalidInput("model file: means and stddevs rows must have dim entries");
    }
    for (double s : model.stddevs[i]) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw InvalidInput("model file: stddevs must be positive and finite");
      }
    }
  }
  if (model.type == "gmm") {
    for (double w : model.weights_im) {
      if (w != 0.0) throw InvalidInput("model file: gmm weights_im must be all zero");
    }
    for (double w : model.weights_re) {
      if (!(w >= 0.0)) throw InvalidInput("model file: gmm weights_re must be nonnegative");
    }
  }
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open for writing: " + path);
  return out;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

void finish_csv(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error("write failed: " + path);
}

}  // namespace

ModelFile parse_model_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("model file: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InvalidInput("model file: top level must be an object");
  for (const char* field : {"schema_version", "type", "dim", "weights_re", "means", "stddevs"}) {
    if (!doc.contains(field)) {
      throw InvalidInput(std::string("model file: missing field ") + field);
    }
  }

  ModelFile model;
  if (!doc["schema_version"].is_number_integer()) {
    throw InvalidInput("model file: schema_version must be an integer");
  }
  model.schema_version = doc["schema_version"].get<int>();
  if (!doc["type"].is_string()) throw InvalidInput("model file: type must be a string");
  model.type = doc["type"].get<std::string>();
  if (!doc["dim"].is_number_integer() || doc["dim"].get<long long>() < 1) {
    throw InvalidInput("model file: dim must be a positive integer");
  }
  model.dim = doc["dim"].get<std::size_t>();

  if (!doc["weights_re"].is_array() || doc["weights_re"].empty()) {
    throw InvalidInput("model file: weights_re must be a nonempty array");
  }
  const std::size_t k = doc["weights_re"].size();
  model.weights_re = read_real_array(doc["weights_re"], "weights_re", k);
  model.weights_im = doc.contains("weights_im")
                         ? read_real_array(doc["weights_im"], "weights_im", k)
                         : std::vector<double>(k, 0.0);
  model.means = read_matrix(doc["means"], "means", k, model.dim);
  model.stddevs = read_matrix(doc["stddevs"], "stddevs", k, model.dim);
  validate_model(model);
  return model;
}

ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_model_json(buffer.str());
}

std::string model_to_json(const ModelFile& model) {
  validate_model(model);
  Json doc;
  doc["schema_version"] = model.schema_version;
  doc["type"] = model.type;
  doc["dim"] = model.dim;
  doc["weights_re"] = model.weights_re;
  doc["weights_im"] = model.weights_im;
  doc["means"] = model.means;
  doc["stddevs"] = model.stddevs;
  return doc.dump(2) + "\n";
}

void save_model_file(const ModelFile& model, const std::string& path) {
  std::ofstream out = open_output(path);
  out << model_to_json(model);
  finish_csv(out, path);
}

ComplexSmm to_smm(const ModelFile& model) {
  validate_model(model);
  if (model.type != "smm") throw InvalidInput("to_smm: model type is not \"smm\"");
  std::vector<GaussianComponent> components;
  components.reserve(model.weights_re.size());
  for (std::size_t i = 0; i < model.weights_re.size(); ++i) {
    components.emplace_back(model.means[i], model.stddevs[i]);
  }
  bool real_only = true;
  for (double w : model.weights_im) real_only = real_only && w == 0.0;
  if (real_only) return ComplexSmm::real_weighted(std::move(components), model.weights_re);
  std::vector<std::complex<double>> weights;
  weights.reserve(model.weights_re.size());
  for (std::size_t i = 0; i < model.weights_re.size(); ++i) {
    weights.emplace_back(model.weights_re[i], model.weights_im[i]);
  }
  return ComplexSmm(std::move(components), std::move(weights));
}

AdditiveMixture to_gmm(const ModelFile& model) {
  validate_model(model);
  if (model.type != "gmm") throw InvalidInput("to_gmm: model type is not \"gmm\"");
  std::vector<GaussianComponent> components;
  components.reserve(model.weights_re.size());
  for (std::size_t i = 0; i < model.weights_re.size(); ++i) {
    components.emplace_back(model.means[i], model.stddevs[i]);
  }
  return AdditiveMixture(model.weights_re, std::move(components));
}

ModelFile from_smm(const ComplexSmm& model) {
  ModelFile file;
  file.type = "smm";
  file.dim = model.dim();
  for (const std::complex<double>& w : model.weights()) {
    file.weights_re.push_back(w.real());
    file.weights_im.push_back(w.imag());
  }
  for (const GaussianComponent& c : model.components()) {
    file.means.push_back(c.mean());
    file.stddevs.push_back(c.stddev());
  }
  return file;
}

ModelFile from_gmm(const AdditiveMixture& model) {
  ModelFile file;
  file.type = "gmm";
  file.dim = model.dim();
  file.weights_re = model.coeffs();
  file.weights_im.assign(model.size(), 0.0);
  for (const GaussianComponent& c : model.components()) {
    file.means.push_back(c.mean());
    file.stddevs.push_back(c.stddev());
  }
  return file;
}

std::string format_g17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_experiment_csv(const std::string& path, std::span<const ExperimentRow> rows) {
  std::ofstream out = open_output(path);
  out << "experiment,method,D,K,S,seed,error,time_s,flags\n";
  for (const ExperimentRow& row : rows) {
    out << csv_escape(row.experiment) << ',' << csv_escape(row.method) << ',' << row.d << ','
        << row.k << ',' << row.s << ',' << row.seed << ',' << format_g17(row.error) << ','
        << format_g17(row.time_s) << ',' << csv_escape(row.flags) << '\n';
  }
  finish_csv(out, path);
}

void write_replication_csv(const std::string& path, std::span<const ReplicationRow> rows) {
  std::ofstream out = open_output(path);
  out << "method,S,R,mean,stddev,error_mean,error_std,flags\n";
  for (const ReplicationRow& row : rows) {
    out << csv_escape(row.method) << ',' << row.s << ',' << row.r << ','
        << format_g17(row.mean) << ',' << format_g17(row.stddev) << ','
        << format_g17(row.error_mean) << ',' << format_g17(row.error_std) << ','
        << csv_escape(row.flags) << '\n';
  }
  finish_csv(out, path);
}

void write_trace_csv(const std::string& path, std::span<const double> losses) {
  std::ofstream out = open_output(path);
  out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out << i << ',' << format_g17(losses[i]) << '\n';
  }
  finish_csv(out, path);
}

void write_timing_csv(const std::string& path, std::span<const double> seconds) {
  std::ofstream out = open_output(path);
  out << "step,seconds\n";
  for (std::size_t i = 0; i < seconds.size(); ++i) {
    out << i << ',' << format_g17(seconds[i]) << '\n';
  }
  finish_csv(out, path);
}

void write_metrics_csv(const std::string& path, std::span<const MetricReport> reports) {
  std::ofstream out = open_output(path);
  out << "metric,value,stddev,S,R,infinite_contributions,flags\n";
  for (const MetricReport& report : reports) {
    out << csv_escape(report.metric) << ',' << format_g17(report.value) << ','
        << format_g17(report.stddev) << ',' << report.samples << ',' << report.repetitions << ','
        << report.infinite_contributions << ','
        << (report.negative_suspect ? "negative_suspect" : "") << '\n';
  }
  finish_csv(out, path);
}

void write_samples_csv(const std::string& path, const SampleBatch& batch) {
  std::ofstream out = open_output(path);
  const bool with_component = batch.component.size() == batch.rows();
  for (std::size_t d = 0; d < batch.dim; ++d) {
    if (d > 0) out << ',';
    out << 'x' << d;
  }
  if (with_component) out << ",component";
  out << '\n';
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const std::span<const double> row = batch.row(i);
    for (std::size_t d = 0; d < batch.dim; ++d) {
      if (d > 0) out << ',';
      out << format_g17(row[d]);
    }
    if (with_component) out << ',' << batch.component[i];
    out << '\n';
  }
  finish_csv(out, path);
}

}  // namespace smm
