#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "../vendor/doctest.h"
#include "../vendor/json.hpp"
#include "smm/io.hpp"

// Exercises the installed binary end to end: argument validation, exit
// codes, output files, and byte-reproducibility of reruns.

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("smm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_path = dir / "stdout.txt";
  const fs::path err_path = dir / "stderr.txt";
  const std::string cmd = std::string(SMM_CLI_PATH) + " " + args + " >" +
                          out_path.string() + " 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

void write_gmm_file(const fs::path& path) {
  smm::ModelFile file;
  file.type = "gmm";
  file.dim = 1;
  file.weights_re = {0.25, 0.75};
  file.weights_im = {0.0, 0.0};
  file.means = {{-1.0}, {2.0}};
  file.stddevs = {{0.5}, {1.5}};
  smm::save_model_file(file, path.string());
}

// Near-complete cancellation: acceptance is so low that no realistic
// proposal budget yields a single draw.
void write_needle_file(const fs::path& path) {
  smm::ModelFile file;
  file.type = "smm";
  file.dim = 2;
  file.weights_re = {1.0, -0.9995};
  file.weights_im = {0.0, 0.0};
  file.means = {{0.0, 0.0}, {0.001, 0.0}};
  file.stddevs = {{1.0, 1.0}, {1.0, 1.0}};
  smm::save_model_file(file, path.string());
}

}  // namespace

TEST_CASE("cli rejects malformed invocations with exit code 2") {
  const fs::path dir = fresh_dir("validation");
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("--no-such-flag", dir).code == 2);
  CHECK(run_cli("frobnicate", dir).code == 2);
  CHECK(run_cli("sample --method arits", dir).code == 2);  // missing required opts

  const CliResult both = run_cli("model --random --preset ring --out " +
                                     (dir / "x.json").string(),
                                 dir);
  CHECK(both.code == 2);
  CHECK(both.err.find("exactly one of") != std::string::npos);

  CHECK(run_cli("model --random", dir).code == 2);  // no --out
  CHECK(run_cli("estimate --target nope --proposal " + (dir / "x.json").string() +
                    " --method delta_is",
                dir)
            .code == 2);
  CHECK(run_cli("experiment --kind mystery --out-dir " + (dir / "e").string(), dir).code == 2);
}

TEST_CASE("model subcommand writes, exports, and inspects model files") {
  const fs::path dir = fresh_dir("model");
  const fs::path random_path = dir / "random.json";
  const fs::path ring_path = dir / "ring.json";

  const CliResult made =
      run_cli("model --random --k 2 --d 2 --seed 7 --out " + random_path.string(), dir);
  CHECK(made.code == 0);
  const smm::ModelFile random_file = smm::load_model_file(random_path.string());
  CHECK(random_file.type == "smm");
  CHECK(random_file.dim == 2);
  CHECK(random_file.weights_re.size() == 2);

  CHECK(run_cli("model --preset ring --out " + ring_path.string(), dir).code == 0);
  const smm::ModelFile ring_file = smm::load_model_file(ring_path.string());
  CHECK(ring_file.type == "smm");
  CHECK(ring_file.dim == 2);

  const CliResult inspect = run_cli("model --inspect " + ring_path.string(), dir);
  CHECK(inspect.code == 0);
  CHECK(inspect.out.find("type: smm") != std::string::npos);
  CHECK(inspect.out.find("dim: 2") != std::string::npos);
  CHECK(inspect.out.find("acceptance_rate: 0.137") != std::string::npos);

  const fs::path gmm_path = dir / "gmm.json";
  write_gmm_file(gmm_path);
  const CliResult gmm_inspect = run_cli("model --inspect " + gmm_path.string(), dir);
  CHECK(gmm_inspect.code == 0);
  CHECK(gmm_inspect.out.find("coefficient_sum: 1") != std::string::npos);
}

TEST_CASE("sample subcommand draws, tags, and refuses per model type") {
  const fs::path dir = fresh_dir("sample");
  const fs::path model_path = dir / "ring.json";
  REQUIRE(run_cli("model --preset ring --out " + model_path.string(), dir).code == 0);

  SUBCASE("ancestral draws from a squared model are refused") {
    const CliResult r = run_cli("sample --model " + model_path.string() +
                                    " --method ancestral --out " + (dir / "s.csv").string(),
                                dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("no latent component") != std::string::npos);
  }

  SUBCASE("rejection sampling tags rows with the proposing stratum") {
    const fs::path out = dir / "rej.csv";
    const CliResult r = run_cli("sample --model " + model_path.string() +
                                    " --method rejection --s 2000 --seed 3 --out " + out.string(),
                                dir);
    CHECK(r.code == 0);
    const std::string content = slurp(out);
    CHECK(content.rfind("x0,x1,component\n", 0) == 0);
    CHECK(fs::exists(dir / "rej.csv.config.toml"));
  }

  SUBCASE("part views use latent-component samplers") {
    const CliResult r = run_cli("sample --model " + model_path.string() +
                                    " --part positive --method stratified --s 100 --seed 1" +
                                    " --out " + (dir / "pos.csv").string(),
                                dir);
    CHECK(r.code == 0);
    CHECK(slurp(dir / "pos.csv").rfind("x0,x1,component\n", 0) == 0);
    CHECK(run_cli("sample --model " + model_path.string() +
                      " --part weird --method ancestral --out " + (dir / "w.csv").string(),
                  dir)
              .code == 2);
  }

  SUBCASE("gmm models sample ancestrally and reject part views") {
    const fs::path gmm_path = dir / "gmm.json";
    write_gmm_file(gmm_path);
    const CliResult r = run_cli("sample --model " + gmm_path.string() +
                                    " --method ancestral --s 50 --seed 2 --out " +
                                    (dir / "g.csv").string(),
                                dir);
    CHECK(r.code == 0);
    CHECK(slurp(dir / "g.csv").rfind("x0,component\n", 0) == 0);
    CHECK(run_cli("sample --model " + gmm_path.string() +
                      " --method ancestral --part positive --out " + (dir / "gp.csv").string(),
                  dir)
              .code == 2);
  }
}

TEST_CASE("identical seeds reproduce sample files byte for byte") {
  const fs::path dir = fresh_dir("repro");
  const fs::path model_path = dir / "ring.json";
  REQUIRE(run_cli("model --preset ring --out " + model_path.string(), dir).code == 0);

  const std::string base = "sample --model " + model_path.string() +
                           " --method rejection --s 2000 --seed 11 --out ";
  REQUIRE(run_cli(base + (dir / "a.csv").string(), dir).code == 0);
  REQUIRE(run_cli(base + (dir / "b.csv").string(), dir).code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  REQUIRE(run_cli("sample --model " + model_path.string() +
                      " --method rejection --s 2000 --seed 12 --out " + (dir / "c.csv").string(),
                  dir)
              .code == 0);
  CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));
}

TEST_CASE("the echoed config reruns the identical invocation") {
  const fs::path dir = fresh_dir("config");
  const fs::path model_path = dir / "ring.json";
  REQUIRE(run_cli("model --preset ring --out " + model_path.string(), dir).code == 0);

  const fs::path out = dir / "draws.csv";
  REQUIRE(run_cli("sample --model " + model_path.string() +
                      " --method arits --s 300 --seed 9 --out " + out.string(),
                  dir)
              .code == 0);
  const std::string first = slurp(out);
  REQUIRE(!first.empty());

  const CliResult rerun = run_cli("--config " + out.string() + ".config.toml", dir);
  CHECK(rerun.code == 0);
  CHECK(slurp(out) == first);
}

TEST_CASE("estimate subcommand validates proposals and reproduces results") {
  const fs::path dir = fresh_dir("estimate");
  const fs::path ring_path = dir / "ring.json";
  REQUIRE(run_cli("model --preset ring --out " + ring_path.string(), dir).code == 0);
  const fs::path gmm_path = dir / "gmm.json";
  write_gmm_file(gmm_path);

  SUBCASE("method/proposal mismatches exit with 2") {
    CHECK(run_cli("estimate --target ring --proposal " + gmm_path.string() +
                      " --method delta_is",
                  dir)
              .code == 2);
    CHECK(run_cli("estimate --target ring --proposal " + ring_path.string() +
                      " --method uis_ancestral",
                  dir)
              .code == 2);
    CHECK(run_cli("estimate --target ring --proposal " + ring_path.string() +
                      " --method uis_rejection --scale-c 0",
                  dir)
              .code == 2);
    // dimension mismatch: 1-d proposal against the 2-d target
    CHECK(run_cli("estimate --target ring --proposal " + gmm_path.string() +
                      " --method uis_ancestral",
                  dir)
              .code == 2);
  }

  SUBCASE("a self-normalizing run reports its error against the known truth") {
    const std::string base = "estimate --target ring --proposal " + ring_path.string() +
                             " --method uis_rejection --s 400 --reps 3 --seed 5 --out ";
    const CliResult r = run_cli(base + (dir / "e1.csv").string(), dir);
    CHECK(r.code == 0);
    CHECK(r.out.find("mean: ") != std::string::npos);
    CHECK(r.out.find("log_error_mean: ") != std::string::npos);
    REQUIRE(run_cli(base + (dir / "e2.csv").string(), dir).code == 0);
    CHECK(slurp(dir / "e1.csv") == slurp(dir / "e2.csv"));
    CHECK(slurp(dir / "e1.csv").rfind("method,S,R,mean,stddev,error_mean,error_std,flags\n", 0) ==
          0);
  }

  SUBCASE("a proposal that never accepts exits with 3") {
    const fs::path needle_path = dir / "needle.json";
    write_needle_file(needle_path);
    const CliResult r = run_cli("estimate --target ring --proposal " + needle_path.string() +
                                    " --method uis_rejection --s 1000 --reps 2 --seed 1",
                                dir);
    CHECK(r.code == 3);
    CHECK(r.err.find("every replication failed") != std::string::npos);
  }
}

TEST_CASE("experiment subcommand writes rows, summary, and config") {
  const fs::path dir = fresh_dir("experiment");

  SUBCASE("budget validation") {
    CHECK(run_cli("experiment --kind rq1 --out-dir " + (dir / "bad").string() +
                      " --budgets 2000,1000",
                  dir)
              .code == 2);
    CHECK(run_cli("experiment --kind rq1 --out-dir " + (dir / "bad").string() + " --budgets 500",
                  dir)
              .code == 2);
    CHECK(run_cli("experiment --kind nc --out-dir " + (dir / "bad").string() + " --target ring",
                  dir)
              .code == 2);
  }

  SUBCASE("tiny rq1 run") {
    const fs::path out_dir = dir / "rq1";
    const CliResult r = run_cli("experiment --kind rq1 --out-dir " + out_dir.string() +
                                    " --dim 2 --k 2 --budgets 1000 --instances 1 --warmup 0" +
                                    " --seed 3 --threads 2",
                                dir);
    CHECK(r.code == 0);
    const std::string rows = slurp(out_dir / "rows.csv");
    CHECK(rows.rfind("experiment,method,D,K,S,seed,error,time_s,flags\n", 0) == 0);
    CHECK(rows.find("delta_is") != std::string::npos);
    CHECK(fs::exists(out_dir / "config.toml"));

    const auto summary = nlohmann::json::parse(slurp(out_dir / "summary.json"));
    CHECK(summary.at("kind") == "rq1");
    CHECK(summary.at("failed_cells").get<int>() == 0);
    CHECK(summary.at("rows").get<int>() >= 2);
    CHECK(!summary.at("aggregates").empty());
  }
}

TEST_CASE("eval subcommand prints one line per metric") {
  const fs::path dir = fresh_dir("eval");
  const fs::path ring_path = dir / "ring.json";
  REQUIRE(run_cli("model --preset ring --out " + ring_path.string(), dir).code == 0);

  const CliResult r = run_cli("eval --target ring --model " + ring_path.string() +
                                  " --metrics elbo,rkl --s 500 --reps 2 --seed 1",
                              dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("elbo: ") != std::string::npos);
  CHECK(r.out.find("rkl: ") != std::string::npos);

  CHECK(run_cli("eval --target ring --model " + ring_path.string() + " --metrics entropy", dir)
            .code == 2);
}

TEST_CASE("train subcommand writes the run directory") {
  const fs::path dir = fresh_dir("train");
  const fs::path out_dir = dir / "run";
  const CliResult r = run_cli(
      "train --target ring --objective rloo_rejection --k 2 --init-seed 2 --seed 5"
      " --s 60 --lr 0.05 --max-steps 3 --patience 0 --checkpoints 1 --reselect-reps 1"
      " --mean-low -0.5 --mean-high 0.5 --stddev-low 2 --stddev-high 3"
      " --out-dir " +
          out_dir.string(),
      dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("best step: ") != std::string::npos);
  CHECK(slurp(out_dir / "trace.csv").rfind("step,loss\n", 0) == 0);
  CHECK(fs::exists(out_dir / "timing.csv"));
  CHECK(fs::exists(out_dir / "config.toml"));
  const smm::ModelFile trained = smm::load_model_file((out_dir / "model.json").string());
  CHECK(trained.type == "smm");
  CHECK(trained.dim == 2);

  const auto summary = nlohmann::json::parse(slurp(out_dir / "summary.json"));
  CHECK(summary.at("target") == "ring");
  CHECK(summary.at("steps").get<int>() == 3);

  CHECK(run_cli("train --target ring --objective mystery --out-dir " + (dir / "x").string(), dir)
            .code == 2);
}
