#include <atomic>
#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "../vendor/doctest.h"
#include "smm/errors.hpp"
#include "smm/experiments.hpp"
#include "smm/targets.hpp"
#include "test_util.hpp"

using namespace smm;

TEST_CASE("parallel_for covers the range exactly once, any thread count") {
  for (std::size_t threads : {1UL, 2UL, 7UL, 64UL}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(37, threads, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }

  SUBCASE("zero iterations is a no-op") {
    parallel_for(0, 4, [](std::size_t) { FAIL("must not be called"); });
  }

  SUBCASE("exceptions surface after the pool drains") {
    std::atomic<int> ran{0};
    CHECK_THROWS_AS(parallel_for(16, 4,
                                 [&](std::size_t i) {
                                   ran.fetch_add(1);
                                   if (i == 3) throw InvalidInput("boom");
                                 }),
                    InvalidInput);
    CHECK(ran.load() >= 1);
  }
}

TEST_CASE("replication rows summarize estimator statistics") {
  ReplicationStats stats;
  stats.requested = 10;
  stats.used = 8;
  stats.excluded = 2;
  stats.mean = 1.5;
  stats.stddev = 0.25;
  stats.error_mean = -3.0;
  stats.error_std = 0.5;
  stats.has_error = true;
  stats.flag_total = 3;

  const ReplicationRow row = make_replication_row("delta_is", 5000, stats);
  CHECK(row.method == "delta_is");
  CHECK(row.s == 5000);
  // r reports the requested replication count; exclusions show up in flags
  CHECK(row.r == 10);
  CHECK(row.mean == 1.5);
  CHECK(row.error_mean == -3.0);
  CHECK(row.flags == "excluded=2;unbounded_weights=3");

  SUBCASE("no usable replications leave NaNs") {
    ReplicationStats empty;
    empty.requested = 4;
    empty.excluded = 4;
    const ReplicationRow r = make_replication_row("x", 10, empty);
    CHECK(std::isnan(r.mean));
    CHECK(r.r == 4);
  }
}

TEST_CASE("estimator-scaling study produces a full grid") {
  Rq1Options options;
  options.dim = 2;
  options.components = 2;
  options.budgets = {1000, 2000};
  options.instances = 2;
  options.warmup_calls = 0;
  RngStream rng(1001, 0);
  const Rq1Result result = run_rq1(options, rng);

  SUBCASE("one row per instance and cell") {
    // per instance: delta_is at each budget, rejection at each budget,
    // inverse-transform at the smallest
    CHECK(result.rows.size() == 2 * (2 + 2 + 1));
    for (const auto& row : result.rows) {
      CHECK(row.experiment == "rq1");
      CHECK(row.d == 2);
      CHECK(row.k == 2);
      CHECK((row.s == 1000 || row.s == 2000));
      CHECK(row.time_s >= 0.0);
    }
  }

  SUBCASE("aggregates cover each method-budget pair") {
    std::set<std::string> seen;
    for (const auto& agg : result.aggregates) {
      seen.insert(agg.method + "@" + std::to_string(agg.s));
      CHECK(agg.cells <= 2);
    }
    CHECK(seen.count("delta_is@1000") == 1);
    CHECK(seen.count("delta_is@2000") == 1);
    CHECK(seen.count("rejection_mc@1000") == 1);
    CHECK(seen.count("rejection_mc@2000") == 1);
    CHECK(seen.count("arits_mc@1000") == 1);
    CHECK(seen.count("arits_mc@2000") == 0);
  }

  SUBCASE("thread count changes nothing but wallclock") {
    Rq1Options parallel = options;
    parallel.threads = 4;
    RngStream rng2(1001, 0);
    const Rq1Result again = run_rq1(parallel, rng2);
    REQUIRE(again.rows.size() == result.rows.size());
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      CHECK(again.rows[i].method == result.rows[i].method);
      CHECK(again.rows[i].error == result.rows[i].error);
      CHECK(again.rows[i].seed == result.rows[i].seed);
    }
  }

  SUBCASE("budget validation") {
    Rq1Options bad = options;
    bad.budgets = {2000, 1000};
    RngStream r(1001, 1);
    CHECK_THROWS_AS(run_rq1(bad, r), InvalidInput);
    bad.budgets = {500};
    CHECK_THROWS_AS(run_rq1(bad, r), InvalidInput);
    bad.budgets = {};
    CHECK_THROWS_AS(run_rq1(bad, r), InvalidInput);
  }
}

TEST_CASE("safe-component grid study sweeps beta and sigma") {
  SafeStudyOptions options;
  options.target_name = "deep_ring";
  options.betas = {0.0, 0.2};
  options.sigmas = {3.0, 5.0};
  options.samples = 400;
  options.reps = 6;
  RngStream rng(1002, 0);
  const SafeStudyResult result = run_safe_study(options, rng);

  SUBCASE("grid order is beta-major") {
    REQUIRE(result.cells.size() == 4);
    CHECK(result.cells[0].beta == 0.0);
    CHECK(result.cells[0].sigma == 3.0);
    CHECK(result.cells[1].beta == 0.0);
    CHECK(result.cells[1].sigma == 5.0);
    CHECK(result.cells[2].beta == 0.2);
    CHECK(result.cells[3].sigma == 5.0);
    CHECK(result.rows.size() == 4);
    CHECK(result.rows[2].method == "safe_delta_is[beta=0.2,sigma=3]");
  }

  SUBCASE("beta zero cells ignore sigma entirely") {
    CHECK(result.cells[0].stats.values == result.cells[1].stats.values);
  }

  SUBCASE("the best cell minimizes the replication variance") {
    double best = std::numeric_limits<double>::infinity();
    double bb = -1.0, bs = -1.0;
    for (const auto& cell : result.cells) {
      if (cell.stats.used < 2) continue;
      const double v = cell.stats.stddev * cell.stats.stddev;
      if (v < best) {
        best = v;
        bb = cell.beta;
        bs = cell.sigma;
      }
    }
    CHECK(result.best_beta == bb);
    CHECK(result.best_sigma == bs);
    CHECK(result.best_variance == doctest::Approx(best).epsilon(1e-15));
  }

  SUBCASE("deterministic") {
    RngStream rng2(1002, 0);
    const SafeStudyResult again = run_safe_study(options, rng2);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(again.cells[i].stats.values == result.cells[i].stats.values);
    }
  }

  SUBCASE("validation") {
    SafeStudyOptions bad = options;
    bad.betas = {0.5, 1.0};
    RngStream r(1002, 1);
    CHECK_THROWS_AS(run_safe_study(bad, r), InvalidInput);
    bad = options;
    bad.target_name = "funnel2";  // no squared form to perturb
    CHECK_THROWS_AS(run_safe_study(bad, r), UnsupportedTarget);
  }
}

TEST_CASE("normalizing-constant estimation runs every applicable method") {
  const Target ring = make_catalog_target("ring");
  auto gmm = std::make_shared<const AdditiveMixture>(ring.expanded->positive_part());

  NcOptions options;
  options.samples = 400;
  options.reps = 5;
  options.safe_beta = 0.1;
  options.safe_sigma = 3.0;

  RngStream rng(1003, 0);
  const NcResult result = run_nc_estimation(ring, ring.smm_form, gmm, options, rng);

  SUBCASE("method rows appear in declaration order") {
    REQUIRE(result.rows.size() == 5);
    CHECK(result.rows[0].method == "uis_rejection");
    CHECK(result.rows[1].method == "uis_arits");
    CHECK(result.rows[2].method == "delta_is");
    CHECK(result.rows[3].method == "safe_delta_is");
    CHECK(result.rows[4].method == "uis_gmm");
    for (const auto& row : result.rows) {
      CHECK(row.s == 400);
      CHECK(row.r == 5);
      // truth is 1: every method should sit within a loose band
      CHECK(std::fabs(row.mean - 1.0) < 0.5);
    }
  }

  SUBCASE("fixed method streams: dropping one method leaves the rest bit-identical") {
    NcOptions no_arits = options;
    no_arits.include_arits = false;
    RngStream rng2(1003, 0);
    const NcResult partial = run_nc_estimation(ring, ring.smm_form, nullptr, no_arits, rng2);
    REQUIRE(partial.rows.size() == 3);
    CHECK(partial.rows[0].mean == result.rows[0].mean);  // uis_rejection
    CHECK(partial.rows[1].mean == result.rows[2].mean);  // delta_is
    CHECK(partial.rows[2].mean == result.rows[3].mean);  // safe_delta_is
  }

  SUBCASE("scale factor moves the truth") {
    NcOptions scaled = options;
    scaled.scale_c = 2.0;
    scaled.include_arits = false;
    scaled.safe_sigma = 0.0;  // skip the safe method too
    RngStream rng3(1003, 0);
    const NcResult doubled = run_nc_estimation(ring, ring.smm_form, nullptr, scaled, rng3);
    REQUIRE(doubled.rows.size() == 2);
    for (const auto& row : doubled.rows) {
      CHECK(std::fabs(row.mean - 2.0) < 1.0);
    }
  }

  SUBCASE("dimension caps disable the inverse-transform route") {
    NcOptions capped = options;
    capped.arits_max_dim = 1;
    RngStream rng4(1003, 0);
    const NcResult r = run_nc_estimation(ring, ring.smm_form, nullptr, capped, rng4);
    for (const auto& row : r.rows) CHECK(row.method != "uis_arits");
  }

  SUBCASE("validation") {
    RngStream r(1003, 1);
    CHECK_THROWS_AS(run_nc_estimation(ring, nullptr, nullptr, options, r), InvalidInput);
    Target no_z = make_catalog_target("ring");
    no_z.exact_log_z.reset();
    CHECK_THROWS_AS(run_nc_estimation(no_z, ring.smm_form, nullptr, options, r),
                    UnsupportedTarget);
  }
}
