#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "../vendor/doctest.h"
#include "smm/errors.hpp"
#include "smm/metrics.hpp"
#include "smm/targets.hpp"
#include "test_util.hpp"

using namespace smm;

TEST_CASE("divergences vanish when the model is the target") {
  const Target ring = make_catalog_target("ring");
  const ModelView view = make_smm_view(ring.smm_form);
  RngStream rng(901, 0);

  SUBCASE("forward KL is zero to rounding") {
    RngStream sub(901, 1);
    const MetricReport fkl = estimate_fkl(ring, view, 2000, 3, sub);
    CHECK(fkl.metric == "fkl");
    CHECK(fkl.samples == 2000);
    CHECK(fkl.repetitions == 3);
    CHECK(std::fabs(fkl.value) < 1e-10);
    CHECK_FALSE(fkl.negative_suspect);
  }

  SUBCASE("reverse KL is zero to rounding") {
    RngStream sub(901, 2);
    const MetricReport rkl = estimate_rkl(ring, view, 2000, 3, sub);
    CHECK(std::fabs(rkl.value) < 1e-10);
  }

  SUBCASE("the ELBO equals log Z exactly when q = p~/Z") {
    RngStream sub(901, 3);
    const MetricReport elbo = estimate_elbo(ring, view, 2000, 3, sub);
    CHECK(elbo.value == doctest::Approx(*ring.exact_log_z).epsilon(1e-10));
    CHECK(elbo.stddev < 1e-10);
  }
}

TEST_CASE("metric estimates respond to real divergence") {
  const Target ring = make_catalog_target("ring");
  // a deliberately wrong model: isotropic gaussian covering the ring
  auto wide = std::make_shared<const AdditiveMixture>(
      AdditiveMixture({1.0}, {GaussianComponent({0.0, 0.0}, {4.0, 4.0})}));
  const ModelView view = make_gmm_view(wide);
  RngStream rng(902, 0);

  const MetricReport fkl = estimate_fkl(ring, view, 5000, 5, rng);
  CHECK(fkl.value > 0.05);

  RngStream rng2(902, 1);
  const MetricReport rkl = estimate_rkl(ring, view, 5000, 5, rng2);
  CHECK(rkl.value > 0.05);

  SUBCASE("ELBO is bounded by log Z and shifts with the unnormalized scale") {
    RngStream a(902, 2), b(902, 2);
    const MetricReport elbo = estimate_elbo(ring, view, 5000, 5, a);
    CHECK(elbo.value < *ring.exact_log_z);

    Target doubled = make_catalog_target("ring");
    const auto base_density = doubled.log_density;
    doubled.log_density = [base_density](std::span<const double> x) {
      return base_density(x) + std::log(2.0);
    };
    doubled.exact_log_z = *doubled.exact_log_z + std::log(2.0);
    const MetricReport elbo2 = estimate_elbo(doubled, view, 5000, 5, b);
    CHECK(elbo2.value == doctest::Approx(elbo.value + std::log(2.0)).epsilon(1e-9));

    // the reverse KL, which uses the normalizer, is invariant to the scale
    RngStream c(902, 3), d(902, 3);
    const MetricReport r1 = estimate_rkl(ring, view, 2000, 3, c);
    const MetricReport r2 = estimate_rkl(doubled, view, 2000, 3, d);
    CHECK(r1.value == doctest::Approx(r2.value).epsilon(1e-9));
  }
}

TEST_CASE("an inconsistent normalizer trips the negative-suspect flag") {
  Target ring = make_catalog_target("ring");
  // claim a smaller normalizer than the density carries: every log ratio
  // shifts down by 0.5 and the "divergence" goes negative
  ring.exact_log_z = *ring.exact_log_z - 0.5;
  const ModelView view = make_smm_view(ring.smm_form);
  RngStream rng(903, 0);
  const MetricReport rkl = estimate_rkl(ring, view, 500, 3, rng);
  CHECK(rkl.value == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(rkl.negative_suspect);
}

TEST_CASE("metrics validate the target capabilities") {
  const Target ring = make_catalog_target("ring");
  const ModelView view = make_smm_view(ring.smm_form);
  RngStream rng(904, 0);

  Target no_sampler = make_catalog_target("ring");
  no_sampler.exact_sampler = nullptr;
  CHECK_THROWS_AS(estimate_fkl(no_sampler, view, 100, 1, rng), UnsupportedTarget);

  Target no_z = make_catalog_target("ring");
  no_z.exact_log_z.reset();
  CHECK_THROWS_AS(estimate_fkl(no_z, view, 100, 1, rng), UnsupportedTarget);
  CHECK_THROWS_AS(estimate_rkl(no_z, view, 100, 1, rng), UnsupportedTarget);
  // the ELBO works with unnormalized targets
  CHECK_NOTHROW(estimate_elbo(no_z, view, 100, 1, rng));
}

TEST_CASE("model views sample through their advertised routes") {
  const Target ring = make_catalog_target("ring");

  SUBCASE("rejection and inverse-transform routes agree in distribution") {
    const ModelView rej = make_smm_view(ring.smm_form, ModelSampler::kRejection);
    const ModelView art = make_smm_view(ring.smm_form, ModelSampler::kArits);
    RngStream a(905, 0), b(905, 1);
    const SampleBatch ba = rej.sample(4000, a);
    const SampleBatch bb = art.sample(4000, b);
    REQUIRE(ba.rows() == 4000);
    REQUIRE(bb.rows() == 4000);
    // compare first-coordinate means and spreads loosely
    double ma = 0.0, mb = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < 4000; ++i) {
      ma += ba.row(i)[0];
      mb += bb.row(i)[0];
    }
    ma /= 4000.0;
    mb /= 4000.0;
    for (std::size_t i = 0; i < 4000; ++i) {
      va += (ba.row(i)[0] - ma) * (ba.row(i)[0] - ma);
      vb += (bb.row(i)[0] - mb) * (bb.row(i)[0] - mb);
    }
    va = std::sqrt(va / 3999.0);
    vb = std::sqrt(vb / 3999.0);
    CHECK(std::fabs(ma - mb) < 0.25);
    CHECK(std::fabs(va / vb - 1.0) < 0.1);
  }

  SUBCASE("log densities match the underlying model") {
    const ModelView view = make_smm_view(ring.smm_form);
    const std::vector<double> x = {0.7, -1.3};
    CHECK(view.log_density(x) == ring.smm_form->log_density(x));
    CHECK(view.dim == 2);
  }

  SUBCASE("mixture views sample ancestrally") {
    auto mix = std::make_shared<const AdditiveMixture>(
        AdditiveMixture({0.5, 0.5}, {GaussianComponent({-3.0}, {0.5}),
                                     GaussianComponent({3.0}, {0.5})}));
    const ModelView view = make_gmm_view(mix);
    RngStream rng(905, 2);
    const SampleBatch batch = view.sample(2000, rng);
    REQUIRE(batch.rows() == 2000);
    std::size_t low = 0;
    for (std::size_t i = 0; i < batch.rows(); ++i) low += batch.row(i)[0] < 0.0 ? 1 : 0;
    CHECK(std::fabs(static_cast<double>(low) / 2000.0 - 0.5) < 4.0 * std::sqrt(0.25 / 2000.0));
    const std::vector<double> x = {1.0};
    CHECK(view.log_density(x) == mix->log_density(x));
  }
}
