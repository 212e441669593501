#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <vector>

#include "../vendor/doctest.h"
#include "smm/errors.hpp"
#include "smm/mixture.hpp"
#include "smm/rng.hpp"
#include "test_util.hpp"

using namespace smm;

namespace {

double density_1d(const ComplexSmm& model, double x) {
  return std::exp(model.log_density(std::span<const double>(&x, 1)));
}

}  // namespace

TEST_CASE("AdditiveMixture validates coefficients") {
  GaussianComponent g({0.0}, {1.0});
  CHECK_THROWS_AS(AdditiveMixture({0.5}, {g, g}), InvalidModel);
  CHECK_THROWS_AS(AdditiveMixture({-0.1, 1.1}, {g, g}), InvalidModel);
  CHECK_THROWS_AS(AdditiveMixture({0.3, 0.3}, {g, g}), InvalidModel);  // sums to 0.6
  CHECK_THROWS_AS(AdditiveMixture({}, {}), InvalidModel);
  CHECK_NOTHROW(AdditiveMixture({0.25, 0.75}, {g, GaussianComponent({2.0}, {0.5})}));
}

TEST_CASE("AdditiveMixture log_density is a stable logsumexp") {
  AdditiveMixture mix({0.3, 0.7}, {GaussianComponent({-1.0}, {0.5}),
                                   GaussianComponent({2.0}, {1.5})});
  SUBCASE("matches the direct sum where it is representable") {
    for (double x : {-2.0, 0.0, 1.0, 3.5}) {
      const double direct = 0.3 * std::exp(gaussian_log_pdf(x, -1.0, 0.5)) +
                            0.7 * std::exp(gaussian_log_pdf(x, 2.0, 1.5));
      CHECK(mix.log_density(std::span<const double>(&x, 1)) ==
            doctest::Approx(std::log(direct)).epsilon(1e-12));
    }
  }
  SUBCASE("stays finite far in the tail where the linear sum underflows") {
    const double x = 60.0;
    const double direct = 0.3 * std::exp(gaussian_log_pdf(x, -1.0, 0.5)) +
                          0.7 * std::exp(gaussian_log_pdf(x, 2.0, 1.5));
    CHECK(direct == 0.0);  // underflow in the linear domain
    const double ld = mix.log_density(std::span<const double>(&x, 1));
    CHECK(std::isfinite(ld));
    // the nearer, wider component dominates
    CHECK(ld == doctest::Approx(std::log(0.7) + gaussian_log_pdf(x, 2.0, 1.5)).epsilon(1e-9));
  }
  SUBCASE("zero-coefficient components are skipped, not logged") {
    AdditiveMixture degenerate({0.0, 1.0}, {GaussianComponent({-1.0}, {0.5}),
                                            GaussianComponent({2.0}, {1.5})});
    const double x = 0.5;
    CHECK(degenerate.log_density(std::span<const double>(&x, 1)) ==
          doctest::Approx(gaussian_log_pdf(x, 2.0, 1.5)).epsilon(1e-14));
  }
}

TEST_CASE("ComplexSmm normalizer and density agree with quadrature") {
  RngStream rng(311, 0);
  for (int rep = 0; rep < 5; ++rep) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(rep));
    const ComplexSmm model = testutil::random_smm(1, 3, rep % 2 == 0, sub);
    // integral of the normalized density over a generous window
    const double integral = testutil::simpson(
        [&](double x) { return density_1d(model, x); }, -30.0, 30.0, 24000);
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("expansion carries the symmetrized pairwise weights") {
  RngStream rng(312, 0);
  const ComplexSmm model = testutil::random_smm(2, 3, true, rng);
  const SignedMixture expanded = expand(model);

  SUBCASE("every pair appears exactly once, with doubled off-diagonal weight") {
    double z_plus = 0.0, z_minus = 0.0;
    std::size_t seen = 0;
    for (std::size_t k = 0; k < model.size(); ++k) {
      for (std::size_t j = k; j < model.size(); ++j) {
        const double re = (model.weights()[k] * std::conj(model.weights()[j])).real();
        const double mass = pairwise_mass(model.components()[k], model.components()[j]);
        const double w = re * mass * (k == j ? 1.0 : 2.0);
        bool found = false;
        for (const auto& c : expanded.positives()) {
          if (c.pair == std::make_pair(k, j)) {
            CHECK(c.weight == doctest::Approx(w).epsilon(1e-12));
            CHECK(w > 0.0);
            found = true;
          }
        }
        for (const auto& c : expanded.negatives()) {
          if (c.pair == std::make_pair(k, j)) {
            CHECK(c.weight == doctest::Approx(-w).epsilon(1e-12));
            CHECK(w < 0.0);
            found = true;
          }
        }
        if (std::fabs(w) >= 1e-300) {
          CHECK(found);
          ++seen;
        }
        if (w > 0.0) z_plus += w;
        if (w < 0.0) z_minus += -w;
      }
    }
    CHECK(seen == expanded.pair_count());
    CHECK(expanded.z_plus() == doctest::Approx(z_plus).epsilon(1e-12));
    CHECK(expanded.z_minus() == doctest::Approx(z_minus).epsilon(1e-12));
    CHECK(expanded.z() == doctest::Approx(z_plus - z_minus).epsilon(1e-12));
    CHECK(model.z() == doctest::Approx(expanded.z()).epsilon(1e-12));
  }

  SUBCASE("a zero weight removes its cross terms") {
    std::vector<GaussianComponent> comps = model.components();
    std::vector<std::complex<double>> w = model.weights();
    w[1] = 0.0;
    const ComplexSmm pruned(std::move(comps), std::move(w));
    const SignedMixture pe = expand(pruned);
    // only pairs among components 0 and 2 survive: (0,0), (0,2), (2,2)
    CHECK(pe.pair_count() <= 3);
    for (const auto& c : pe.positives()) {
      CHECK(c.pair.first != 1);
      CHECK(c.pair.second != 1);
    }
    for (const auto& c : pe.negatives()) {
      CHECK(c.pair.first != 1);
      CHECK(c.pair.second != 1);
    }
  }
}

TEST_CASE("signed decomposition reproduces the squared density") {
  RngStream rng(313, 0);
  for (int rep = 0; rep < 3; ++rep) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(rep));
    const ComplexSmm model = testutil::random_smm(2, 3, true, sub);
    const SignedMixture expanded = expand(model);
    REQUIRE(expanded.z_minus() > 0.0);
    const AdditiveMixture pos = expanded.positive_part();
    const AdditiveMixture neg = expanded.negative_part();

    RngStream points(313, 99);
    for (int i = 0; i < 200; ++i) {
      const std::vector<double> x = {4.0 * points.next_gaussian(), 4.0 * points.next_gaussian()};
      const double direct = std::exp(model.log_density(x));
      const double combo = (expanded.z_plus() * std::exp(pos.log_density(x)) -
                            expanded.z_minus() * std::exp(neg.log_density(x))) /
                           expanded.z();
      if (direct > 1e-280) {
        CHECK(std::fabs(combo - direct) / direct < 1e-10);
      }
      // the two density routes agree as well
      const double via_pairs = expanded.density(x);
      if (direct > 1e-280) {
        CHECK(std::fabs(via_pairs - direct) / direct < 1e-10);
      }
    }
  }
}

TEST_CASE("log_density reports -inf only at true zeros") {
  // real weights 1 and -1 on unit gaussians at -1 and 1: the linear form
  // vanishes exactly at 0
  const ComplexSmm model = ComplexSmm::real_weighted(
      {GaussianComponent({-1.0}, {1.0}), GaussianComponent({1.0}, {1.0})}, {1.0, -1.0});
  const double zero = 0.0;
  CHECK(model.log_density(std::span<const double>(&zero, 1)) ==
        -std::numeric_limits<double>::infinity());
  const double off = 0.3;
  CHECK(std::isfinite(model.log_density(std::span<const double>(&off, 1))));
}

TEST_CASE("marginal evidence integrates trailing dimensions away") {
  RngStream rng(314, 0);
  const ComplexSmm model = testutil::random_smm(2, 2, true, rng);
  const SignedMixture expanded = expand(model);

  SUBCASE("empty prefix has evidence one") {
    CHECK(expanded.marginal_evidence({}) == doctest::Approx(1.0));
  }

  SUBCASE("full prefix equals the density") {
    const std::vector<double> x = {0.4, -1.2};
    CHECK(expanded.marginal_evidence(x) == doctest::Approx(expanded.density(x)).epsilon(1e-12));
  }

  SUBCASE("one-dimensional prefix matches quadrature over the other axis") {
    for (double x0 : {-1.0, 0.0, 0.8}) {
      const double numeric = testutil::simpson(
          [&](double x1) {
            const std::vector<double> x = {x0, x1};
            return expanded.density(x);
          },
          -25.0, 25.0, 20000);
      const double prefix = expanded.marginal_evidence(std::span<const double>(&x0, 1));
      CHECK(prefix == doctest::Approx(numeric).epsilon(1e-8));
    }
  }
}

TEST_CASE("conditional CDF behaves like a distribution function") {
  RngStream rng(315, 0);
  const ComplexSmm model = testutil::random_smm(2, 2, true, rng);
  const SignedMixture expanded = expand(model);
  const std::vector<double> prefix = {0.5};

  double prev = -0.01;
  for (double t = -12.0; t <= 12.0; t += 0.25) {
    const double c = expanded.conditional_cdf(prefix, t);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    CHECK(c >= prev - 1e-12);  // monotone up to clamp noise
    prev = c;
  }
  CHECK(expanded.conditional_cdf(prefix, -40.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(expanded.conditional_cdf(prefix, 40.0) == doctest::Approx(1.0).epsilon(1e-9));

  SUBCASE("a prefix where the negative part dominates cannot be conditioned on") {
    // hand-built signed mixture: globally z > 0, but the marginal evidence at
    // x0 = 5 is genuinely negative, so there is no conditional there
    std::vector<SignedComponent> pos = {{1.0, GaussianComponent({0.0, 0.0}, {1.0, 1.0}), {0, 0}}};
    std::vector<SignedComponent> neg = {{0.4, GaussianComponent({5.0, 0.0}, {0.2, 1.0}), {0, 1}}};
    const SignedMixture lopsided(2, std::move(pos), std::move(neg));
    const std::vector<double> bad = {5.0};
    CHECK_THROWS_AS(lopsided.conditional_cdf(bad, 0.0), DegenerateConditioning);
  }

  SUBCASE("a far-away prefix still conditions cleanly in the log domain") {
    const std::vector<double> nowhere = {60.0};
    const double lo = expanded.conditional_cdf(nowhere, -40.0);
    const double hi = expanded.conditional_cdf(nowhere, 40.0);
    CHECK(lo == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(hi == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("ComplexSmm rejects degenerate weight sets") {
  GaussianComponent g({0.0}, {1.0});
  GaussianComponent h({1.0}, {2.0});
  CHECK_THROWS_AS(ComplexSmm({g, h}, {{0.0, 0.0}, {0.0, 0.0}}), InvalidModel);
  CHECK_THROWS_AS(ComplexSmm({g, h}, {{1.0, 0.0}}), InvalidModel);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ComplexSmm({g, h}, {{nan, 0.0}, {1.0, 0.0}}), InvalidModel);
}
