#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "../vendor/doctest.h"
#include "smm/errors.hpp"
#include "smm/normal.hpp"
#include "smm/rng.hpp"
#include "test_util.hpp"

using namespace smm;

TEST_CASE("erf and erfc match a long-double oracle to 5e-15 relative") {
  for (double x = 0.0037; x < 9.0; x += 0.0137) {
    const long double re = testutil::erf_ld(x);
    const long double rc = testutil::erfc_ld(x);
    CHECK(std::fabs((erf_rational(x) - static_cast<double>(re)) / static_cast<double>(re)) <
          5e-15);
    CHECK(std::fabs((erfc_rational(x) - static_cast<double>(rc)) / static_cast<double>(rc)) <
          5e-15);
    CHECK(erf_rational(-x) == -erf_rational(x));
  }
  CHECK(erf_rational(0.0) == 0.0);
  CHECK(erfc_rational(0.0) == 1.0);
}

TEST_CASE("normal_cdf agrees with the oracle and is exactly symmetric") {
  for (double z = -12.0; z <= 12.0; z += 0.0613) {
    const long double ref = testutil::normal_cdf_ld(z);
    // rounding of z/sqrt(2) is amplified ~z^2-fold in the tail, so the bound
    // is looser than the raw erfc one
    CHECK(std::fabs((normal_cdf(z) - static_cast<double>(ref)) / static_cast<double>(ref)) <
          4e-14);
    CHECK(normal_cdf(z) + normal_cdf(-z) == 1.0);  // exact, by construction
  }
  CHECK(normal_cdf(0.0) == 0.5);

  SUBCASE("far tail keeps relative accuracy") {
    const long double ref = testutil::normal_cdf_ld(-37.0);  // ~5.7e-300
    CHECK(std::fabs((normal_cdf(-37.0) - static_cast<double>(ref)) / static_cast<double>(ref)) <
          1e-13);
  }
}

TEST_CASE("normal_quantile inverts the CDF") {
  CHECK(normal_quantile(0.5) == 0.0);

  SUBCASE("p -> z -> p round trip, down to denormal-adjacent tails") {
    for (double lp = -600.0; lp < -0.7; lp += 0.31) {
      const double p = std::exp(lp);
      const double back = normal_cdf(normal_quantile(p));
      CHECK(std::fabs(back - p) / p < 5e-12);
    }
  }

  SUBCASE("z -> p -> z round trip in the two-sided bulk") {
    for (double z = -8.0; z < 0.5; z += 0.173) {
      const double back = normal_quantile(normal_cdf(z));
      CHECK(std::fabs(back - z) < 1e-12 * std::max(1.0, std::fabs(z)));
    }
  }

  SUBCASE("monotone on a grid") {
    double prev = -std::numeric_limits<double>::infinity();
    for (double p = 1e-12; p < 1.0 - 1e-12; p += 0.001) {
      const double z = normal_quantile(p);
      CHECK(z > prev);
      prev = z;
    }
  }

  SUBCASE("domain is the open interval") {
    CHECK_THROWS_AS(normal_quantile(0.0), InvalidInput);
    CHECK_THROWS_AS(normal_quantile(1.0), InvalidInput);
    CHECK_THROWS_AS(normal_quantile(-0.2), InvalidInput);
  }
}

TEST_CASE("normal_log_pdf is the quadratic form") {
  for (double z : {-7.3, -1.0, 0.0, 0.4, 2.9}) {
    CHECK(normal_log_pdf(z) == doctest::Approx(-0.5 * z * z - 0.5 * kLogTwoPi).epsilon(1e-15));
  }
}

TEST_CASE("RngStream draws are reproducible and identity-addressed") {
  SUBCASE("same (seed, stream) gives the same sequence") {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  SUBCASE("different stream ids give different sequences") {
    RngStream a(42, 0), b(42, 1);
    bool differs = false;
    for (int i = 0; i < 10; ++i) differs |= a.next_u64() != b.next_u64();
    CHECK(differs);
  }

  SUBCASE("substream identity ignores how much the parent has consumed") {
    RngStream parent(9001, 3);
    RngStream before = parent.substream(5);
    for (int i = 0; i < 17; ++i) parent.next_gaussian();
    RngStream after = parent.substream(5);
    for (int i = 0; i < 50; ++i) CHECK(before.next_u64() == after.next_u64());
  }

  SUBCASE("uniforms stay strictly inside (0, 1) and pass KS at the 1% level") {
    RngStream rng(123, 0);
    std::vector<double> u(100000);
    for (double& v : u) {
      v = rng.next_uniform();
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    const double ks = testutil::ks_statistic(std::move(u), [](double t) { return t; });
    CHECK(ks < 1.63 / std::sqrt(100000.0));
  }

  SUBCASE("gaussians pass KS against the normal CDF") {
    RngStream rng(123, 1);
    std::vector<double> g(100000);
    for (double& v : g) v = rng.next_gaussian();
    const double ks = testutil::ks_statistic(
        std::move(g), [](double t) { return static_cast<double>(testutil::normal_cdf_ld(t)); });
    CHECK(ks < 1.63 / std::sqrt(100000.0));
  }
}
