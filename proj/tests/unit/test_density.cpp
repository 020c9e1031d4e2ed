#include <cmath>
#include <random>

#include "doctest.h"
#include "idspace/density.hpp"
#include "idspace/errors.hpp"
#include "oracles.hpp"

using namespace idspace;

namespace {

std::vector<double> gamma_samples(std::size_t n, std::uint64_t seed, double shape = 3.0) {
  std::mt19937_64 gen(seed);
  std::gamma_distribution<double> g(shape, 1.0);
  std::vector<double> out(n);
  for (auto& x : out) x = g(gen);
  return out;
}

Density1d flat(double value) {
  Density1d d;
  d.grid = {0.0, 1.0, 2.0};
  d.values = {value, value, value};
  d.bandwidth = 1.0;
  return d;
}

}  // namespace

TEST_SUITE("kernel density") {
  TEST_CASE("each estimate integrates to one on its grid") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto s = gamma_samples(10 + 40 * seed, seed);
      const Density1d d = estimate_density(s);
      CHECK(std::abs(d.integral() - 1.0) <= 1e-3);
      CHECK(d.grid.size() == kDensityGridPoints);
      for (double v : d.values) CHECK(v >= 0.0);
    }
  }

  TEST_CASE("all-zero samples concentrate at zero with the minimum bandwidth") {
    const std::vector<double> zeros(30, 0.0);
    CHECK(silverman_bandwidth(zeros) == kMinBandwidth);
    const Density1d d = estimate_density(zeros);
    CHECK(d.bandwidth == kMinBandwidth);
    CHECK(std::abs(d.integral() - 1.0) <= 1e-3);
    CHECK(d(0.0) > 100.0);
    CHECK(d(0.01) < 1e-6);
    CHECK(d(1.0) == 0.0);  // outside the grid
  }

  TEST_CASE("grid values match a per-sample kernel sum to 1e-10") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = gamma_samples(200, 100 + seed);
      const Density1d d = estimate_density(s);
      for (std::size_t i = 0; i < d.grid.size(); ++i) {
        CHECK(std::abs(d.values[i] - oracle::kernel_sum(s, d.bandwidth, d.grid[i])) <= 1e-10);
      }
      CHECK(std::abs(kde_at(s, d.bandwidth, 2.5) - oracle::kernel_sum(s, d.bandwidth, 2.5)) <= 1e-12);
    }
  }

  TEST_CASE("Silverman's rule on a hand-checked sample") {
    // sd = sqrt(2.5), IQR (linear interpolation) = 2, n = 5.
    const std::vector<double> s{1, 2, 3, 4, 5};
    const double want = 0.9 * std::min(std::sqrt(2.5), 2.0 / 1.34) * std::pow(5.0, -0.2);
    CHECK(silverman_bandwidth(s) == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("grid spans five bandwidths beyond the data") {
    const std::vector<double> s{2.0, 3.0};
    const Density1d d = estimate_density(s, 0.5, 101);
    CHECK(d.grid.front() == doctest::Approx(-0.5));
    CHECK(d.grid.back() == doctest::Approx(5.5));
  }

  TEST_CASE("empty sample is a domain error") {
    CHECK_THROWS_AS(estimate_density(std::vector<double>{}), DomainError);
  }
}

TEST_SUITE("likelihood ratio") {
  TEST_CASE("equal densities give one half") {
    NormDensityPair p{flat(0.3), flat(0.3)};
    CHECK(p.likelihood(1.0) == 0.5);
  }

  TEST_CASE("vanishing negative density sends f to one") {
    NormDensityPair p{flat(0.3), flat(1e-20)};
    CHECK(p.likelihood(1.0) == doctest::Approx(1.0).epsilon(1e-15));
    NormDensityPair q{flat(0.3), flat(0.0)};
    CHECK(q.likelihood(1.0) == 1.0);
  }

  TEST_CASE("both densities vanishing falls back to one half") {
    NormDensityPair p{flat(0.3), flat(0.3)};
    CHECK(p.likelihood(50.0) == 0.5);
  }

  TEST_CASE("f stays in [0,1] and rises with the norm for separated populations") {
    const auto lo = gamma_samples(300, 1, 2.0);
    auto hi = gamma_samples(300, 2, 2.0);
    for (auto& x : hi) x += 8.0;
    const NormDensityPair p = estimate_norm_densities(hi, lo);
    for (double x = -1.0; x < 20.0; x += 0.05) {
      const double f = p.likelihood(x);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
    }
    CHECK(p.likelihood(1.5) < 0.1);
    CHECK(p.likelihood(10.0) > 0.9);
  }
}
