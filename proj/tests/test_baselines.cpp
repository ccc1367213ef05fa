#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "psm/baselines.hpp"
#include "psm/common.hpp"
#include "psm/metrics.hpp"

using namespace psm;

namespace {

// Map with exact correlation rho against `reference_map()`: rho * t +
// sqrt(1-rho^2) * u + 2 where t, u are orthonormal zero-mean pixel vectors.
SaliencyMap correlated_map(double rho) {
  const double t[4] = {-0.5, -0.5, 0.5, 0.5};
  const double u[4] = {-0.5, 0.5, -0.5, 0.5};
  std::vector<double> v(4);
  for (int i = 0; i < 4; ++i) v[i] = rho * t[i] + std::sqrt(1.0 - rho * rho) * u[i] + 2.0;
  return SaliencyMap(2, 2, v);
}

SaliencyMap reference_map() {
  return SaliencyMap(2, 2, {1.5, 1.5, 2.5, 2.5});  // t + 2
}

}  // namespace

TEST_CASE("person weight vectors must be a distribution") {
  CHECK_THROWS_AS(PersonWeights({0.5, -0.1, 0.6}), ValidationError);
  CHECK_THROWS_AS(PersonWeights({0.5, 0.6}), ValidationError);
  CHECK_THROWS_AS(PersonWeights(std::vector<double>{}), ValidationError);
  CHECK_NOTHROW(PersonWeights({0.25, 0.75}));
}

TEST_CASE("a single training person gets the whole weight") {
  std::vector<SaliencyMap> gts = {reference_map()};
  std::vector<std::vector<SaliencyMap>> persons = {{correlated_map(0.6)}};
  PersonWeights w = similarity_weights(gts, persons);
  REQUIRE(w.weights.size() == 1);
  CHECK(w.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("an identical person dominates as the temperature vanishes") {
  std::vector<SaliencyMap> gts = {reference_map(), reference_map()};
  std::vector<std::vector<SaliencyMap>> persons = {
      {reference_map(), reference_map()},          // CC = 1 on both images
      {correlated_map(0.2), correlated_map(0.2)},  // CC = 0.2
  };
  PersonWeights w = similarity_weights(gts, persons, 1e-3);
  CHECK(w.weights[0] > 0.9999);
}

TEST_CASE("similarities 0.8 and 0.4 at temperature 0.1 weight as softmax(8, 4)") {
  std::vector<SaliencyMap> gts = {reference_map()};
  std::vector<std::vector<SaliencyMap>> persons = {{correlated_map(0.8)},
                                                   {correlated_map(0.4)}};
  PersonWeights w = similarity_weights(gts, persons, 0.1);
  const double expected = 1.0 / (1.0 + std::exp(-4.0));  // 0.98201...
  CHECK(w.weights[0] == doctest::Approx(expected).epsilon(1e-9));
  CHECK(w.weights[0] + w.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shifting every similarity by a constant keeps the weights") {
  std::vector<SaliencyMap> gts = {reference_map()};
  std::vector<std::vector<SaliencyMap>> high = {{correlated_map(0.8)}, {correlated_map(0.4)}};
  std::vector<std::vector<SaliencyMap>> low = {{correlated_map(0.3)}, {correlated_map(-0.1)}};
  PersonWeights wh = similarity_weights(gts, high, 0.1);
  PersonWeights wl = similarity_weights(gts, low, 0.1);
  CHECK(wh.weights[0] == doctest::Approx(wl.weights[0]).epsilon(1e-9));
}

TEST_CASE("similarity weighting fails only when nothing is comparable") {
  SaliencyMap flat(2, 2, std::vector<double>(4, 1.0));
  std::vector<SaliencyMap> gts = {flat};
  std::vector<std::vector<SaliencyMap>> persons = {{correlated_map(0.5)}};
  CHECK_THROWS_AS(similarity_weights(gts, persons), ValidationError);
}

TEST_CASE("weighted averages interpolate the person maps") {
  SaliencyMap a(1, 2, {1, 0});
  SaliencyMap b(1, 2, {0, 1});

  std::vector<SaliencyMap> same = {a, a, a};
  SaliencyMap mean = weighted_average_psm(uniform_weights(3), same);
  CHECK(mean(0, 0) == doctest::Approx(1.0));
  CHECK(mean(0, 1) == doctest::Approx(0.0));

  std::vector<SaliencyMap> both = {a, b};
  SaliencyMap only_b = weighted_average_psm(PersonWeights({0.0, 1.0}), both);
  CHECK(only_b(0, 0) == 0.0);
  CHECK(only_b(0, 1) == 1.0);

  SaliencyMap mixed = weighted_average_psm(PersonWeights({0.25, 0.75}), both);
  CHECK(mixed(0, 0) == doctest::Approx(0.25));
  CHECK(mixed(0, 1) == doctest::Approx(0.75));

  CHECK_THROWS_AS(weighted_average_psm(PersonWeights({1.0}), both), ValidationError);
}

TEST_CASE("weighted averages stay inside the per-pixel min/max envelope") {
  Rng rng(81);
  for (int round = 0; round < 10; ++round) {
    std::vector<SaliencyMap> maps;
    for (int p = 0; p < 4; ++p) {
      std::vector<double> v(12);
      for (double& x : v) x = rng.uniform01();
      maps.emplace_back(3, 4, v);
    }
    std::vector<double> raw(4);
    double total = 0.0;
    for (double& x : raw) {
      x = rng.uniform01();
      total += x;
    }
    for (double& x : raw) x /= total;
    raw[3] = 1.0 - raw[0] - raw[1] - raw[2];
    SaliencyMap avg = weighted_average_psm(PersonWeights(raw), maps);
    for (std::size_t i = 0; i < 12; ++i) {
      double lo = 1e9, hi = -1e9;
      for (const SaliencyMap& m : maps) {
        lo = std::min(lo, m.values[i]);
        hi = std::max(hi, m.values[i]);
      }
      CHECK(avg.values[i] >= lo - 1e-12);
      CHECK(avg.values[i] <= hi + 1e-12);
    }
  }
}
