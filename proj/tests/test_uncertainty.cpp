#include <doctest.h>

#include <cmath>
#include <vector>

#include "rflock/uncertainty.hpp"

using namespace rflock;

TEST_CASE("environmental loss") {
  WeatherVector ref;
  ref.temp_c = 30.0;
  CHECK(env_loss(ref, ref) == 0.0);
  WeatherVector hot;
  hot.temp_c = 45.0;
  CHECK(env_loss(hot, hot) == doctest::Approx(0.30));
  WeatherVector extreme;
  extreme.temp_c = 200.0;
  extreme.precip_mm = 500.0;
  CHECK(env_loss(extreme, extreme) == 1.0);
}

TEST_CASE("human loss") {
  CHECK(human_loss(0.0, 0.0) == 0.0);
  HumanLossCoeffs c;
  CHECK(human_loss(c.demand_ref_m3s, c.demand_ref_m3s, c) == doctest::Approx(0.1));
  CHECK(human_loss(500.0, 0.0, c, 0.15) == doctest::Approx(0.15));
  CHECK(human_loss(1.0e6, 1.0e6, c) == 1.0);
}

TEST_CASE("channel efficiency clamps") {
  CHECK(channel_efficiency(0.95, 0.0, 0.0, 0.1) == doctest::Approx(0.95));
  CHECK(channel_efficiency(0.95, 0.6, 0.4, 0.1) == doctest::Approx(0.1));
  CHECK(channel_efficiency(1.0, 0.0, 0.0, 0.1) == 1.0);
  CHECK(channel_efficiency(1.0, -0.5, 0.0, 0.1) == 1.0);
}

TEST_CASE("transfer sampling") {
  CounterRng rng = make_stream(7, StreamPurpose::kTransferNoise, 0);
  SUBCASE("noiseless") {
    CHECK(sample_transfer(100.0, 0.9, 0.0, rng).flow == doctest::Approx(90.0));
    CHECK(sample_transfer(0.0, 0.9, 0.0, rng).flow == 0.0);
  }
  SUBCASE("mean over 1e5 draws") {
    const int n = 100000;
    double sum = 0.0;
    int clamped = 0;
    for (int k = 0; k < n; ++k) {
      const TransferDraw d = sample_transfer(100.0, 0.9, 0.05, rng);
      sum += d.flow;
      clamped += d.clamped;
    }
    CHECK(clamped == 0);
    const double mean = sum / n;
    CHECK(std::abs(mean - 90.0) < 0.5);
    // Three standard errors: std = 0.05 · 100.
    CHECK(std::abs(mean - 90.0) < 3.0 * 5.0 / std::sqrt(double(n)));
  }
  SUBCASE("negative draws are clamped and counted") {
    int clamped = 0;
    for (int k = 0; k < 1000; ++k) {
      const TransferDraw d = sample_transfer(0.1, 0.5, 2.0, rng, 1.0);
      CHECK(d.flow >= 0.0);
      clamped += d.clamped;
    }
    CHECK(clamped > 0);
  }
}

TEST_CASE("cascade variance formula") {
  const std::vector<double> one{1.0};
  CHECK(predicted_cascade_variance<double>(one, 0.05, 0.02) == doctest::Approx(0.05 * 0.05 + 0.02 * 0.02));
  const std::vector<double> ones(9, 1.0);
  CHECK(predicted_cascade_variance<double>(ones, 0.07, 0.0) == doctest::Approx(9 * 0.0049));
  CHECK(predicted_cascade_variance<double>(ones, 0.0, 0.0) == 0.0);
  CHECK(std::sqrt(predicted_cascade_variance<double>(ones, 0.07, 0.0)) == doctest::Approx(0.21));

  // Hand evaluation: alphas (a2, a3) = (0.5, 0.8): (0.25·0.64 + 0.64) σ².
  const std::vector<double> two{0.5, 0.8};
  CHECK(predicted_cascade_variance<double>(two, 1.0, 0.0) == doctest::Approx(0.25 * 0.64 + 0.64));

  const std::vector<double> empty;
  CHECK_THROWS_AS(predicted_cascade_variance<double>(empty, 0.05, 0.0), Error);
}

TEST_CASE("cascade variance is monotone") {
  CounterRng rng = make_stream(3, StreamPurpose::kMonteCarlo, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t links = 1 + static_cast<std::size_t>(uniform01(rng) * 15);
    std::vector<double> a(links);
    for (auto& x : a) x = 0.05 + 0.95 * uniform01(rng);
    const double sb = uniform01(rng) * 0.2;
    const double se = uniform01(rng) * 0.2;
    const double base = predicted_cascade_variance<double>(a, sb, se);
    const std::size_t k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(links));
    auto lower = a;
    lower[k] *= 0.9;
    CHECK(predicted_cascade_variance<double>(lower, sb, se) <= base);
    CHECK(predicted_cascade_variance<double>(a, sb + 0.01, se) >= base);
    CHECK(predicted_cascade_variance<double>(a, sb, se + 0.01) >= base);
  }
}

TEST_CASE("compound efficiency") {
  const std::vector<double> a(14, 0.93);
  CHECK(compound_efficiency<double>(a) == doctest::Approx(std::pow(0.93, 14)));
  const std::vector<double> none;
  CHECK(compound_efficiency<double>(none) == 1.0);
}

TEST_CASE("Monte-Carlo oracle agrees with the formula") {
  CounterRng rng = make_stream(11, StreamPurpose::kMonteCarlo, 1);
  const std::vector<double> a{0.9, 0.8, 0.95, 0.7};
  const double analytic = predicted_cascade_variance<double>(a, 0.05, 0.01);
  const MonteCarloVariance mc = monte_carlo_cascade_variance(a, 0.05, 0.01, 100000, rng);
  CHECK(mc.samples == 100000);
  CHECK(std::abs(mc.variance - analytic) / analytic < 0.05);
  CHECK(std::abs(mc.mean) < 0.01);
  CHECK_THROWS_AS(monte_carlo_cascade_variance(a, 0.05, 0.0, 100, rng), Error);
}

TEST_CASE("chain topology form") {
  TopologySpec spec;
  for (int i = 0; i < 4; ++i) {
    ReservoirNode n;
    n.id = "n" + std::to_string(i);
    spec.nodes.push_back(n);
  }
  for (int i = 0; i < 3; ++i)
    spec.edges.push_back({"n" + std::to_string(i), "n" + std::to_string(i + 1), 0.9 - 0.1 * i, 1.0, 0});
  const NetworkTopology chain = build_topology(spec);
  const auto a = chain_alphas(chain);
  REQUIRE(a.size() == 3);
  CHECK(a[0] == doctest::Approx(0.9));
  CHECK(a[2] == doctest::Approx(0.7));
  const NetworkTopology grid = build_topology(grid_spec({}));
  CHECK_THROWS_AS(chain_alphas(grid), Error);
}
