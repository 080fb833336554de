#include <doctest.h>

#include <cmath>
#include <vector>

#include "rflock/bench.hpp"
#include "rflock/metrics.hpp"
#include "rflock/rng.hpp"

using namespace rflock;

TEST_CASE("quantile bins") {
  const std::vector<double> x{5.0, 1.0, 3.0, 2.0};
  const auto b = quantile_bins(x, 2);
  CHECK(b == std::vector<int>{1, 0, 1, 0});
  const std::vector<double> tied{1.0, 1.0, 1.0, 2.0};
  const auto t = quantile_bins(tied, 2);
  CHECK(t[0] == t[1]);
  CHECK(t[1] == t[2]);
  // Monotone transforms do not change the labels.
  std::vector<double> y;
  for (double v : x) y.push_back(std::exp(3.0 * v) + 1.0);
  CHECK(quantile_bins(y, 2) == b);
}

TEST_CASE("mutual information") {
  const std::vector<int> a{0, 1, 0, 1, 0, 1, 0, 1};
  CHECK(mutual_information(a, a) == doctest::Approx(std::log(2.0)));
  const std::vector<int> c(8, 0);
  CHECK(mutual_information(c, c) == 0.0);
  const std::vector<int> b{0, 0, 1, 1, 0, 0, 1, 1};
  CHECK(mutual_information(a, b) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("coordination quality") {
  SUBCASE("coupled fair coins") {
    MatrixXd m(200, 2);
    for (int t = 0; t < 200; ++t) m(t, 0) = m(t, 1) = t % 2;
    const auto q = coordination_quality(m, 2);
    CHECK(q.q_c == doctest::Approx(1.0));
  }
  SUBCASE("constant actions") {
    const MatrixXd m = MatrixXd::Constant(50, 3, 4.0);
    CHECK(coordination_quality(m, 4).q_c == 0.0);
  }
  SUBCASE("independent uniform actions") {
    CounterRng rng = make_stream(2, StreamPurpose::kMonteCarlo, 0);
    MatrixXd m(20000, 3);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform01(rng);
    const auto q = coordination_quality(m, 4);
    CHECK(q.q_c >= 0.0);
    CHECK(q.q_c <= 2.0 * q.bias_bound + 1e-3);
  }
  SUBCASE("relabeling invariance") {
    CounterRng rng = make_stream(2, StreamPurpose::kMonteCarlo, 1);
    MatrixXd m(500, 3);
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
      const double base = uniform01(rng);
      for (Eigen::Index i = 0; i < 3; ++i) m(t, i) = base + 0.3 * uniform01(rng);
    }
    // Positive affine maps keep every rank, including the rank of the others' mean.
    const MatrixXd affine = m.array() * 5.0 - 2.0;
    CHECK(coordination_quality(m, 5).q_c == doctest::Approx(coordination_quality(affine, 5).q_c));
    CHECK(coordination_quality(m, 5).q_c > 0.1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(coordination_quality(MatrixXd::Zero(10, 1), 2), Error);
    CHECK_THROWS_AS(coordination_quality(MatrixXd::Zero(1, 3), 2), Error);
  }
}

TEST_CASE("learning-curve CV") {
  const std::vector<double> flat(5, 3.0);
  CHECK(*learning_curve_cv(flat, 5) == 0.0);
  const std::vector<double> two{1.0, 3.0};
  CHECK(*learning_curve_cv(two, 2) == doctest::Approx(0.5));
  const std::vector<double> zero_mean{-1.0, 1.0};
  CHECK_FALSE(learning_curve_cv(zero_mean, 2).has_value());
  const std::vector<double> empty;
  CHECK_THROWS_AS(learning_curve_cv(empty, 1), Error);
  CHECK_THROWS_AS(learning_curve_cv(two, 3), Error);
  // Trailing window only.
  const std::vector<double> trail{100.0, 1.0, 3.0};
  CHECK(*learning_curve_cv(trail, 2) == doctest::Approx(0.5));
}

TEST_CASE("safety rate") {
  EpisodeLog log;
  log.agents = 2;
  for (int t = 0; t < 5; ++t) {
    log.release.push_back({1.0, 1.0});
    log.reward.push_back({0.0, 0.0});
    log.level.push_back({1.0, 1.0});
    log.flood.push_back({0, 0});
  }
  CHECK(safety_rate(log) == 1.0);
  log.flood[3][1] = 1;
  CHECK(safety_rate(log) == doctest::Approx(0.9));
  CHECK(log.flood_steps() == 1);
  for (auto& row : log.flood) row = {1, 1};
  CHECK(safety_rate(log) == 0.0);
}

TEST_CASE("log-log slope and median") {
  const std::vector<double> n{100, 200, 400, 800};
  std::vector<double> t;
  for (double x : n) t.push_back(0.02 * x);
  CHECK(log_log_slope(n, t) == doctest::Approx(1.0));
  t.clear();
  for (double x : n) t.push_back(3.0 * x * x);
  CHECK(log_log_slope(n, t) == doctest::Approx(2.0));
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("grid shape") {
  CHECK(grid_shape(100) == std::pair<std::size_t, std::size_t>{10, 10});
  CHECK(grid_shape(200) == std::pair<std::size_t, std::size_t>{10, 20});
  CHECK(grid_shape(800) == std::pair<std::size_t, std::size_t>{25, 32});
  CHECK(grid_shape(7) == std::pair<std::size_t, std::size_t>{1, 7});
}
