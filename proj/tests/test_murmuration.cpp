#include <doctest.h>

#include <cmath>
#include <vector>

#include "rflock/murmuration.hpp"
#include "rflock/rng.hpp"

using namespace rflock;

TEST_CASE("neighbor weights") {
  WeatherVector w;
  std::vector<NeighborSignal> nb(3, NeighborSignal{4.0, w});
  CoordinationParams p;
  auto x = coordination_weights(w, nb, p);
  for (int j = 0; j < 3; ++j) CHECK(x[j] == doctest::Approx(1.0 / 3.0));

  WeatherVector hot;
  hot.temp_c = 40.0;
  nb = {{0.0, w}, {100.0, hot}};
  p.beta_d = 0.0;
  p.beta_e = 0.0;
  x = coordination_weights(w, nb, p);
  CHECK(x[0] == doctest::Approx(0.5));

  p.beta_d = 0.1;
  nb = {{0.0, w}, {10.0, w}};
  x = coordination_weights(w, nb, p);
  const double e1 = std::exp(-1.0);
  CHECK(x[0] == doctest::Approx(1.0 / (1.0 + e1)));
  CHECK(x[1] == doctest::Approx(e1 / (1.0 + e1)));
  CHECK(x[0] == doctest::Approx(0.731).epsilon(1e-3));

  std::vector<NeighborSignal> none;
  CHECK_THROWS_AS(coordination_weights(w, none, p), Error);
}

TEST_CASE("alignment loss") {
  const std::vector<double> same{3.0, 3.0}, wts{0.5, 0.5};
  CHECK(alignment_loss<double>(3.0, same, wts).value == 0.0);
  const std::vector<double> six{6.0}, one{1.0};
  CHECK(alignment_loss<double>(10.0, six, one).value == doctest::Approx(4.0));
}

TEST_CASE("adaptive radius") {
  const std::vector<double> equal{4.0, 4.0, 4.0};
  CHECK(adaptive_radius(equal, 0.3) == doctest::Approx(0.3));
  const std::vector<double> spread{1.0, 3.0};
  CHECK(adaptive_radius(spread, 0.3) == doctest::Approx(0.45));
  const std::vector<double> cancel{-1.0, 1.0};
  CHECK(adaptive_radius(cancel, 0.3, 3.0) == doctest::Approx(1.2));
}

TEST_CASE("separation loss") {
  const std::vector<double> same{2.0};
  CHECK(separation_loss<double>(2.0, same, 0.5).value == doctest::Approx(1.0));
  const std::vector<double> at_rho{2.5};
  CHECK(separation_loss<double>(2.0, at_rho, 0.5).value == doctest::Approx(0.3679).epsilon(1e-4));
  const std::vector<double> far{200.0};
  CHECK(separation_loss<double>(2.0, far, 0.5).value < 1e-12);
  CHECK_THROWS_AS(separation_loss<double>(2.0, far, 0.0), Error);
}

TEST_CASE("cohesion loss") {
  const std::vector<double> others{2.0};
  CHECK(cohesion_loss<double>(3.0, others, 10.0, 2, 1.0).value == 0.0);
  const std::vector<double> four{4.0};
  CHECK(cohesion_loss<double>(3.0, four, 10.0, 2, 1.0).value == doctest::Approx(4.0));
  CHECK(cohesion_loss<double>(3.0, four, 10.0, 2, 0.0).value == 0.0);
  CHECK(cohesion_loss<double>(3.0, four, 10.0, 2, 1.0, true).value == doctest::Approx(9.0));
}

TEST_CASE("total loss") {
  CHECK(total_coordination_loss(1.0, 1.0, 1.0, CoordinationWeights{0.2, 0.5, 0.3}) == doctest::Approx(1.0));
  CHECK(total_coordination_loss(2.0, 0.0, 0.0, CoordinationWeights{}) == doctest::Approx(1.2));
  CHECK(total_coordination_loss(2.5, 7.0, 9.0, CoordinationWeights{1.0, 0.0, 0.0}) == doctest::Approx(2.5));
  CHECK_THROWS_AS(total_coordination_loss(1.0, 1.0, 1.0, CoordinationWeights{0.5, 0.3, 0.3}), Error);
}

TEST_CASE("loss gradients match central differences") {
  CounterRng rng = make_stream(5, StreamPurpose::kMonteCarlo, 99);
  auto u = [&] { return uniform01(rng); };
  for (int trial = 0; trial < 50; ++trial) {
    CoordinationContext ctx;
    const int nb = 1 + static_cast<int>(u() * 4);
    double wsum = 0.0;
    for (int j = 0; j < nb; ++j) {
      ctx.neighbor_totals.push_back(3.0 * u());
      ctx.weights.push_back(0.1 + u());
      wsum += ctx.weights.back();
    }
    for (auto& w : ctx.weights) w /= wsum;
    ctx.rho = 0.2 + u();
    ctx.region_others = {u(), u()};
    ctx.region_size = 3;
    ctx.f_eco = 4.0 * u();
    const double s = 3.0 * u();
    const double h = 1e-6;
    const auto l = evaluate_coordination(ctx, s);
    const auto lp = evaluate_coordination(ctx, s + h);
    const auto lm = evaluate_coordination(ctx, s - h);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    CHECK(rel(l.grad_align, (lp.align - lm.align) / (2 * h)) < 1e-6);
    CHECK(rel(l.grad_sep, (lp.sep - lm.sep) / (2 * h)) < 1e-6);
    CHECK(rel(l.grad_coh, (lp.coh - lm.coh) / (2 * h)) < 1e-6);
    CHECK(rel(total_gradient(l, ctx.kappa), (lp.total - lm.total) / (2 * h)) < 1e-6);
  }
}

TEST_CASE("simplex check") {
  CHECK(CoordinationWeights{}.on_simplex());
  CHECK_FALSE((CoordinationWeights{0.5, 0.3, 0.3}).on_simplex());
  CHECK_FALSE((CoordinationWeights{1.2, -0.1, -0.1}).on_simplex());
}
