#include <doctest.h>

#include <cmath>
#include <vector>

#include "rflock/ppo.hpp"
#include "rflock/training.hpp"

using namespace rflock;

namespace {

EncoderConfig toy_encoder() {
  EncoderConfig e;
  e.gnn_widths = {5};
  e.lstm_hidden = 3;
  e.window = 2;
  e.forecast_horizon = 1;
  return e;
}

PolicyConfig toy_policy() {
  PolicyConfig p;
  p.trunk_widths = {6, 5};
  p.value_widths = {4};
  p.mixer_hidden = 4;
  p.mixer_edge_width = 2;
  p.xi = 0.3;
  return p;
}

double r(CounterRng& rng) { return 2.0 * uniform01(rng) - 1.0; }

VectorXd rv(Eigen::Index n, CounterRng& rng) {
  VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = r(rng);
  return v;
}

CoordinationContext random_context(CounterRng& rng) {
  CoordinationContext c;
  c.neighbor_totals = {1.0 + r(rng), 1.5 + r(rng)};
  c.weights = {0.4, 0.6};
  c.rho = 0.4 + 0.2 * uniform01(rng);
  c.region_others = {0.5 * uniform01(rng)};
  c.region_size = 2;
  c.f_eco = 1.5;
  c.kappa = {0.5, 0.2, 0.3};
  return c;
}

/// Transitions drawn from the network itself, with perturbed old log-probs
/// so that ratios differ from 1 (some inside, some outside the clip band).
std::vector<Transition> toy_batch(const AgentNetwork& net, int steps, int neighbors, CounterRng& rng) {
  const auto& e = net.encoder_config();
  const auto& p = net.policy_config();
  std::vector<Transition> out;
  for (int t = 0; t < steps; ++t) {
    Transition tr;
    tr.obs.own = rv(ReservoirState::kDim, rng);
    for (int j = 0; j < neighbors; ++j) tr.obs.neighbors.push_back(rv(e.message_dim(), rng));
    for (int k = 0; k < e.window; ++k) tr.obs.history.push_back(rv(ReservoirState::kDim, rng));
    tr.obs.forecast = rv(e.forecast_dim(), rng);
    tr.obs.coord_grads = rv(p.mixer_in(), rng);
    tr.a_max = 5.0;
    tr.flow_scale = 5.0;
    CounterRng pol = make_stream(9, StreamPurpose::kPolicy, static_cast<std::uint64_t>(t));
    const PolicySample s = net.act(tr.obs, tr.a_max, &pol);
    tr.u = s.u;
    tr.z = ((s.u - s.mean).array() / s.log_std.array().exp()).matrix();
    tr.log_prob = s.log_prob + 0.15 * r(rng);
    tr.advantage = r(rng);
    tr.ctx = random_context(rng);
    tr.penalty_multiplier = 1.0 + t % 3;
    out.push_back(std::move(tr));
  }
  return out;
}

}  // namespace

TEST_CASE("GAE") {
  SUBCASE("hand recursion") {
    const std::vector<double> rw{1.0, 1.0}, v{0.0, 0.0};
    const GaeResult g = compute_gae(rw, v, 0.0, 0.99, 0.95);
    CHECK(g.advantages[0] == doctest::Approx(1.9405));
    CHECK(g.advantages[1] == doctest::Approx(1.0));
  }
  SUBCASE("telescoping with gamma = lambda = 1") {
    const std::vector<double> rw{0.5, -1.0, 2.0, 3.0}, v(4, 0.0);
    const GaeResult g = compute_gae(rw, v, 0.0, 1.0, 1.0);
    CHECK(g.advantages[0] == doctest::Approx(4.5));
    CHECK(g.advantages[2] == doctest::Approx(5.0));
  }
  SUBCASE("single step") {
    const std::vector<double> rw{2.0}, v{0.7};
    const GaeResult g = compute_gae(rw, v, 1.5, 0.9, 0.5);
    CHECK(g.advantages[0] == doctest::Approx(2.0 + 0.9 * 1.5 - 0.7));
    CHECK(g.returns[0] == doctest::Approx(2.0 + 0.9 * 1.5));
  }
}

TEST_CASE("advantage normalization") {
  std::vector<Transition> b(4);
  const double a[] = {1.0, 2.0, 3.0, 6.0};
  for (int k = 0; k < 4; ++k) b[static_cast<std::size_t>(k)].advantage = a[k];
  normalize_advantages(b);
  double m = 0.0, s = 0.0;
  for (const auto& t : b) m += t.advantage;
  for (const auto& t : b) s += t.advantage * t.advantage;
  CHECK(std::abs(m) < 1e-12);
  CHECK(s / 4.0 == doctest::Approx(1.0));
  std::vector<Transition> flat(3);
  for (auto& t : flat) t.advantage = 2.0;
  normalize_advantages(flat);
  for (const auto& t : flat) CHECK(t.advantage == 0.0);
}

TEST_CASE("identity ratio objective") {
  CounterRng rng = make_stream(21, StreamPurpose::kInit, 0);
  AgentNetwork net(toy_encoder(), toy_policy(), 2, 2, rng);
  auto batch = toy_batch(net, 5, 2, rng);
  for (auto& tr : batch) {
    const auto p = net.act(tr.obs, tr.a_max, nullptr);  // mean and std of the current policy
    tr.log_prob = squashed_log_prob(tr.u, p.mean, p.log_std, tr.a_max);
  }
  TrainHyperparams hp;
  const ObjectiveValue v = ppo_objective(net, batch, hp, false);
  double mean_adv = 0.0, penalty = 0.0;
  for (const auto& tr : batch) {
    mean_adv += tr.advantage / 5.0;
    const double total = (squash(tr.u[0], tr.a_max) + squash(tr.u[1], tr.a_max)) / tr.flow_scale;
    penalty += hp.beta_mur * tr.penalty_multiplier * evaluate_coordination(tr.ctx, total).total / 5.0;
  }
  CHECK(v.clip_fraction == 0.0);
  CHECK(v.surrogate == doctest::Approx(mean_adv).epsilon(1e-12));
  CHECK(v.objective == doctest::Approx(mean_adv - penalty).epsilon(1e-12));
}

TEST_CASE("full objective gradient matches central differences") {
  // Two agents (different neighbor and outlet counts), three steps each.
  for (int agent = 0; agent < 2; ++agent) {
    CounterRng rng = make_stream(31, StreamPurpose::kInit, static_cast<std::uint64_t>(agent));
    AgentNetwork net(toy_encoder(), toy_policy(), 1 + agent, 2 - agent, rng);
    const auto batch = toy_batch(net, 3, 2 - agent, rng);
    TrainHyperparams hp;
    hp.beta_mur = 0.5;
    auto params = net.policy_params();
    nn::zero_grads(params);
    ppo_objective(net, batch, hp, true);
    const VectorXd analytic = -nn::flatten_grads(params);
    VectorXd theta = nn::flatten_values(params);
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double keep = theta[k];
      theta[k] = keep + h;
      nn::assign_values(params, theta);
      const double up = ppo_objective(net, batch, hp, false).objective;
      theta[k] = keep - h;
      nn::assign_values(params, theta);
      const double down = ppo_objective(net, batch, hp, false).objective;
      theta[k] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic[k]) / std::max(1e-3, std::abs(fd)));
    }
    nn::assign_values(params, theta);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zero penalty weight leaves the update unchanged") {
  CounterRng rng = make_stream(41, StreamPurpose::kInit, 0);
  AgentNetwork net(toy_encoder(), toy_policy(), 2, 2, rng);
  auto batch = toy_batch(net, 12, 2, rng);
  for (auto& tr : batch) tr.ret = r(rng);
  TrainHyperparams hp;
  hp.beta_mur = 0.0;
  hp.epochs = 3;

  Learner a(net, hp), b(net, hp);
  ExperienceBatch ba{batch}, bb{batch};
  // Coordination inputs that would produce large penalties if they were used.
  for (auto& tr : bb.steps) {
    tr.ctx.neighbor_totals = {40.0, -30.0};
    tr.ctx.f_eco = 100.0;
    tr.penalty_multiplier = 4.0;
  }
  ppo_update(a, ba, hp, 7);
  ppo_update(b, bb, hp, 7);
  const VectorXd pa = nn::flatten_values(a.net.all_params());
  const VectorXd pb = nn::flatten_values(b.net.all_params());
  CHECK(pa.size() == pb.size());
  CHECK((pa.array() == pb.array()).all());
}

TEST_CASE("update moves the surrogate upward") {
  CounterRng rng = make_stream(51, StreamPurpose::kInit, 0);
  AgentNetwork net(toy_encoder(), toy_policy(), 1, 2, rng);
  auto batch = toy_batch(net, 16, 2, rng);
  for (auto& tr : batch) {
    const auto p = net.act(tr.obs, tr.a_max, nullptr);
    tr.log_prob = squashed_log_prob(tr.u, p.mean, p.log_std, tr.a_max);
    tr.ret = tr.advantage;
  }
  TrainHyperparams hp;
  hp.beta_mur = 0.0;
  hp.lr_policy = 1e-3;
  hp.normalize_advantages = false;
  Learner l(net, hp);
  const double before = ppo_objective(l.net, batch, hp, false).objective;
  ExperienceBatch eb{batch};
  const UpdateDiagnostics d = ppo_update(l, eb, hp, 1);
  CHECK_FALSE(d.aborted);
  CHECK(ppo_objective(l.net, batch, hp, false).objective > before);
}

TEST_CASE("hyperparameter validation") {
  TrainHyperparams hp;
  CHECK_NOTHROW(hp.validate());
  hp.clip = 1.0;
  CHECK_THROWS_AS(hp.validate(), Error);
  hp = {};
  hp.gamma = 0.0;
  CHECK_THROWS_AS(hp.validate(), Error);
  hp = {};
  hp.gae_lambda = 1.0;
  hp.gamma = 1.0;
  CHECK_NOTHROW(hp.validate());
}

namespace {

TrainingConfig tiny_training(int episodes) {
  TrainingConfig c;
  c.encoder = toy_encoder();
  c.policy = toy_policy();
  c.env.window = c.encoder.window;
  c.env.forecast_horizon = c.encoder.forecast_horizon;
  c.env.mixer_edge_width = c.policy.mixer_edge_width;
  c.episodes = episodes;
  c.seed = 5;
  c.train.epochs = 2;
  return c;
}

ReservoirEnv tiny_env(const TrainingConfig& c) {
  GridOptions g;
  g.rows = 2;
  g.cols = 2;
  NetworkTopology topo = build_topology(grid_spec(g));
  Scenario sc;
  sc.steps = 6;
  sc.seed = c.seed;
  DriverSeries d = synthetic_drivers(topo, sc.steps, c.seed);
  return ReservoirEnv(topo, c.env, d, sc);
}

}  // namespace

TEST_CASE("updates happen only at block boundaries") {
  const TrainingConfig c = tiny_training(1);
  Trainer t([&] { return tiny_env(c); }, c);
  const VectorXd before = nn::flatten_values(t.learner(0).net.all_params());
  t.run();
  CHECK(t.log().size() == 1);
  CHECK(t.updates().empty());
  const VectorXd after = nn::flatten_values(t.learner(0).net.all_params());
  CHECK((before.array() == after.array()).all());

  const TrainingConfig c4 = tiny_training(4);
  Trainer t4([&] { return tiny_env(c4); }, c4);
  t4.run();
  CHECK(t4.updates().size() == t4.agent_count());
}

TEST_CASE("training is deterministic and worker-count independent") {
  const TrainingConfig c = tiny_training(8);
  auto returns = [&](int workers) {
    TrainingConfig cw = c;
    cw.workers = workers;
    Trainer t([&] { return tiny_env(cw); }, cw);
    t.run();
    std::vector<double> out;
    for (const auto& r : t.log()) out.push_back(r.return_mean);
    return out;
  };
  const auto a = returns(1);
  const auto b = returns(1);
  const auto w = returns(3);
  CHECK(a == b);
  CHECK(a == w);
}
