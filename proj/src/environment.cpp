#include "rflock/environment.hpp"

#include <algorithm>
#include <cmath>

namespace rflock {

void EnvConfig::validate() const {
  if (!(dt_s > 0.0)) throw Error("invalid_config", "dt_s must be positive");
  uncertainty.validate();
  coordination.validate();
  reward.validate();
  static_weights.validate();
  if (!(f_eco_m3s >= 0.0)) throw Error("invalid_config", "f_eco must be >= 0");
  if (window < 1 || forecast_horizon < 0 || mixer_edge_width < 1)
    throw Error("invalid_config", "observation sizes must be positive");
  for (double m : penalty_multiplier)
    if (!(m >= 0.0)) throw Error("invalid_config", "penalty multipliers must be >= 0");
}

ReservoirEnv::ReservoirEnv(NetworkTopology topology, EnvConfig config, DriverSeries drivers,
                           Scenario scenario, std::shared_ptr<GuidanceClient> client)
    : topology_(std::move(topology)),
      config_(std::move(config)),
      drivers_(std::move(drivers)),
      scenario_(std::move(scenario)) {
  config_.timings.dt_s = config_.dt_s;
  config_.validate();
  drivers_.validate(topology_.size());
  if (drivers_.steps() == 0) throw Error("invalid_config", "driver series is empty");
  horizon_ = std::min<int>(scenario_.steps, static_cast<int>(drivers_.steps()));
  flow_scale_ = config_.flow_scale_m3s;
  if (!(flow_scale_ > 0.0)) {
    flow_scale_ = 0.0;
    for (const auto& n : topology_.nodes()) flow_scale_ = std::max(flow_scale_, n.a_max);
  }
  if (!client)
    client = std::make_shared<GuidanceClient>(
        default_provider(Rulebook::builtin(), config_.timings), Rulebook::builtin(), config_.timings);
  guidance_ = GuidanceLoop(std::move(client), config_.timings);
  reset(scenario_.seed, 0);
}

void ReservoirEnv::reset(std::uint64_t seed, std::uint64_t episode) {
  seed_ = seed;
  episode_ = episode;
  t_ = 0;
  const std::size_t n = topology_.size();
  std::vector<ReservoirState> init(n);
  for (std::size_t i = 0; i < n; ++i) {
    init[i].h = topology_.node(i).initial_level;
    init[i].weather = drivers_.weather[0][i];
    init[i].demand = drivers_.demand[0][i];
  }
  states_.assign(1, std::move(init));
  totals_.clear();
  delay_ = DelayLine(topology_);
  level_noise_.clear();
  transfer_noise_.clear();
  for (std::size_t i = 0; i < n; ++i)
    level_noise_.push_back(make_stream(seed, StreamPurpose::kLevelNoise, i, episode));
  for (std::size_t c = 0; c < topology_.channels().size(); ++c)
    transfer_noise_.push_back(make_stream(seed, StreamPurpose::kTransferNoise, c, episode));
  guidance_.reset();
  refresh_directive();
}

void ReservoirEnv::refresh_directive() {
  if (!config_.guidance || done()) return;
  const auto pending = schedule_events(scenario_, t_);
  guidance_.advance(t_, pending);
}

const GuidanceDirective* ReservoirEnv::directive() const {
  return config_.guidance ? guidance_.current() : nullptr;
}

CoordinationWeights ReservoirEnv::active_weights() const {
  const GuidanceDirective* d = directive();
  return d ? d->weights : config_.static_weights;
}

double ReservoirEnv::penalty_multiplier() const {
  const GuidanceDirective* d = directive();
  return config_.penalty_multiplier[static_cast<std::size_t>(d ? d->mode : Mode::kStrategic)];
}

const ReservoirState& ReservoirEnv::state_at(std::size_t i, int step) const {
  const int k = std::clamp(step, 0, static_cast<int>(states_.size()) - 1);
  return states_[static_cast<std::size_t>(k)][i];
}

double ReservoirEnv::previous_total(std::size_t i, int lag) const {
  const int k = static_cast<int>(totals_.size()) - lag;
  if (k < 0) return 0.0;
  return totals_[static_cast<std::size_t>(k)][i];
}

std::vector<double> ReservoirEnv::channel_alphas() const {
  const auto& s = states();
  std::vector<double> alphas(topology_.channels().size());
  for (std::size_t c = 0; c < alphas.size(); ++c) {
    const Channel& ch = topology_.channel(c);
    const double ge = env_loss(s[ch.from].weather, s[ch.to].weather, config_.uncertainty.env);
    const double gh = human_loss(s[ch.from].demand, s[ch.to].demand, config_.uncertainty.human);
    alphas[c] = channel_efficiency(ch.alpha_nominal, ge, gh, config_.uncertainty.epsilon_floor);
  }
  return alphas;
}

double ReservoirEnv::estimated_alpha(std::size_t i, std::size_t j) const {
  const Channel& ch = topology_.channel(topology_.channel_between(i, j));
  const auto& s = states();
  const double ge = env_loss(s[ch.from].weather, s[ch.to].weather, config_.uncertainty.env);
  return update_efficiency_estimate(ch.alpha_nominal, ge, directive(),
                                    config_.uncertainty.epsilon_floor);
}

VectorXd ReservoirEnv::normalized_state(std::size_t i, const ReservoirState& s) const {
  const ReservoirNode& node = topology_.node(i);
  VectorXd v(ReservoirState::kDim);
  v << (s.h - node.h_min) / (node.h_max - node.h_min), s.q_in / flow_scale_, s.q_out / flow_scale_,
      s.weather.temp_c / 40.0, s.weather.precip_mm / 20.0, s.weather.humidity, s.demand / flow_scale_;
  return v;
}

CoordinationContext ReservoirEnv::coordination_context(std::size_t i) const {
  CoordinationContext ctx;
  const auto& nbrs = topology_.neighbors(i);
  const WeatherVector& self = states()[i].weather;
  std::vector<NeighborSignal> signals;
  std::vector<double> levels;
  for (std::size_t j : nbrs) {
    const int lag = std::max(1, topology_.channel(topology_.channel_between(i, j)).delay_steps);
    ctx.neighbor_totals.push_back(previous_total(j, lag));
    const ReservoirState& sj = state_at(j, t_ + 1 - lag);
    signals.push_back({topology_.distance(i, j), sj.weather});
    levels.push_back(sj.h);
  }
  if (!nbrs.empty()) {
    const auto w = coordination_weights(self, signals, config_.coordination);
    ctx.weights.assign(w.data(), w.data() + w.size());
    ctx.rho = adaptive_radius(levels, config_.coordination.rho_base, config_.coordination.cv_cap);
  } else {
    ctx.rho = config_.coordination.rho_base;
  }
  const auto& region = topology_.region_members(i);
  for (std::size_t j : region)
    if (j != i) ctx.region_others.push_back(previous_total(j));
  ctx.region_size = region.size();
  ctx.f_eco = config_.f_eco_m3s / flow_scale_;
  ctx.lambda_eco = config_.coordination.lambda_eco;
  ctx.full_target = config_.coordination.cohesion_full_target;
  ctx.kappa = active_weights();
  return ctx;
}

Observation ReservoirEnv::observe(std::size_t i) const {
  Observation o;
  const auto& cur = states();
  o.own = normalized_state(i, cur[i]);

  for (std::size_t j : topology_.neighbors(i)) {
    const Channel& ch = topology_.channel(topology_.channel_between(i, j));
    VectorXd m(ReservoirState::kDim + kEdgeFeatureDim);
    m.head(ReservoirState::kDim) = normalized_state(j, state_at(j, t_ - ch.delay_steps));
    m[ReservoirState::kDim] = estimated_alpha(i, j);
    m[ReservoirState::kDim + 1] = ch.distance_km / 100.0;
    o.neighbors.push_back(std::move(m));
  }

  const int k = config_.window;
  for (int s = t_ - k + 1; s <= t_; ++s)
    o.history.push_back(s < 0 ? VectorXd::Zero(ReservoirState::kDim)
                              : normalized_state(i, states_[static_cast<std::size_t>(s)][i]));

  const int hz = config_.forecast_horizon;
  o.forecast.resize(hz * WeatherVector::kDim);
  CounterRng fr = make_stream(seed_, StreamPurpose::kForecast, i,
                              (episode_ << 20) + static_cast<std::uint64_t>(t_));
  const int last = static_cast<int>(drivers_.steps()) - 1;
  for (int h = 0; h < hz; ++h) {
    const WeatherVector& w = drivers_.weather[static_cast<std::size_t>(std::min(t_ + 1 + h, last))][i];
    double f[3] = {w.temp_c / 40.0, w.precip_mm / 20.0, w.humidity};
    for (int c = 0; c < 3; ++c) {
      if (scenario_.forecast_noise > 0.0) f[c] += scenario_.forecast_noise * standard_normal(fr);
      o.forecast[h * 3 + c] = f[c];
    }
  }

  const CoordinationContext ctx = coordination_context(i);
  const CoordinationLosses l = evaluate_coordination(ctx, previous_total(i));
  const auto outlets = static_cast<Eigen::Index>(topology_.outlet_count(i));
  o.coord_grads = pack_coordination_gradients(VectorXd::Constant(outlets, l.grad_align),
                                              VectorXd::Constant(outlets, l.grad_sep),
                                              VectorXd::Constant(outlets, l.grad_coh),
                                              config_.mixer_edge_width);
  return o;
}

StepOutcome ReservoirEnv::step(const ActionSet& actions) {
  if (done()) throw Error("episode_finished", "step() called after the episode ended");
  const std::size_t n = topology_.size();
  const auto ts = static_cast<std::size_t>(t_);
  StepOutcome out;

  std::vector<CoordinationContext> contexts;
  contexts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) contexts.push_back(coordination_context(i));

  const auto alphas = channel_alphas();
  const auto nc = static_cast<Eigen::Index>(topology_.channels().size());
  out.flows.departing = VectorXd::Zero(nc);
  out.flows.mouth = VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const VectorXd& r = actions.releases.at(i);
    if (topology_.is_sink(i)) {
      out.flows.mouth[static_cast<Eigen::Index>(i)] = r.sum();
      continue;
    }
    const auto& outs = topology_.out_channels(i);
    for (std::size_t k = 0; k < outs.size(); ++k) {
      const double a = std::clamp(r[static_cast<Eigen::Index>(k)], 0.0, topology_.node(i).a_max);
      const TransferDraw d = sample_transfer(a, alphas[outs[k]], config_.uncertainty.sigma_base,
                                             transfer_noise_[outs[k]],
                                             config_.uncertainty.flow_scale_m3s);
      out.flows.departing[static_cast<Eigen::Index>(outs[k])] = d.flow;
      out.clamped_transfers += d.clamped;
    }
  }
  out.flows.arriving = delay_.push(out.flows.departing);

  const auto& cur = states();
  DynamicsResult dyn = step_dynamics(topology_, cur, actions, out.flows, drivers_.inflow[ts],
                                     config_.dt_s, config_.uncertainty.sigma_eta, level_noise_);
  const std::size_t next_t = std::min(ts + 1, drivers_.steps() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dyn.next[i].weather = drivers_.weather[next_t][i];
    dyn.next[i].demand = drivers_.demand[next_t][i];
  }

  const GuidanceDirective* dir = directive();
  out.rewards.resize(n);
  out.terms.resize(n);
  out.release_totals.resize(n);
  out.losses.resize(n);
  std::vector<double> totals(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ReservoirNode& node = topology_.node(i);
    const double q = actions.total(i);
    const double eco_share = config_.f_eco_m3s / static_cast<double>(topology_.region_members(i).size());
    out.terms[i] = compute_reward(node, dyn.next[i].h, q, cur[i].demand, eco_share, dir, config_.reward);
    out.rewards[i] = out.terms[i].total();
    out.release_totals[i] = q;
    totals[i] = q / flow_scale_;
    out.losses[i] = evaluate_coordination(contexts[i], totals[i]);
  }
  out.violations = check_constraints(topology_, dyn.next);

  states_.push_back(std::move(dyn.next));
  totals_.push_back(std::move(totals));
  ++t_;
  refresh_directive();
  return out;
}

}  // namespace rflock
