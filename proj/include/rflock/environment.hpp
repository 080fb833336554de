#ifndef RFLOCK_ENVIRONMENT_HPP
#define RFLOCK_ENVIRONMENT_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "rflock/agent.hpp"
#include "rflock/guidance.hpp"
#include "rflock/murmuration.hpp"
#include "rflock/network.hpp"
#include "rflock/rng.hpp"
#include "rflock/scenario.hpp"
#include "rflock/uncertainty.hpp"

namespace rflock {

struct EnvConfig {
  double dt_s = 3600.0;
  UncertaintyParams uncertainty;
  CoordinationParams coordination;
  RewardConfig reward;
  ModeTimings timings;
  /// Minimum collective discharge per ecological region [m³/s].
  double f_eco_m3s = 60.0;
  /// Mode switching and reward shaping from directives. When off, the
  /// static weights apply throughout and no shaping bonus is paid.
  bool guidance = true;
  CoordinationWeights static_weights;
  /// β_mur multipliers for strategic, tactical, operational directives.
  std::array<double, 3> penalty_multiplier{1.0, 2.0, 4.0};
  /// Release normalization [m³/s]; 0 picks the largest a_max.
  double flow_scale_m3s = 0.0;
  int window = 24;
  int forecast_horizon = 6;
  int mixer_edge_width = 4;

  void validate() const;
};

struct StepOutcome {
  std::vector<double> rewards;
  std::vector<RewardTerms> terms;
  std::vector<double> release_totals;  // [m³/s]
  std::vector<CoordinationLosses> losses;
  ViolationReport violations;
  ChannelFlows flows;
  std::size_t clamped_transfers = 0;
};

/**
 * Episode simulator over a fixed topology and driver series. Owns the
 * level/transfer noise streams, in-transit flows, directive state and the
 * per-step histories the agents observe.
 */
class ReservoirEnv {
 public:
  ReservoirEnv(NetworkTopology topology, EnvConfig config, DriverSeries drivers, Scenario scenario,
               std::shared_ptr<GuidanceClient> client = nullptr);

  /// Restores initial levels and derives every noise stream from
  /// (seed, episode).
  void reset(std::uint64_t seed, std::uint64_t episode);
  StepOutcome step(const ActionSet& actions);

  int t() const { return t_; }
  int horizon() const { return horizon_; }
  bool done() const { return t_ >= horizon_; }

  Observation observe(std::size_t i) const;
  CoordinationContext coordination_context(std::size_t i) const;
  /// Normalized release total S_i of the previous step (0 before the first).
  double previous_total(std::size_t i, int lag = 1) const;

  const NetworkTopology& topology() const { return topology_; }
  const EnvConfig& config() const { return config_; }
  const std::vector<ReservoirState>& states() const { return states_.back(); }
  const DriverSeries& drivers() const { return drivers_; }
  const Scenario& scenario() const { return scenario_; }
  const GuidanceDirective* directive() const;
  CoordinationWeights active_weights() const;
  double penalty_multiplier() const;
  double flow_scale() const { return flow_scale_; }
  const GuidanceLoop& guidance() const { return guidance_; }

  /// Physical α per channel for the current step.
  std::vector<double> channel_alphas() const;
  /// Agent-side α̂ for the channel between i and j.
  double estimated_alpha(std::size_t i, std::size_t j) const;

  VectorXd normalized_state(std::size_t i, const ReservoirState& s) const;

 private:
  void refresh_directive();
  const ReservoirState& state_at(std::size_t i, int step) const;

  NetworkTopology topology_;
  EnvConfig config_;
  DriverSeries drivers_;
  Scenario scenario_;
  GuidanceLoop guidance_;
  double flow_scale_ = 1.0;
  int horizon_ = 0;

  int t_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t episode_ = 0;
  std::vector<std::vector<ReservoirState>> states_;  // states_[k] = states at step k
  std::vector<std::vector<double>> totals_;          // normalized S_i per step
  DelayLine delay_;
  std::vector<CounterRng> level_noise_;
  std::vector<CounterRng> transfer_noise_;
};

}  // namespace rflock

#endif  // RFLOCK_ENVIRONMENT_HPP
