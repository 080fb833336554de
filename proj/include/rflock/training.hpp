#ifndef RFLOCK_TRAINING_HPP
#define RFLOCK_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "rflock/agent.hpp"
#include "rflock/environment.hpp"
#include "rflock/metrics.hpp"
#include "rflock/ppo.hpp"

namespace rflock {

struct TrainingConfig {
  EncoderConfig encoder;
  PolicyConfig policy;
  TrainHyperparams train;
  EnvConfig env;
  int episodes = 2000;
  std::uint64_t seed = 1;
  int workers = 1;
  std::size_t cv_window = 100;

  void validate() const;
};

/// Encoder/policy sizes small enough for thousands of episodes on one core.
TrainingConfig desk_preset();

struct EpisodeRecord {
  int episode = 0;
  double return_mean = 0.0;
  std::optional<double> cv;  // trailing-window CV of return_mean so far
  double safety_rate = 1.0;
  double loss_align = 0.0;
  double loss_sep = 0.0;
  double loss_coh = 0.0;
  std::size_t flood_steps = 0;
};

struct Rollout {
  EpisodeLog log;
  std::vector<ExperienceBatch> experience;  // per agent; empty unless recorded
};

/// Runs one episode with per-agent policies. Policy noise comes from
/// stream (seed, policy, agent, episode); `deterministic` takes the mean.
Rollout run_episode(ReservoirEnv& env, const std::vector<const AgentNetwork*>& agents,
                    std::uint64_t seed, std::uint64_t episode, bool deterministic,
                    bool record, const TrainHyperparams& hp);

/// One network per reservoir, sized by its neighbor and outlet counts.
std::vector<AgentNetwork> build_agents(const NetworkTopology& topology, const EncoderConfig& enc,
                                       const PolicyConfig& pol, std::uint64_t seed);

void write_train_log_header(std::ostream& out);
void write_train_log_row(std::ostream& out, const EpisodeRecord& r);

/**
 * Decentralized training loop: rollouts with coordination contexts and
 * directive updates, GAE per agent, and a PPO update of every agent after
 * each block of `update_every` episodes. Rollouts inside a block may run on
 * parallel workers against the frozen policies; results merge by episode
 * index, so the log does not depend on the worker count.
 */
class Trainer {
 public:
  using EnvFactory = std::function<ReservoirEnv()>;

  Trainer(EnvFactory make_env, TrainingConfig config);

  /// Runs the remaining episodes; `on_episode` sees every record in order.
  void run(const std::function<void(const EpisodeRecord&)>& on_episode = {});

  const std::vector<EpisodeRecord>& log() const { return log_; }
  const std::vector<UpdateDiagnostics>& updates() const { return updates_; }
  std::size_t agent_count() const { return learners_.size(); }
  Learner& learner(std::size_t i) { return *learners_[i]; }
  std::vector<const AgentNetwork*> policies() const;
  const TrainingConfig& config() const { return config_; }

  /// Deterministic evaluation rollout with the current policies.
  Rollout evaluate(std::uint64_t episode, bool deterministic = true);

 private:
  EnvFactory make_env_;
  TrainingConfig config_;
  std::vector<std::unique_ptr<Learner>> learners_;
  std::vector<EpisodeRecord> log_;
  std::vector<double> returns_;
  std::vector<UpdateDiagnostics> updates_;
};

}  // namespace rflock

#endif  // RFLOCK_TRAINING_HPP
