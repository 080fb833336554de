#ifndef RFLOCK_PPO_HPP
#define RFLOCK_PPO_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rflock/agent.hpp"
#include "rflock/murmuration.hpp"
#include "rflock/nn.hpp"

namespace rflock {

struct TrainHyperparams {
  double lr_policy = 3e-4;
  double lr_value = 1e-3;
  double clip = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.99;
  int batch_size = 512;
  int epochs = 10;
  int update_every = 4;   // episodes between updates
  double beta_mur = 0.05;
  bool normalize_advantages = true;

  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// δ_t = r_t + γ V_{t+1} − V_t,  A_t = δ_t + γλ A_{t+1}; V_T = bootstrap.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      double bootstrap, double gamma, double lambda);

/// One agent-step of experience.
struct Transition {
  Observation obs;
  VectorXd u;  // pre-squash action
  VectorXd z;  // (u − mean_old) / std_old, replayed for the penalty path
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
  CoordinationContext ctx;
  double penalty_multiplier = 1.0;
  CoordinationLosses losses;  // at the executed action
  double a_max = 1.0;
  double flow_scale = 1.0;
};

struct ExperienceBatch {
  std::vector<Transition> steps;

  std::size_t size() const { return steps.size(); }
  /// Errors: empty_batch, non_finite_advantage.
  void validate() const;
};

/// Normalizes advantages to mean 0, std 1 (std guard 1e-8).
void normalize_advantages(std::span<Transition> steps);

struct ObjectiveValue {
  double objective = 0.0;  // surrogate − penalty
  double surrogate = 0.0;
  double penalty = 0.0;
  double clip_fraction = 0.0;
};

/**
 * J = mean_b min(r_b A_b, clip(r_b, 1 ± ε) A_b) − β_mur mean_b m_b 𝓛_total(a_b(θ)),
 * with a_b(θ) = squash(mean + std ⊙ z_b). With accumulate_grads the
 * gradient of −J is added to the policy parameters' grad buffers.
 */
ObjectiveValue ppo_objective(AgentNetwork& net, std::span<const Transition> batch,
                             const TrainHyperparams& hp, bool accumulate_grads);

struct UpdateDiagnostics {
  double objective = 0.0;
  double penalty = 0.0;
  double clip_fraction = 0.0;
  double value_loss = 0.0;
  int minibatches = 0;
  bool aborted = false;
  std::string message;
};

/// Policy and value optimizers bound to one network. The network must not
/// move while a Learner refers to it.
struct Learner {
  AgentNetwork net;
  nn::Adam<double> policy_opt;
  nn::Adam<double> value_opt;

  Learner(AgentNetwork network, const TrainHyperparams& hp);
  Learner(const Learner&) = delete;
  Learner& operator=(const Learner&) = delete;
};

/// Clipped-surrogate ascent (lr_policy) and value regression (lr_value) for
/// `epochs` passes over shuffled minibatches. A non-finite gradient aborts
/// the remaining update and is reported in the diagnostics.
UpdateDiagnostics ppo_update(Learner& learner, ExperienceBatch& batch, const TrainHyperparams& hp,
                             std::uint64_t shuffle_key);

}  // namespace rflock

#endif  // RFLOCK_PPO_HPP
