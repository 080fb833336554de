#include "rflock/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rflock {

void TrainHyperparams::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw Error("invalid_hyperparams", "clip must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("invalid_hyperparams", "gamma must lie in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0))
    throw Error("invalid_hyperparams", "gae_lambda must lie in (0, 1]");
  if (!(lr_policy > 0.0 && lr_value > 0.0))
    throw Error("invalid_hyperparams", "learning rates must be positive");
  if (batch_size < 1 || epochs < 1 || update_every < 1)
    throw Error("invalid_hyperparams", "batch, epochs and update_every must be >= 1");
  if (!(beta_mur >= 0.0)) throw Error("invalid_hyperparams", "beta_mur must be >= 0");
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      double bootstrap, double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw Error("dimension_mismatch", "rewards and values differ in length");
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap;
  double acc = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double delta = rewards[t] + gamma * next_value - values[t];
    acc = delta + gamma * lambda * acc;
    out.advantages[t] = acc;
    out.returns[t] = acc + values[t];
    next_value = values[t];
  }
  return out;
}

void ExperienceBatch::validate() const {
  if (steps.empty()) throw Error("empty_batch", "experience batch is empty");
  for (const auto& s : steps)
    if (!std::isfinite(s.advantage))
      throw Error("non_finite_advantage", "experience batch holds a non-finite advantage");
}

void normalize_advantages(std::span<Transition> steps) {
  if (steps.empty()) return;
  double mean = 0.0;
  for (const auto& s : steps) mean += s.advantage;
  mean /= static_cast<double>(steps.size());
  double var = 0.0;
  for (const auto& s : steps) var += (s.advantage - mean) * (s.advantage - mean);
  const double sd = std::sqrt(var / static_cast<double>(steps.size()));
  const double denom = std::max(sd, 1e-8);
  for (auto& s : steps) s.advantage = (s.advantage - mean) / denom;
}

namespace {

ObjectiveValue objective_on(AgentNetwork& net, const ObservationBatch& obs,
                            std::span<const Transition* const> batch, const TrainHyperparams& hp,
                            bool accumulate) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  AgentNetwork::PolicyCache cache;
  const MatrixXd enc = net.encode(obs, accumulate ? &cache.encode : nullptr);
  const AgentNetwork::PolicyOutput p = net.policy(enc, obs.coord_grads, accumulate ? &cache : nullptr);
  const Eigen::Index k_dim = p.mean.rows();
  const double inv_b = 1.0 / static_cast<double>(b);

  MatrixXd d_mean, d_log_std;  // ∂(−J)
  if (accumulate) {
    d_mean = MatrixXd::Zero(k_dim, b);
    d_log_std = MatrixXd::Zero(k_dim, b);
  }

  ObjectiveValue out;
  std::size_t clipped = 0;
  for (Eigen::Index c = 0; c < b; ++c) {
    const Transition& tr = *batch[static_cast<std::size_t>(c)];
    const VectorXd mu = p.mean.col(c);
    const VectorXd ls = p.log_std.col(c);
    const double logp = squashed_log_prob(tr.u, mu, ls, tr.a_max);
    const double ratio = std::exp(logp - tr.log_prob);
    const double a = tr.advantage;
    const double clipped_ratio = std::clamp(ratio, 1.0 - hp.clip, 1.0 + hp.clip);
    out.surrogate += std::min(ratio * a, clipped_ratio * a) * inv_b;
    if (std::abs(ratio - 1.0) > hp.clip) ++clipped;
    const bool flat = (a >= 0.0 && ratio > 1.0 + hp.clip) || (a < 0.0 && ratio < 1.0 - hp.clip);

    if (accumulate && !flat) {
      const double g = a * ratio * inv_b;
      for (Eigen::Index k = 0; k < k_dim; ++k) {
        const double inv_var = std::exp(-2.0 * ls[k]);
        const double diff = tr.u[k] - mu[k];
        d_mean(k, c) -= g * diff * inv_var;
        d_log_std(k, c) -= g * (diff * diff * inv_var - 1.0);
      }
    }

    const double weight = hp.beta_mur * tr.penalty_multiplier;
    if (weight != 0.0) {
      double total = 0.0;
      VectorXd d_total_du(k_dim);
      for (Eigen::Index k = 0; k < k_dim; ++k) {
        const double u = mu[k] + std::exp(ls[k]) * tr.z[k];
        const double th = std::tanh(u);
        total += squash(u, tr.a_max);
        d_total_du[k] = 0.5 * tr.a_max * (1.0 - th * th) / tr.flow_scale;
      }
      total /= tr.flow_scale;
      const CoordinationLosses l = evaluate_coordination(tr.ctx, total);
      out.penalty += weight * l.total * inv_b;
      if (accumulate) {
        const double g = weight * total_gradient(l, tr.ctx.kappa) * inv_b;
        for (Eigen::Index k = 0; k < k_dim; ++k) {
          d_mean(k, c) += g * d_total_du[k];
          d_log_std(k, c) += g * d_total_du[k] * std::exp(ls[k]) * tr.z[k];
        }
      }
    }
  }
  out.objective = out.surrogate - out.penalty;
  out.clip_fraction = static_cast<double>(clipped) * inv_b;
  if (accumulate) net.policy_backward(obs, cache, d_mean, d_log_std);
  return out;
}

ObservationBatch stack_batch(std::span<const Transition* const> batch) {
  std::vector<const Observation*> obs;
  obs.reserve(batch.size());
  for (const auto* t : batch) obs.push_back(&t->obs);
  return ObservationBatch::stack(obs);
}

}  // namespace

ObjectiveValue ppo_objective(AgentNetwork& net, std::span<const Transition> batch,
                             const TrainHyperparams& hp, bool accumulate_grads) {
  if (batch.empty()) throw Error("empty_batch", "experience batch is empty");
  std::vector<const Transition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  return objective_on(net, stack_batch(ptrs), ptrs, hp, accumulate_grads);
}

Learner::Learner(AgentNetwork network, const TrainHyperparams& hp) : net(std::move(network)) {
  policy_opt = nn::Adam<double>(net.policy_params(), hp.lr_policy);
  value_opt = nn::Adam<double>(net.value_params(), hp.lr_value);
}

UpdateDiagnostics ppo_update(Learner& learner, ExperienceBatch& batch, const TrainHyperparams& hp,
                             std::uint64_t shuffle_key) {
  batch.validate();
  if (hp.normalize_advantages) normalize_advantages(batch.steps);
  AgentNetwork& net = learner.net;
  auto policy_params = net.policy_params();
  auto value_params = net.value_params();

  const std::size_t n = batch.size();
  const std::size_t mb = std::min<std::size_t>(n, static_cast<std::size_t>(hp.batch_size));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng shuffle(shuffle_key);

  // With a single minibatch the stacked observations never change.
  std::vector<const Transition*> all;
  for (const auto& t : batch.steps) all.push_back(&t);
  ObservationBatch all_obs;
  if (mb == n) all_obs = stack_batch(all);

  UpdateDiagnostics diag;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    if (mb < n) std::shuffle(order.begin(), order.end(), shuffle);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      std::vector<const Transition*> part;
      for (std::size_t k = start; k < end; ++k) part.push_back(&batch.steps[order[k]]);
      const ObservationBatch obs = mb == n ? all_obs : stack_batch(part);

      nn::zero_grads(policy_params);
      const ObjectiveValue v = objective_on(net, obs, part, hp, true);
      if (!nn::grads_finite(policy_params) || !std::isfinite(v.objective)) {
        diag.aborted = true;
        diag.message = "non-finite policy gradient at epoch " + std::to_string(epoch);
        return diag;
      }
      learner.policy_opt.step();

      // Value regression on the detached encoding.
      nn::zero_grads(value_params);
      const MatrixXd enc = net.encode(obs);
      nn::Mlp<double>::Cache vc;
      const MatrixXd pred = net.value(enc, &vc);
      MatrixXd dv(1, pred.cols());
      double vloss = 0.0;
      for (Eigen::Index c = 0; c < pred.cols(); ++c) {
        const double err = pred(0, c) - part[static_cast<std::size_t>(c)]->ret;
        vloss += 0.5 * err * err;
        dv(0, c) = err / static_cast<double>(pred.cols());
      }
      net.value_backward(vc, dv);
      if (!nn::grads_finite(value_params)) {
        diag.aborted = true;
        diag.message = "non-finite value gradient at epoch " + std::to_string(epoch);
        return diag;
      }
      learner.value_opt.step();

      diag.objective = v.objective;
      diag.penalty = v.penalty;
      diag.clip_fraction = v.clip_fraction;
      diag.value_loss = vloss / static_cast<double>(pred.cols());
      ++diag.minibatches;
    }
  }
  return diag;
}

}  // namespace rflock
