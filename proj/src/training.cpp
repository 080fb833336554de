#include "rflock/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

namespace rflock {

void TrainingConfig::validate() const {
  encoder.validate();
  policy.validate();
  train.validate();
  env.validate();
  if (episodes < 1) throw Error("invalid_config", "episodes must be >= 1");
  if (workers < 1) throw Error("invalid_config", "workers must be >= 1");
  if (cv_window < 1) throw Error("invalid_config", "cv_window must be >= 1");
  if (env.window != encoder.window || env.forecast_horizon != encoder.forecast_horizon ||
      env.mixer_edge_width != policy.mixer_edge_width)
    throw Error("invalid_config", "environment observation sizes disagree with the encoder");
}

TrainingConfig desk_preset() {
  TrainingConfig c;
  c.encoder.gnn_widths = {16};
  c.encoder.lstm_hidden = 16;
  c.encoder.window = 4;
  c.encoder.forecast_horizon = 2;
  c.policy.trunk_widths = {64, 64};
  c.policy.value_widths = {64, 64};
  c.policy.mixer_hidden = 16;
  c.policy.mixer_edge_width = 2;
  c.env.window = c.encoder.window;
  c.env.forecast_horizon = c.encoder.forecast_horizon;
  c.env.mixer_edge_width = c.policy.mixer_edge_width;
  return c;
}

std::vector<AgentNetwork> build_agents(const NetworkTopology& topology, const EncoderConfig& enc,
                                       const PolicyConfig& pol, std::uint64_t seed) {
  std::vector<AgentNetwork> agents;
  agents.reserve(topology.size());
  for (std::size_t i = 0; i < topology.size(); ++i) {
    CounterRng rng = make_stream(seed, StreamPurpose::kInit, i);
    agents.emplace_back(enc, pol, static_cast<int>(topology.outlet_count(i)),
                        static_cast<int>(topology.neighbors(i).size()), rng);
  }
  return agents;
}

Rollout run_episode(ReservoirEnv& env, const std::vector<const AgentNetwork*>& agents,
                    std::uint64_t seed, std::uint64_t episode, bool deterministic, bool record,
                    const TrainHyperparams& hp) {
  env.reset(seed, episode);
  const NetworkTopology& topo = env.topology();
  const std::size_t n = topo.size();
  if (agents.size() != n) throw Error("dimension_mismatch", "one policy per reservoir required");

  std::vector<CounterRng> rngs;
  for (std::size_t i = 0; i < n; ++i) rngs.push_back(make_stream(seed, StreamPurpose::kPolicy, i, episode));

  Rollout out;
  out.log.agents = n;
  if (record) out.experience.resize(n);
  ActionSet actions;
  actions.releases.resize(n);

  while (!env.done()) {
    const double mult = env.penalty_multiplier();
    for (std::size_t i = 0; i < n; ++i) {
      const double a_max = topo.node(i).a_max;
      Observation obs = env.observe(i);
      PolicySample s = agents[i]->act(obs, a_max, deterministic ? nullptr : &rngs[i]);
      actions.releases[i] = s.release;
      if (record) {
        Transition tr;
        tr.z = ((s.u - s.mean).array() * (-s.log_std).array().exp()).matrix();
        tr.u = std::move(s.u);
        tr.log_prob = s.log_prob;
        tr.value = s.value;
        tr.ctx = env.coordination_context(i);
        tr.penalty_multiplier = mult;
        tr.a_max = a_max;
        tr.flow_scale = env.flow_scale();
        tr.obs = std::move(obs);
        out.experience[i].steps.push_back(std::move(tr));
      }
    }
    const StepOutcome o = env.step(actions);

    std::vector<char> flood(n, 0);
    for (std::size_t i : o.violations.flood_risk) flood[i] = 1;
    std::vector<double> level(n);
    double la = 0.0, ls = 0.0, lc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      level[i] = env.states()[i].h;
      la += o.losses[i].align;
      ls += o.losses[i].sep;
      lc += o.losses[i].coh;
      if (record) {
        auto& tr = out.experience[i].steps.back();
        tr.reward = o.rewards[i];
        tr.losses = o.losses[i];
      }
    }
    out.log.release.push_back(o.release_totals);
    out.log.reward.push_back(o.rewards);
    out.log.level.push_back(std::move(level));
    out.log.flood.push_back(std::move(flood));
    out.log.loss_align.push_back(la / static_cast<double>(n));
    out.log.loss_sep.push_back(ls / static_cast<double>(n));
    out.log.loss_coh.push_back(lc / static_cast<double>(n));
  }

  if (record) {
    for (auto& batch : out.experience) {
      std::vector<double> r, v;
      for (const auto& tr : batch.steps) {
        r.push_back(tr.reward);
        v.push_back(tr.value);
      }
      const GaeResult g = compute_gae(r, v, 0.0, hp.gamma, hp.gae_lambda);
      for (std::size_t k = 0; k < batch.steps.size(); ++k) {
        batch.steps[k].advantage = g.advantages[k];
        batch.steps[k].ret = g.returns[k];
      }
    }
  }
  return out;
}

void write_train_log_header(std::ostream& out) {
  out << "episode,return_mean,cv,safety_rate,loss_align,loss_sep,loss_coh\n";
}

void write_train_log_row(std::ostream& out, const EpisodeRecord& r) {
  char buf[512];
  char cv[64];
  if (r.cv) std::snprintf(cv, sizeof cv, "%.17g", *r.cv);
  else std::snprintf(cv, sizeof cv, "undefined");
  std::snprintf(buf, sizeof buf, "%d,%.17g,%s,%.17g,%.17g,%.17g,%.17g\n", r.episode, r.return_mean,
                cv, r.safety_rate, r.loss_align, r.loss_sep, r.loss_coh);
  out << buf;
}

Trainer::Trainer(EnvFactory make_env, TrainingConfig config)
    : make_env_(std::move(make_env)), config_(std::move(config)) {
  config_.validate();
  ReservoirEnv env = make_env_();
  auto nets = build_agents(env.topology(), config_.encoder, config_.policy, config_.seed);
  for (auto& net : nets) learners_.push_back(std::make_unique<Learner>(std::move(net), config_.train));
}

std::vector<const AgentNetwork*> Trainer::policies() const {
  std::vector<const AgentNetwork*> out;
  for (const auto& l : learners_) out.push_back(&l->net);
  return out;
}

Rollout Trainer::evaluate(std::uint64_t episode, bool deterministic) {
  ReservoirEnv env = make_env_();
  return run_episode(env, policies(), config_.seed, episode, deterministic, false, config_.train);
}

void Trainer::run(const std::function<void(const EpisodeRecord&)>& on_episode) {
  const int total = config_.episodes;
  const int u = config_.train.update_every;
  const auto policies_snapshot = policies();
  std::vector<ExperienceBatch> buffers(learners_.size());
  const int workers = config_.workers;
  std::vector<ReservoirEnv> envs;
  for (int w = 0; w < workers; ++w) envs.push_back(make_env_());

  int e = static_cast<int>(log_.size()) + 1;
  while (e <= total) {
    const int block_end = std::min(total, ((e - 1) / u + 1) * u);
    const int count = block_end - e + 1;
    std::vector<Rollout> rollouts(static_cast<std::size_t>(count));
    const int stride = count == 1 ? 1 : workers;
    auto work = [&](int w) {
      for (int k = w; k < count; k += stride)
        rollouts[static_cast<std::size_t>(k)] =
            run_episode(envs[static_cast<std::size_t>(w)], policies_snapshot, config_.seed,
                        static_cast<std::uint64_t>(e + k), false, true, config_.train);
    };
    if (workers == 1 || count == 1) {
      work(0);
    } else {
      std::vector<std::thread> threads;
      for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
      for (auto& t : threads) t.join();
    }

    for (int k = 0; k < count; ++k) {
      Rollout& r = rollouts[static_cast<std::size_t>(k)];
      EpisodeRecord rec;
      rec.episode = e + k;
      rec.return_mean = r.log.episode_return();
      returns_.push_back(rec.return_mean);
      rec.cv = learning_curve_cv(returns_, std::min(config_.cv_window, returns_.size()));
      rec.safety_rate = safety_rate(r.log);
      rec.flood_steps = r.log.flood_steps();
      const double steps = static_cast<double>(r.log.steps());
      for (std::size_t s = 0; s < r.log.steps(); ++s) {
        rec.loss_align += r.log.loss_align[s] / steps;
        rec.loss_sep += r.log.loss_sep[s] / steps;
        rec.loss_coh += r.log.loss_coh[s] / steps;
      }
      for (std::size_t i = 0; i < buffers.size(); ++i)
        for (auto& tr : r.experience[i].steps) buffers[i].steps.push_back(std::move(tr));
      log_.push_back(rec);
      if (on_episode) on_episode(rec);
    }

    if (block_end % u == 0) {
      auto update = [&](std::size_t i) {
        return ppo_update(*learners_[i], buffers[i], config_.train,
                          stream_key(config_.seed, StreamPurpose::kMinibatch, i,
                                     static_cast<std::uint64_t>(block_end)));
      };
      std::vector<UpdateDiagnostics> diags(learners_.size());
      if (workers == 1) {
        for (std::size_t i = 0; i < learners_.size(); ++i) diags[i] = update(i);
      } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w)
          threads.emplace_back([&, w] {
            for (std::size_t i = static_cast<std::size_t>(w); i < learners_.size();
                 i += static_cast<std::size_t>(workers))
              diags[i] = update(i);
          });
        for (auto& t : threads) t.join();
      }
      for (auto& d : diags) updates_.push_back(std::move(d));
      for (auto& b : buffers) b.steps.clear();
    }
    e = block_end + 1;
  }
}

}  // namespace rflock
